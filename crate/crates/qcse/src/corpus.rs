//! Dataset manifests, feature persistence, and a synthetic parallel
//! corpus generator.
//!
//! The generator is a test fixture, not a speech synthesizer. It realizes
//! the acoustic contrasts that separate the two classes: normal speech is
//! a pitched impulse train through a formant resonator bank (harmonic
//! comb in the low band), whispered speech is white noise through the
//! same bank with formants shifted up, widened, and attenuated. Every
//! utterance is reproducible from the master seed.

use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use thiserror::Error;

use crate::features::{FeatureKind, FeatureMatrix, NormStats};
use crate::rng::{derive_seed, SeededRng};
use crate::signal::{write_wav, AudioBuffer, SignalError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: manifest is empty")]
    EmptyManifest { path: String },
    #[error("{path}: missing or malformed header (expected 'path,label,split')")]
    BadHeader { path: String },
    #[error("{path}: row {row}: expected 3 fields 'path,label,split', got {fields}")]
    MalformedRow {
        path: String,
        row: usize,
        fields: usize,
    },
    #[error("{path}: row {row}: unknown label '{value}' (expected 'normal' or 'whisper')")]
    UnknownLabel {
        path: String,
        row: usize,
        value: String,
    },
    #[error("{path}: row {row}: unknown split '{value}' (expected 'train' or 'test')")]
    UnknownSplit {
        path: String,
        row: usize,
        value: String,
    },
    #[error("{path}: row {row}: empty audio path")]
    EmptyPath { path: String, row: usize },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("invalid synth config: {0}")]
    BadSynthConfig(String),
    #[error("utterance counts must be positive")]
    ZeroCount,
    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: String,
        expected: [u8; 4],
        found: [u8; 4],
    },
    #[error("{path}: unsupported version {found} (expected {expected})")]
    BadVersion {
        path: String,
        expected: u8,
        found: u8,
    },
    #[error("{path}: truncated file: expected {expected} bytes, found {actual}")]
    Truncated {
        path: String,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: invalid feature kind byte {value}")]
    BadKindByte { path: String, value: u8 },
}

// --- labels, splits, manifests ----------------------------------------------

/// Utterance class. Normal is class 0, whisper class 1; prediction ties
/// break toward normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Normal,
    Whisper,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Whisper => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Label::Normal
        } else {
            Label::Whisper
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Whisper => "whisper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One manifest row: where the audio lives, its class, and its split.
/// Paths are stored as written; relative paths are resolved against the
/// manifest's own directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: Label,
    pub split: Split,
}

impl ManifestEntry {
    /// Resolve the audio path against the directory of the manifest file.
    pub fn resolve(&self, manifest_path: &Path) -> PathBuf {
        let p = Path::new(&self.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(p)
        }
    }
}

/// Parse a `path,label,split` CSV with header. Unknown labels or splits
/// are rejected with the offending row number.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, CorpusError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| CorpusError::Io {
            path: path_str.clone(),
            source,
        })?;

    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((_, line)) => break line,
            None => {
                return Err(CorpusError::EmptyManifest {
                    path: path_str.clone(),
                })
            }
        }
    };
    if header.trim() != "path,label,split" {
        return Err(CorpusError::BadHeader { path: path_str });
    }

    let mut entries = Vec::new();
    for (line_idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line_idx + 1; // 1-based line number in the file
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CorpusError::MalformedRow {
                path: path_str,
                row,
                fields: fields.len(),
            });
        }
        let audio = fields[0].trim();
        if audio.is_empty() {
            return Err(CorpusError::EmptyPath {
                path: path_str,
                row,
            });
        }
        let label = match fields[1].trim() {
            "normal" => Label::Normal,
            "whisper" => Label::Whisper,
            other => {
                return Err(CorpusError::UnknownLabel {
                    path: path_str,
                    row,
                    value: other.to_string(),
                })
            }
        };
        let split = match fields[2].trim() {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(CorpusError::UnknownSplit {
                    path: path_str,
                    row,
                    value: other.to_string(),
                })
            }
        };
        entries.push(ManifestEntry {
            path: audio.to_string(),
            label,
            split,
        });
    }
    if entries.is_empty() {
        return Err(CorpusError::EmptyManifest { path: path_str });
    }
    Ok(entries)
}

pub fn save_manifest(
    path: impl AsRef<Path>,
    entries: &[ManifestEntry],
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = String::from("path,label,split\n");
    for e in entries {
        out.push_str(&format!("{},{},{}\n", e.path, e.label.name(), e.split.name()));
    }
    std::fs::write(path, out).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

// --- synthetic corpus --------------------------------------------------------

/// One vocal-tract resonance: center frequency, bandwidth, and relative
/// amplitude in the parallel bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Formant {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub gain: f64,
}

/// How the whisper variant deforms the formant set: centers shifted up,
/// bandwidths widened, amplitudes attenuated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhisperTransform {
    pub formant_shift: f64,
    pub bandwidth_widening: f64,
    pub gain_attenuation_db: f64,
}

impl Default for WhisperTransform {
    fn default() -> Self {
        Self {
            formant_shift: 1.15,
            bandwidth_widening: 1.8,
            gain_attenuation_db: -6.0,
        }
    }
}

/// Generator settings. Defaults are a neutral-vowel stand-in: F1 700/80,
/// F2 1220/100, F3 2600/120 Hz, pitch 90-220 Hz, half-second utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub duration_s: f64,
    pub pitch_range_hz: (f64, f64),
    pub formants: Vec<Formant>,
    pub whisper: WhisperTransform,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            duration_s: 0.5,
            pitch_range_hz: (90.0, 220.0),
            formants: vec![
                Formant {
                    center_hz: 700.0,
                    bandwidth_hz: 80.0,
                    gain: 1.0,
                },
                Formant {
                    center_hz: 1220.0,
                    bandwidth_hz: 100.0,
                    gain: 0.6,
                },
                Formant {
                    center_hz: 2600.0,
                    bandwidth_hz: 120.0,
                    gain: 0.3,
                },
            ],
            whisper: WhisperTransform::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |msg: String| Err(CorpusError::BadSynthConfig(msg));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if !self.duration_s.is_finite() || self.duration_s <= 0.0 {
            return bad("duration must be positive".into());
        }
        if self.formants.is_empty() {
            return bad("at least one formant required".into());
        }
        let (lo, hi) = self.pitch_range_hz;
        if !(0.0 < lo && lo <= hi) {
            return bad(format!("bad pitch range {lo}-{hi}"));
        }
        if hi >= self.formants[0].center_hz {
            return bad(format!(
                "pitch ceiling {hi} Hz must sit below the first formant at {} Hz",
                self.formants[0].center_hz
            ));
        }
        if self.whisper.formant_shift <= 1.0 {
            return bad("whisper formant shift must exceed 1".into());
        }
        if self.whisper.bandwidth_widening <= 1.0 {
            return bad("whisper bandwidth widening must exceed 1".into());
        }
        Ok(())
    }

    fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }
}

/// Two-pole resonator with unit gain at its center frequency.
///
/// `y[n] = a*x[n] + b*y[n-1] + c*y[n-2]` with pole radius
/// `R = exp(-pi*B/fs)`, pole angle `theta = 2*pi*F/fs`, `b = 2R cos
/// theta`, `c = -R^2`, and `a = (1-R)*sqrt(1 - 2R cos(2 theta) + R^2)`.
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
}

impl Resonator {
    fn new(center_hz: f64, bandwidth_hz: f64, sample_rate: u32) -> Self {
        let fs = sample_rate as f64;
        let r = (-std::f64::consts::PI * bandwidth_hz / fs).exp();
        let theta = 2.0 * std::f64::consts::PI * center_hz / fs;
        let a = (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt();
        Self {
            a,
            b: 2.0 * r * theta.cos(),
            c: -(r * r),
        }
    }

    fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        let (mut y1, mut y2) = (0.0, 0.0);
        for (i, &xi) in x.iter().enumerate() {
            let yi = self.a * xi + self.b * y1 + self.c * y2;
            y2 = y1;
            y1 = yi;
            y[i] = yi;
        }
        y
    }
}

/// Broadband floor mixed alongside the resonator bank, so formant
/// amplitude changes stay visible after peak normalization.
const DIRECT_LEAK: f64 = 0.02;

/// Relative pitch and amplitude jitter per utterance.
const JITTER: f64 = 0.03;

fn run_bank(source: &[f64], formants: &[Formant], sample_rate: u32) -> Vec<f64> {
    let mut out = vec![0.0; source.len()];
    for f in formants {
        let res = Resonator::new(f.center_hz, f.bandwidth_hz, sample_rate);
        for (o, y) in out.iter_mut().zip(res.filter(source)) {
            *o += f.gain * y;
        }
    }
    for (o, &s) in out.iter_mut().zip(source) {
        *o += DIRECT_LEAK * s;
    }
    out
}

fn normalize_peak(samples: &mut [f64], target: f64) {
    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak > 0.0 {
        let g = target / peak;
        for s in samples.iter_mut() {
            *s *= g;
        }
    }
}

/// Pitched impulse train through the formant bank: the normal-speech
/// fixture. Pitch is drawn from the configured range, jittered by up to
/// +/-3%, and the output is peak-normalized to 0.5 times an amplitude
/// jitter (so the peak never exceeds 0.5).
pub fn synth_normal(cfg: &SynthConfig) -> Result<AudioBuffer, CorpusError> {
    cfg.validate()?;
    let mut rng = SeededRng::from_seed(cfg.seed);
    let pitch_base = rng.next_range(cfg.pitch_range_hz.0, cfg.pitch_range_hz.1);
    let pitch = pitch_base * (1.0 + rng.next_range(-JITTER, JITTER));
    let amplitude = 0.5 * (1.0 - JITTER * rng.next_f64());

    let n = cfg.n_samples();
    let period = cfg.sample_rate as f64 / pitch;
    let mut source = vec![0.0; n];
    let mut t = 0.0f64;
    loop {
        let idx = t.round() as usize;
        if idx >= n {
            break;
        }
        source[idx] = 1.0;
        t += period;
    }

    let mut out = run_bank(&source, &cfg.formants, cfg.sample_rate);
    normalize_peak(&mut out, amplitude);
    Ok(AudioBuffer::new(out, cfg.sample_rate).expect("synth output is finite"))
}

/// White-noise source (no pitch) through the whisper-transformed bank:
/// centers scaled up, bandwidths widened, gains attenuated.
pub fn synth_whisper(cfg: &SynthConfig) -> Result<AudioBuffer, CorpusError> {
    cfg.validate()?;
    let mut rng = SeededRng::from_seed(cfg.seed);
    let amplitude = 0.5 * (1.0 - JITTER * rng.next_f64());

    let n = cfg.n_samples();
    let source: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();

    let gain_scale = 10f64.powf(cfg.whisper.gain_attenuation_db / 20.0);
    let transformed: Vec<Formant> = cfg
        .formants
        .iter()
        .map(|f| Formant {
            center_hz: f.center_hz * cfg.whisper.formant_shift,
            bandwidth_hz: f.bandwidth_hz * cfg.whisper.bandwidth_widening,
            gain: f.gain * gain_scale,
        })
        .collect();

    let mut out = run_bank(&source, &transformed, cfg.sample_rate);
    normalize_peak(&mut out, amplitude);
    Ok(AudioBuffer::new(out, cfg.sample_rate).expect("synth output is finite"))
}

/// Generate a full parallel corpus: WAV files plus a manifest.
///
/// Normal/whisper items with the same index share a pair seed, so they
/// form parallel pairs; the whole tree is a function of the master seed.
/// Returns the manifest path.
pub fn build_synthetic_corpus(
    n_per_class_train: usize,
    n_per_class_test: usize,
    cfg: &SynthConfig,
    out_dir: impl AsRef<Path>,
) -> Result<PathBuf, CorpusError> {
    if n_per_class_train == 0 || n_per_class_test == 0 {
        return Err(CorpusError::ZeroCount);
    }
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|source| CorpusError::Io {
        path: wav_dir.display().to_string(),
        source,
    })?;

    let mut items = Vec::new();
    for (split, count) in [(Split::Train, n_per_class_train), (Split::Test, n_per_class_test)] {
        for idx in 0..count {
            let pair_seed = derive_seed(cfg.seed, &format!("pair:{}:{idx}", split.name()));
            for label in [Label::Normal, Label::Whisper] {
                items.push((split, idx, label, derive_seed(pair_seed, label.name())));
            }
        }
    }

    // Utterances are independent given their derived seeds; generate and
    // write them in parallel, then write the manifest in fixed order.
    use rayon::prelude::*;
    let entries: Vec<ManifestEntry> = items
        .par_iter()
        .map(|&(split, idx, label, item_seed)| {
            let item_cfg = SynthConfig {
                seed: item_seed,
                ..cfg.clone()
            };
            let buf = match label {
                Label::Normal => synth_normal(&item_cfg)?,
                Label::Whisper => synth_whisper(&item_cfg)?,
            };
            let name = format!("{}_{}_{idx:04}.wav", split.name(), label.name());
            write_wav(wav_dir.join(&name), &buf)?;
            Ok(ManifestEntry {
                path: format!("wav/{name}"),
                label,
                split,
            })
        })
        .collect::<Result<_, CorpusError>>()?;

    let manifest = out_dir.join("manifest.csv");
    save_manifest(&manifest, &entries)?;
    Ok(manifest)
}

// --- feature and stats persistence ------------------------------------------
//
// Feature file layout (little-endian):
//   magic "QCSE" | version u8 = 1 | kind u8 (0 = QSE, 1 = QCSE)
//   | radius f64 | n_frames u32 | n_bins u32
//   | n_frames * n_bins values f32, row-major
//
// Norm-stats file layout:
//   magic "QCN1" | n_bins u32 | mean f64 * n | std f64 * n

const FEATURE_MAGIC: [u8; 4] = *b"QCSE";
const FEATURE_VERSION: u8 = 1;
const STATS_MAGIC: [u8; 4] = *b"QCN1";

/// Serialize a feature matrix. Values are quantized to f32 at this
/// boundary; the round trip through [`read_features`] is bit-exact on
/// the stored f32 payload.
pub fn write_features(path: impl AsRef<Path>, f: &FeatureMatrix) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(18 + f.n_frames() * f.bin_count() * 4);
    out.extend_from_slice(&FEATURE_MAGIC);
    out.push(FEATURE_VERSION);
    out.push(match f.kind() {
        FeatureKind::Qse => 0,
        FeatureKind::Qcse => 1,
    });
    out.extend_from_slice(&f.radius().to_le_bytes());
    out.extend_from_slice(&(f.n_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(f.bin_count() as u32).to_le_bytes());
    for &v in f.data().iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, out).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix, CorpusError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path_str.clone(),
        source,
    })?;

    let need = |expected: usize, actual: usize| CorpusError::Truncated {
        path: path_str.clone(),
        expected,
        actual,
    };
    if bytes.len() < 22 {
        return Err(need(22, bytes.len()));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != FEATURE_MAGIC {
        return Err(CorpusError::BadMagic {
            path: path_str,
            expected: FEATURE_MAGIC,
            found: magic,
        });
    }
    if bytes[4] != FEATURE_VERSION {
        return Err(CorpusError::BadVersion {
            path: path_str,
            expected: FEATURE_VERSION,
            found: bytes[4],
        });
    }
    let kind = match bytes[5] {
        0 => FeatureKind::Qse,
        1 => FeatureKind::Qcse,
        value => {
            return Err(CorpusError::BadKindByte {
                path: path_str,
                value,
            })
        }
    };
    let radius = f64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let n_frames = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;
    let n_bins = u32::from_le_bytes(bytes[18..22].try_into().unwrap()) as usize;

    // Checked arithmetic: a corrupt header must error, not overflow.
    let expected = n_frames
        .checked_mul(n_bins)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(22))
        .ok_or_else(|| need(usize::MAX, bytes.len()))?;
    if bytes.len() != expected {
        return Err(need(expected, bytes.len()));
    }
    let values: Vec<f64> = bytes[22..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let data = ndarray::Array2::from_shape_vec((n_frames, n_bins), values)
        .expect("shape matches payload length");
    Ok(FeatureMatrix::new(data, kind, radius))
}

pub fn write_norm_stats(path: impl AsRef<Path>, stats: &NormStats) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let n = stats.bin_count();
    let mut out = Vec::with_capacity(8 + n * 16);
    out.extend_from_slice(&STATS_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for &m in stats.mean().iter() {
        out.extend_from_slice(&m.to_le_bytes());
    }
    for &s in stats.std().iter() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_norm_stats(path: impl AsRef<Path>) -> Result<NormStats, CorpusError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path_str.clone(),
        source,
    })?;
    if bytes.len() < 8 {
        return Err(CorpusError::Truncated {
            path: path_str,
            expected: 8,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != STATS_MAGIC {
        return Err(CorpusError::BadMagic {
            path: path_str,
            expected: STATS_MAGIC,
            found: magic,
        });
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = 8 + n * 16;
    if bytes.len() != expected {
        return Err(CorpusError::Truncated {
            path: path_str,
            expected,
            actual: bytes.len(),
        });
    }
    let read_f64s = |range: std::ops::Range<usize>| -> Array1<f64> {
        bytes[range]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let mean = read_f64s(8..8 + n * 8);
    let std = read_f64s(8 + n * 8..expected);
    Ok(NormStats::new(mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use num_complex::Complex64;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.csv");
        let entries = vec![
            ManifestEntry {
                path: "wav/a.wav".into(),
                label: Label::Normal,
                split: Split::Train,
            },
            ManifestEntry {
                path: "wav/b.wav".into(),
                label: Label::Whisper,
                split: Split::Test,
            },
        ];
        save_manifest(&p, &entries).unwrap();
        assert_eq!(load_manifest(&p).unwrap(), entries);
    }

    #[test]
    fn manifest_rejects_unknown_label_with_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "path,label,split\na.wav,normal,train\nb.wav,shout,train\n").unwrap();
        match load_manifest(&p) {
            Err(CorpusError::UnknownLabel { row, value, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(value, "shout");
            }
            other => panic!("expected UnknownLabel, got {other:?}"),
        }
    }

    #[test]
    fn manifest_rejects_missing_header_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "a.wav,normal,train\n").unwrap();
        assert!(matches!(
            load_manifest(&p),
            Err(CorpusError::BadHeader { .. })
        ));
        std::fs::write(&p, "").unwrap();
        assert!(matches!(
            load_manifest(&p),
            Err(CorpusError::EmptyManifest { .. })
        ));
    }

    #[test]
    fn manifest_rejects_bad_split_and_shape() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "path,label,split\na.wav,normal,dev\n").unwrap();
        assert!(matches!(
            load_manifest(&p),
            Err(CorpusError::UnknownSplit { row: 2, .. })
        ));
        std::fs::write(&p, "path,label,split\na.wav,normal\n").unwrap();
        assert!(matches!(
            load_manifest(&p),
            Err(CorpusError::MalformedRow { row: 2, fields: 2, .. })
        ));
    }

    fn dft_magnitudes(samples: &[f64]) -> Vec<f64> {
        // Straightforward DFT magnitude, oracle-grade.
        let n = samples.len();
        (0..n / 2)
            .map(|k| {
                samples
                    .iter()
                    .enumerate()
                    .map(|(t, &x)| {
                        let phase = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                        Complex64::new(x * phase.cos(), x * phase.sin())
                    })
                    .sum::<Complex64>()
                    .norm()
            })
            .collect()
    }

    #[test]
    fn normal_speech_has_harmonics_at_the_pitch() {
        let cfg = SynthConfig {
            seed: 11,
            ..SynthConfig::default()
        };
        let buf = synth_normal(&cfg).unwrap();
        // Recover the pitch the generator drew.
        let mut rng = SeededRng::from_seed(cfg.seed);
        let pitch_base = rng.next_range(90.0, 220.0);
        let pitch = pitch_base * (1.0 + rng.next_range(-JITTER, JITTER));

        // Locate spectral peaks in the 0-2 kHz band of a 4096-sample DFT
        // and check their median spacing against the pitch.
        let window = &buf.samples()[..4096];
        let mags = dft_magnitudes(window);
        let hz_per_bin = 16_000.0 / 4096.0;
        let top_bin = (2_000.0 / hz_per_bin) as usize;
        let max_mag = mags[..top_bin].iter().cloned().fold(0.0, f64::max);
        let mut peaks = Vec::new();
        for k in 2..top_bin {
            if mags[k] > mags[k - 1] && mags[k] >= mags[k + 1] && mags[k] > 0.05 * max_mag {
                peaks.push(k as f64 * hz_per_bin);
            }
        }
        assert!(peaks.len() >= 4, "too few harmonic peaks: {peaks:?}");
        let mut spacings: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
        spacings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = spacings[spacings.len() / 2];
        assert!(
            (median - pitch).abs() / pitch < 0.02,
            "median harmonic spacing {median:.2} Hz vs pitch {pitch:.2} Hz"
        );
    }

    #[test]
    fn normal_energy_concentrates_at_formants() {
        let cfg = SynthConfig {
            seed: 5,
            ..SynthConfig::default()
        };
        let buf = synth_normal(&cfg).unwrap();
        let mags = dft_magnitudes(&buf.samples()[..4096]);
        let hz_per_bin = 16_000.0 / 4096.0;
        let band_power = |lo: f64, hi: f64| -> f64 {
            let (a, b) = ((lo / hz_per_bin) as usize, (hi / hz_per_bin) as usize);
            mags[a..b].iter().map(|m| m * m).sum::<f64>() / (b - a) as f64
        };
        // On-formant band around F1 vs an off-formant gap band.
        let on = band_power(650.0, 750.0);
        let off = band_power(900.0, 1100.0);
        let ratio_db = 10.0 * (on / off).log10();
        assert!(ratio_db > 3.0, "on/off formant contrast {ratio_db:.1} dB");
    }

    #[test]
    fn whisper_has_no_pitch_autocorrelation() {
        let cfg = SynthConfig {
            seed: 17,
            ..SynthConfig::default()
        };
        let buf = synth_whisper(&cfg).unwrap();

        // Band-limit to 0-2 kHz with a DFT mask, then normalized
        // autocorrelation over the pitch lag range (90-220 Hz).
        let n = 4096;
        let samples = &buf.samples()[..n];
        let mags: Vec<Complex64> = {
            let mut spec: Vec<Complex64> = (0..n)
                .map(|k| {
                    samples
                        .iter()
                        .enumerate()
                        .map(|(t, &x)| {
                            let ph = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                            Complex64::new(x * ph.cos(), x * ph.sin())
                        })
                        .sum()
                })
                .collect();
            let cutoff = (2_000.0 * n as f64 / 16_000.0) as usize;
            for (k, v) in spec.iter_mut().enumerate() {
                let mirrored = n - k.min(n - 1);
                if k > cutoff && mirrored > cutoff {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
            spec
        };
        let band: Vec<f64> = (0..n)
            .map(|t| {
                mags.iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let ph = 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                        (v * Complex64::new(ph.cos(), ph.sin())).re
                    })
                    .sum::<f64>()
                    / n as f64
            })
            .collect();

        let mean = band.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = band.iter().map(|x| x - mean).collect();
        let r0: f64 = centered.iter().map(|x| x * x).sum();
        let lag_lo = (16_000.0 / 220.0) as usize;
        let lag_hi = (16_000.0 / 90.0) as usize;
        let mut worst = 0.0f64;
        for lag in lag_lo..=lag_hi {
            let r: f64 = centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum();
            worst = worst.max(r / r0);
        }
        assert!(worst < 0.5, "pitch-lag autocorrelation peak {worst:.3}");
    }

    #[test]
    fn whisper_centroid_above_paired_normal() {
        for seed in [1u64, 2, 3, 4, 5] {
            let pair = derive_seed(99, &format!("pair:train:{seed}"));
            let normal_cfg = SynthConfig {
                seed: derive_seed(pair, "normal"),
                ..SynthConfig::default()
            };
            let whisper_cfg = SynthConfig {
                seed: derive_seed(pair, "whisper"),
                ..SynthConfig::default()
            };
            let centroid = |buf: &AudioBuffer| -> f64 {
                let mags = dft_magnitudes(&buf.samples()[..4096]);
                let hz_per_bin = 16_000.0 / 4096.0;
                let num: f64 = mags
                    .iter()
                    .enumerate()
                    .map(|(k, m)| k as f64 * hz_per_bin * m * m)
                    .sum();
                let den: f64 = mags.iter().map(|m| m * m).sum();
                num / den
            };
            let cn = centroid(&synth_normal(&normal_cfg).unwrap());
            let cw = centroid(&synth_whisper(&whisper_cfg).unwrap());
            assert!(cw > cn, "seed {seed}: whisper centroid {cw:.0} <= normal {cn:.0}");
        }
    }

    #[test]
    fn synth_is_deterministic_and_bounded() {
        let cfg = SynthConfig {
            seed: 123,
            ..SynthConfig::default()
        };
        let a = synth_normal(&cfg).unwrap();
        let b = synth_normal(&cfg).unwrap();
        assert_eq!(a.samples(), b.samples());
        let w1 = synth_whisper(&cfg).unwrap();
        let w2 = synth_whisper(&cfg).unwrap();
        assert_eq!(w1.samples(), w2.samples());

        for buf in [&a, &w1] {
            let peak = buf.samples().iter().fold(0.0f64, |m, &s| m.max(s.abs()));
            assert!(peak <= 0.5 + 1e-12, "peak {peak}");
            assert!(peak > 0.4, "peak {peak}");
            assert_eq!(buf.len(), 8_000);
        }
    }

    #[test]
    fn corpus_tree_structure_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        let cfg = SynthConfig {
            seed: 7,
            duration_s: 0.12,
            ..SynthConfig::default()
        };
        let manifest_a = build_synthetic_corpus(3, 2, &cfg, &out_a).unwrap();
        let manifest_b = build_synthetic_corpus(3, 2, &cfg, &out_b).unwrap();

        let entries = load_manifest(&manifest_a).unwrap();
        assert_eq!(entries.len(), 10);
        let count = |s: Split, l: Label| {
            entries
                .iter()
                .filter(|e| e.split == s && e.label == l)
                .count()
        };
        assert_eq!(count(Split::Train, Label::Normal), 3);
        assert_eq!(count(Split::Train, Label::Whisper), 3);
        assert_eq!(count(Split::Test, Label::Normal), 2);
        assert_eq!(count(Split::Test, Label::Whisper), 2);

        // Same master seed regenerates an identical tree.
        assert_eq!(
            std::fs::read(&manifest_a).unwrap(),
            std::fs::read(&manifest_b).unwrap()
        );
        for e in &entries {
            let pa = e.resolve(&manifest_a);
            let pb = e.resolve(&manifest_b);
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        }
        assert!(build_synthetic_corpus(0, 1, &cfg, dir.path().join("c")).is_err());
    }

    #[test]
    fn paired_items_share_duration() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            seed: 3,
            duration_s: 0.1,
            ..SynthConfig::default()
        };
        let manifest = build_synthetic_corpus(2, 1, &cfg, dir.path()).unwrap();
        let entries = load_manifest(&manifest).unwrap();
        for pair in entries.chunks(2) {
            let a = crate::signal::read_wav(pair[0].resolve(&manifest)).unwrap();
            let b = crate::signal::read_wav(pair[1].resolve(&manifest)).unwrap();
            assert_eq!(a.len(), b.len());
        }
    }

    #[test]
    fn feature_file_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.qcse");
        let mut rng = SeededRng::from_seed(9);
        // Store-and-load is exact on f32-representable values.
        let data = ndarray::Array2::from_shape_fn((7, 128), |_| {
            rng.next_range(-200.0, 0.0) as f32 as f64
        });
        let f = FeatureMatrix::new(data, FeatureKind::Qcse, 1.01);
        write_features(&p, &f).unwrap();
        let back = read_features(&p).unwrap();
        assert_eq!(back.kind(), FeatureKind::Qcse);
        assert_eq!(back.radius(), 1.01);
        assert_eq!(back.data(), f.data());

        // Re-serializing the loaded matrix reproduces the file bytes.
        let p2 = dir.path().join("f2.qcse");
        write_features(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn feature_file_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.qcse");
        let f = FeatureMatrix::new(ndarray::Array2::zeros((2, 4)), FeatureKind::Qse, 1.0);
        write_features(&p, &f).unwrap();
        let good = std::fs::read(&p).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&p, &bad_magic).unwrap();
        assert!(matches!(
            read_features(&p),
            Err(CorpusError::BadMagic { .. })
        ));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        std::fs::write(&p, &bad_version).unwrap();
        assert!(matches!(
            read_features(&p),
            Err(CorpusError::BadVersion { found: 9, .. })
        ));

        let truncated = &good[..good.len() - 5];
        std::fs::write(&p, truncated).unwrap();
        match read_features(&p) {
            Err(CorpusError::Truncated { expected, actual, .. }) => {
                assert_eq!(expected, good.len());
                assert_eq!(actual, good.len() - 5);
            }
            other => panic!("expected Truncated, got {other:?}"),
        }

        // Absurd frame counts must error, not overflow.
        let mut huge_dims = good.clone();
        huge_dims[14..18].copy_from_slice(&u32::MAX.to_le_bytes());
        huge_dims[18..22].copy_from_slice(&u32::MAX.to_le_bytes());
        std::fs::write(&p, &huge_dims).unwrap();
        assert!(matches!(
            read_features(&p),
            Err(CorpusError::Truncated { .. })
        ));
    }

    #[test]
    fn norm_stats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.qcn");
        let stats = NormStats::new(
            Array1::from(vec![1.5, -2.5, 0.0]),
            Array1::from(vec![1.0, 2.0, 1e-6]),
        );
        write_norm_stats(&p, &stats).unwrap();
        let back = read_norm_stats(&p).unwrap();
        assert_eq!(back, stats);

        std::fs::write(&p, b"XXXX\x03\x00\x00\x00").unwrap();
        assert!(matches!(
            read_norm_stats(&p),
            Err(CorpusError::BadMagic { .. })
        ));
    }

    #[test]
    fn synth_config_validation() {
        let mut cfg = SynthConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.pitch_range_hz = (90.0, 800.0); // above F1
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::default();
        cfg.whisper.formant_shift = 0.9;
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::default();
        cfg.whisper.bandwidth_widening = 1.0;
        assert!(cfg.validate().is_err());
    }
}
