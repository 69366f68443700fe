//! Waveform ingestion, framing, and windowing — the front of the feature
//! pipeline.
//!
//! Audio enters as 16-bit PCM mono WAV and is carried as `f64` amplitudes
//! in `[-1, 1]`. Framing slices the signal into overlapping windows;
//! frames that would overrun the end are dropped, never zero-padded.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

/// Default sample rate for the whole pipeline. Inputs at other rates are
/// rejected rather than resampled.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a RIFF/WAVE file")]
    NotWave { path: String },
    #[error("{path}: unsupported encoding ({detail}); only 16-bit PCM mono is supported")]
    UnsupportedEncoding { path: String, detail: String },
    #[error("{path}: truncated '{chunk}' chunk: declared {declared} bytes, {actual} available")]
    TruncatedChunk {
        path: String,
        chunk: String,
        declared: u32,
        actual: usize,
    },
    #[error("{path}: missing required '{chunk}' chunk")]
    MissingChunk { path: String, chunk: String },
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("samples must be finite (found {value} at index {index})")]
    NonFiniteSample { index: usize, value: f64 },
    #[error("buffer of {len} samples is shorter than one frame of {frame_len}")]
    BufferTooShort { len: usize, frame_len: usize },
    #[error("invalid frame config: frame_len {frame_len}, hop {hop} (need 0 < hop <= frame_len)")]
    BadFrameConfig { frame_len: usize, hop: usize },
    #[error("window length must be positive")]
    EmptyWindow,
}

/// A mono sampled waveform. Amplitudes are dimensionless with nominal
/// range `[-1, 1]`; noise corruption may push values outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Validates the type invariants: positive rate, finite samples.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, SignalError> {
        if sample_rate == 0 {
            return Err(SignalError::ZeroSampleRate);
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, s)| !s.is_finite()) {
            return Err(SignalError::NonFiniteSample { index, value });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Window shape applied to each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    Rectangular,
    #[default]
    Hamming,
    Hann,
}

impl WindowKind {
    pub fn name(self) -> &'static str {
        match self {
            WindowKind::Rectangular => "rectangular",
            WindowKind::Hamming => "hamming",
            WindowKind::Hann => "hann",
        }
    }
}

impl std::str::FromStr for WindowKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rectangular" => Ok(WindowKind::Rectangular),
            "hamming" => Ok(WindowKind::Hamming),
            "hann" => Ok(WindowKind::Hann),
            other => Err(format!("unknown window kind '{other}'")),
        }
    }
}

/// Frame length, hop, and window for short-time analysis.
///
/// Defaults: 1024-sample frames, hop 256, Hamming window. A 1024-point
/// transform at 16 kHz puts the first quarter of the half-spectrum at
/// 0-2 kHz, where the pitch-harmonic contrast between normal and
/// whispered speech lives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    frame_len: usize,
    hop: usize,
    window: WindowKind,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            hop: 256,
            window: WindowKind::Hamming,
        }
    }
}

impl FrameConfig {
    pub fn new(frame_len: usize, hop: usize, window: WindowKind) -> Result<Self, SignalError> {
        if frame_len == 0 || hop == 0 || hop > frame_len {
            return Err(SignalError::BadFrameConfig { frame_len, hop });
        }
        Ok(Self {
            frame_len,
            hop,
            window,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> WindowKind {
        self.window
    }
}

/// Windowed frames of a signal: `n_frames` rows of `frame_len` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    rows: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl FrameMatrix {
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_frames(&self) -> usize {
        self.rows.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

/// Closed-form window of the given kind, periodic (DFT-even) convention:
/// the cosine argument is `2*pi*n/len`, not `2*pi*n/(len-1)`.
pub fn make_window(kind: WindowKind, len: usize) -> Result<Vec<f64>, SignalError> {
    if len == 0 {
        return Err(SignalError::EmptyWindow);
    }
    let n = len as f64;
    let w = (0..len)
        .map(|i| {
            let phase = 2.0 * std::f64::consts::PI * i as f64 / n;
            match kind {
                WindowKind::Rectangular => 1.0,
                WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
            }
        })
        .collect();
    Ok(w)
}

/// First-difference pre-emphasis: `y[n] = x[n] - coeff * x[n-1]`,
/// `y[0] = x[0]`. Off by default in the pipeline; exposed as an optional
/// flag.
pub fn pre_emphasize(buf: &AudioBuffer, coeff: f64) -> AudioBuffer {
    let x = buf.samples();
    let samples = x
        .iter()
        .enumerate()
        .map(|(i, &v)| if i == 0 { v } else { v - coeff * x[i - 1] })
        .collect();
    AudioBuffer::new(samples, buf.sample_rate()).expect("pre-emphasis keeps samples finite")
}

/// Subtract the mean amplitude. Off by default; exposed as an optional
/// flag.
pub fn remove_dc(buf: &AudioBuffer) -> AudioBuffer {
    if buf.is_empty() {
        return buf.clone();
    }
    let mean = buf.samples().iter().sum::<f64>() / buf.len() as f64;
    let samples = buf.samples().iter().map(|v| v - mean).collect();
    AudioBuffer::new(samples, buf.sample_rate()).expect("mean removal keeps samples finite")
}

/// Slice the buffer into windowed frames. Frame `i` starts at `i * hop`;
/// frames that would overrun the end are dropped.
pub fn frame_signal(buf: &AudioBuffer, cfg: &FrameConfig) -> Result<FrameMatrix, SignalError> {
    let len = buf.len();
    let frame_len = cfg.frame_len();
    if len < frame_len {
        return Err(SignalError::BufferTooShort { len, frame_len });
    }
    let window = make_window(cfg.window(), frame_len)?;
    let n_frames = (len - frame_len) / cfg.hop() + 1;
    let rows = (0..n_frames)
        .map(|i| {
            let start = i * cfg.hop();
            buf.samples()[start..start + frame_len]
                .iter()
                .zip(&window)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect();
    Ok(FrameMatrix {
        rows,
        sample_rate: buf.sample_rate(),
    })
}

// --- WAV container ---------------------------------------------------------
//
// Reader accepts RIFF little-endian, PCM (format code 1), 16-bit, mono,
// and tolerates unknown chunks before and after `data` (chunk bodies are
// padded to even length per RIFF). Writer emits the canonical 44-byte
// header.

const PCM_FORMAT_CODE: u16 = 1;

/// Read a 16-bit PCM mono WAV file. Samples are scaled to `[-1, 1]` by
/// dividing by 32768; the sample rate comes from the header.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, SignalError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| SignalError::Io {
            path: path_str.clone(),
            source,
        })?;
    parse_wav(&bytes, &path_str)
}

fn parse_wav(bytes: &[u8], path: &str) -> Result<AudioBuffer, SignalError> {
    let not_wave = || SignalError::NotWave {
        path: path.to_string(),
    };
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(not_wave());
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
        let body_start = pos + 8;
        let available = bytes.len().saturating_sub(body_start);
        if (size as usize) > available {
            // A truncated trailing chunk is only fatal for the ones we need.
            if id == b"data" || id == b"fmt " {
                return Err(SignalError::TruncatedChunk {
                    path: path.to_string(),
                    chunk: String::from_utf8_lossy(id).into_owned(),
                    declared: size,
                    actual: available,
                });
            }
            break;
        }
        let body = &bytes[body_start..body_start + size as usize];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(not_wave());
                }
                fmt = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunk bodies are word-aligned: odd sizes carry a pad byte.
        pos = body_start + size as usize + (size as usize & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| SignalError::MissingChunk {
        path: path.to_string(),
        chunk: "fmt ".to_string(),
    })?;
    let unsupported = |detail: String| SignalError::UnsupportedEncoding {
        path: path.to_string(),
        detail,
    };
    if format != PCM_FORMAT_CODE {
        return Err(unsupported(format!("format code {format}, expected PCM")));
    }
    if bits != 16 {
        return Err(unsupported(format!("{bits} bits per sample, expected 16")));
    }
    if channels != 1 {
        return Err(unsupported(format!("{channels} channels, expected mono")));
    }
    let data = data.ok_or_else(|| SignalError::MissingChunk {
        path: path.to_string(),
        chunk: "data".to_string(),
    })?;

    let samples = data
        .chunks_exact(2)
        .map(|pair| i16::from_le_bytes([pair[0], pair[1]]) as f64 / 32768.0)
        .collect();
    AudioBuffer::new(samples, rate)
}

/// Write a buffer as 16-bit PCM mono WAV. Amplitudes are quantized by
/// `round(x * 32768)` and clamped to the i16 range; the number of clamped
/// samples is returned so callers can warn about clipping.
pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<usize, SignalError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut clipped = 0usize;
    let mut pcm = Vec::with_capacity(buf.len() * 2);
    for &x in buf.samples() {
        let scaled = (x * 32768.0).round();
        let q = if scaled > i16::MAX as f64 {
            clipped += 1;
            i16::MAX
        } else if scaled < i16::MIN as f64 {
            clipped += 1;
            i16::MIN
        } else {
            scaled as i16
        };
        pcm.extend_from_slice(&q.to_le_bytes());
    }

    let data_len = pcm.len() as u32;
    let rate = buf.sample_rate();
    let mut out = Vec::with_capacity(44 + pcm.len());
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_FORMAT_CODE.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // channels
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    out.extend_from_slice(&pcm);

    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|source| SignalError::Io {
            path: path_str,
            source,
        })?;
    Ok(clipped)
}
