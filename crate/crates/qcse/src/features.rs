//! Spectrogram assembly and the quartered (chirp) spectral envelope.
//!
//! A spectrogram row is the log-magnitude chirp spectrum of one frame.
//! The feature keeps only the first quarter of the half-spectrum bins —
//! at 16 kHz with a 1024-point transform that is 0-2 kHz, the band where
//! the presence (normal speech) or absence (whisper) of pitch harmonics
//! is most visible. Extracted at radius 1 the feature is the plain
//! quartered spectral envelope (QSE); at any other radius it is the
//! quartered chirp spectral envelope (QCSE).

use ndarray::{Array1, Array2, Axis};
use thiserror::Error;

use crate::chirp::{chirp_spectrum, log_magnitude, ChirpConfig, ChirpError};
use crate::signal::{frame_signal, AudioBuffer, FrameConfig, SignalError};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Chirp(#[from] ChirpError),
    #[error("bin count {bins} is not divisible by 4")]
    BinsNotQuarterable { bins: usize },
    #[error("bin count mismatch: features have {features}, stats have {stats}")]
    BinCountMismatch { features: usize, stats: usize },
    #[error("cannot fit normalization on an empty feature collection")]
    EmptyCollection,
}

/// Frames-by-bins log-magnitude spectrogram (dB), `K = fft_size/2` bins,
/// with the frame metadata needed to interpret the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Array2<f64>,
    sample_rate: u32,
    hop: usize,
}

impl Spectrogram {
    pub fn new(data: Array2<f64>, sample_rate: u32, hop: usize) -> Self {
        Self {
            data,
            sample_rate,
            hop,
        }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn bin_count(&self) -> usize {
        self.data.ncols()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn hop(&self) -> usize {
        self.hop
    }
}

/// Which envelope a feature matrix holds: quartered spectral envelope
/// (radius exactly 1) or its chirp variant (any other radius).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Qse,
    Qcse,
}

impl FeatureKind {
    pub fn from_radius(radius: f64) -> Self {
        if radius == 1.0 {
            FeatureKind::Qse
        } else {
            FeatureKind::Qcse
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Qse => "QSE",
            FeatureKind::Qcse => "QCSE",
        }
    }
}

/// Frames-by-`K/4` feature matrix, the network input. Carries the radius
/// it was extracted at so downstream reports are self-describing.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
    kind: FeatureKind,
    radius: f64,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>, kind: FeatureKind, radius: f64) -> Self {
        Self { data, kind, radius }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn bin_count(&self) -> usize {
        self.data.ncols()
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Per-bin mean and standard deviation over a training set. The std is
/// floored at 1e-6 so constant bins normalize to zero instead of blowing
/// up.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    mean: Array1<f64>,
    std: Array1<f64>,
}

pub const STD_FLOOR: f64 = 1e-6;

impl NormStats {
    pub fn new(mean: Array1<f64>, std: Array1<f64>) -> Self {
        assert_eq!(mean.len(), std.len());
        Self { mean, std }
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn std(&self) -> &Array1<f64> {
        &self.std
    }

    pub fn bin_count(&self) -> usize {
        self.mean.len()
    }
}

/// Log-magnitude chirp spectrogram: row `i` is
/// `log_magnitude(chirp_spectrum(frame i))`.
pub fn spectrogram(
    buf: &AudioBuffer,
    fcfg: &FrameConfig,
    ccfg: &ChirpConfig,
) -> Result<Spectrogram, FeatureError> {
    let frames = frame_signal(buf, fcfg)?;
    let k = ccfg.half_bins();
    let mut data = Array2::zeros((frames.n_frames(), k));
    for (i, frame) in frames.rows().iter().enumerate() {
        let spec = chirp_spectrum(frame, ccfg)?;
        let row = log_magnitude(&spec);
        data.row_mut(i).assign(&Array1::from(row));
    }
    Ok(Spectrogram::new(data, buf.sample_rate(), fcfg.hop()))
}

/// Keep the first quarter of the bins of every frame: `k = 0 .. K/4 - 1`.
/// The kept values are a pure slice of the source, no transform.
pub fn quarter(spec: &Spectrogram) -> Result<FeatureMatrix, FeatureError> {
    let k = spec.bin_count();
    if !k.is_multiple_of(4) {
        return Err(FeatureError::BinsNotQuarterable { bins: k });
    }
    let q = k / 4;
    let data = spec.data().slice(ndarray::s![.., ..q]).to_owned();
    Ok(FeatureMatrix::new(data, FeatureKind::Qse, 1.0))
}

/// Full extraction: spectrogram then quarter. The feature kind follows
/// the radius: exactly 1 is QSE, anything else QCSE.
pub fn extract(
    buf: &AudioBuffer,
    fcfg: &FrameConfig,
    ccfg: &ChirpConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let spec = spectrogram(buf, fcfg, ccfg)?;
    let quartered = quarter(&spec)?;
    Ok(FeatureMatrix::new(
        quartered.data,
        FeatureKind::from_radius(ccfg.radius()),
        ccfg.radius(),
    ))
}

/// Per-bin mean and (population) standard deviation over all frames of
/// all matrices, std floored at [`STD_FLOOR`].
pub fn fit_norm(features: &[FeatureMatrix]) -> Result<NormStats, FeatureError> {
    let total_frames: usize = features.iter().map(|f| f.n_frames()).sum();
    if features.is_empty() || total_frames == 0 {
        return Err(FeatureError::EmptyCollection);
    }
    let bins = features[0].bin_count();
    for f in features {
        if f.bin_count() != bins {
            return Err(FeatureError::BinCountMismatch {
                features: f.bin_count(),
                stats: bins,
            });
        }
    }

    let n = total_frames as f64;
    let mut sum = Array1::<f64>::zeros(bins);
    let mut sum_sq = Array1::<f64>::zeros(bins);
    for f in features {
        sum += &f.data().sum_axis(Axis(0));
        sum_sq += &f.data().mapv(|v| v * v).sum_axis(Axis(0));
    }
    let mean = sum / n;
    let std = (&sum_sq / n - &mean * &mean).mapv(|v| v.max(0.0).sqrt().max(STD_FLOOR));
    Ok(NormStats::new(mean, std))
}

/// Standardize each bin: `(value - mean) / std`.
pub fn apply_norm(f: &FeatureMatrix, s: &NormStats) -> Result<FeatureMatrix, FeatureError> {
    if f.bin_count() != s.bin_count() {
        return Err(FeatureError::BinCountMismatch {
            features: f.bin_count(),
            stats: s.bin_count(),
        });
    }
    let data = (f.data() - &s.mean.view().insert_axis(Axis(0))) / s.std.view().insert_axis(Axis(0));
    Ok(FeatureMatrix::new(data, f.kind(), f.radius()))
}

/// Undo [`apply_norm`]: `value * std + mean`.
pub fn invert_norm(f: &FeatureMatrix, s: &NormStats) -> Result<FeatureMatrix, FeatureError> {
    if f.bin_count() != s.bin_count() {
        return Err(FeatureError::BinCountMismatch {
            features: f.bin_count(),
            stats: s.bin_count(),
        });
    }
    let data = f.data() * &s.std.view().insert_axis(Axis(0)) + s.mean.view().insert_axis(Axis(0));
    Ok(FeatureMatrix::new(data, f.kind(), f.radius()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chirp::chirp_spectrum_oracle;
    use crate::rng::SeededRng;
    use crate::signal::WindowKind;
    use ndarray::array;

    fn sine_buffer(freq: f64, len: usize) -> AudioBuffer {
        let samples = (0..len)
            .map(|i| 0.4 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin())
            .collect();
        AudioBuffer::new(samples, 16_000).unwrap()
    }

    #[test]
    fn spectrogram_shape() {
        let buf = AudioBuffer::new(vec![0.0; 2048], 16_000).unwrap();
        let spec = spectrogram(&buf, &FrameConfig::default(), &ChirpConfig::default()).unwrap();
        assert_eq!(spec.n_frames(), 5);
        assert_eq!(spec.bin_count(), 512);
    }

    #[test]
    fn silence_sits_on_the_floor() {
        let buf = AudioBuffer::new(vec![0.0; 2048], 16_000).unwrap();
        let spec = spectrogram(&buf, &FrameConfig::default(), &ChirpConfig::default()).unwrap();
        assert!(spec.data().iter().all(|&v| v == -200.0));
    }

    #[test]
    fn radii_paths_match_oracle_and_differ_from_each_other() {
        let buf = sine_buffer(440.0, 1024);
        let fcfg = FrameConfig::new(1024, 1024, WindowKind::Hamming).unwrap();

        let row_at = |radius: f64| {
            let ccfg = ChirpConfig::new(radius, 1024).unwrap();
            let spec = spectrogram(&buf, &fcfg, &ccfg).unwrap();
            spec.data().row(0).to_owned()
        };
        let row_unit = row_at(1.0);
        let row_chirp = row_at(1.01);

        // Each path agrees with the direct-summation reference at its radius.
        let frames = frame_signal(&buf, &fcfg).unwrap();
        for (radius, row) in [(1.0, &row_unit), (1.01, &row_chirp)] {
            let oracle = chirp_spectrum_oracle(&frames.rows()[0], radius, 1024).unwrap();
            let oracle_db = log_magnitude(&oracle);
            for (a, b) in row.iter().zip(&oracle_db) {
                assert!((a - b).abs() < 1e-9);
            }
        }

        // And the two radii disagree on a non-impulse signal.
        let max_gap = row_unit
            .iter()
            .zip(&row_chirp)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_gap > 0.1, "radius had no effect: max gap {max_gap}");
    }

    #[test]
    fn quarter_counts_and_values() {
        let data = Array2::from_shape_fn((10, 512), |(i, j)| (i * 512 + j) as f64);
        let spec = Spectrogram::new(data.clone(), 16_000, 256);
        let q = quarter(&spec).unwrap();
        assert_eq!(q.n_frames(), 10);
        assert_eq!(q.bin_count(), 128);
        for i in 0..10 {
            for j in 0..128 {
                // Bit-identical slice of the source bins.
                assert_eq!(q.data()[[i, j]], data[[i, j]]);
            }
        }
    }

    #[test]
    fn quarter_tiny_example() {
        let spec = Spectrogram::new(
            array![[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]],
            16_000,
            1,
        );
        let q = quarter(&spec).unwrap();
        assert_eq!(q.data(), &array![[0.0, 1.0]]);
    }

    #[test]
    fn quarter_rejects_odd_bin_counts() {
        let spec = Spectrogram::new(Array2::zeros((2, 6)), 16_000, 1);
        assert!(matches!(
            quarter(&spec),
            Err(FeatureError::BinsNotQuarterable { bins: 6 })
        ));
    }

    #[test]
    fn extract_kind_follows_radius() {
        let buf = sine_buffer(200.0, 2048);
        let fcfg = FrameConfig::default();
        let qse = extract(&buf, &fcfg, &ChirpConfig::new(1.0, 1024).unwrap()).unwrap();
        assert_eq!(qse.kind(), FeatureKind::Qse);
        let qcse = extract(&buf, &fcfg, &ChirpConfig::new(1.01, 1024).unwrap()).unwrap();
        assert_eq!(qcse.kind(), FeatureKind::Qcse);
        assert_eq!(qcse.bin_count(), 128);
    }

    #[test]
    fn extract_is_deterministic() {
        let buf = sine_buffer(150.0, 4096);
        let a = extract(&buf, &FrameConfig::default(), &ChirpConfig::default()).unwrap();
        let b = extract(&buf, &FrameConfig::default(), &ChirpConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fit_norm_single_frame_floors_std() {
        let f = FeatureMatrix::new(array![[3.0, -1.0]], FeatureKind::Qse, 1.0);
        let stats = fit_norm(std::slice::from_ref(&f)).unwrap();
        assert_eq!(stats.mean(), &array![3.0, -1.0]);
        assert_eq!(stats.std(), &array![STD_FLOOR, STD_FLOOR]);
    }

    #[test]
    fn fit_norm_two_frames() {
        let f = FeatureMatrix::new(array![[0.0], [2.0]], FeatureKind::Qse, 1.0);
        let stats = fit_norm(std::slice::from_ref(&f)).unwrap();
        assert_eq!(stats.mean()[0], 1.0);
        assert_eq!(stats.std()[0], 1.0);
    }

    #[test]
    fn apply_norm_identity_stats() {
        let f = FeatureMatrix::new(array![[1.5, -2.5], [0.5, 4.0]], FeatureKind::Qse, 1.0);
        let stats = NormStats::new(array![0.0, 0.0], array![1.0, 1.0]);
        let out = apply_norm(&f, &stats).unwrap();
        assert_eq!(out.data(), f.data());
    }

    #[test]
    fn self_stats_standardize() {
        let mut rng = SeededRng::from_seed(21);
        let data = Array2::from_shape_fn((40, 3), |_| rng.next_range(-60.0, 0.0));
        let f = FeatureMatrix::new(data, FeatureKind::Qcse, 1.01);
        let stats = fit_norm(std::slice::from_ref(&f)).unwrap();
        let normed = apply_norm(&f, &stats).unwrap();
        for j in 0..3 {
            let col = normed.data().column(j);
            let mean = col.mean().unwrap();
            let var = col.mapv(|v| v * v).mean().unwrap() - mean * mean;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_dataset_normalizes_to_zero() {
        let f = FeatureMatrix::new(Array2::from_elem((5, 4), -200.0), FeatureKind::Qse, 1.0);
        let stats = fit_norm(std::slice::from_ref(&f)).unwrap();
        let normed = apply_norm(&f, &stats).unwrap();
        assert!(normed.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalization_round_trips() {
        let mut rng = SeededRng::from_seed(22);
        let data = Array2::from_shape_fn((30, 8), |_| rng.next_range(-200.0, 0.0));
        let f = FeatureMatrix::new(data, FeatureKind::Qcse, 1.01);
        let stats = fit_norm(std::slice::from_ref(&f)).unwrap();
        let there = apply_norm(&f, &stats).unwrap();
        let back = invert_norm(&there, &stats).unwrap();
        for (a, b) in f.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn mismatched_bins_rejected() {
        let f = FeatureMatrix::new(Array2::zeros((2, 4)), FeatureKind::Qse, 1.0);
        let stats = NormStats::new(Array1::zeros(3), Array1::ones(3));
        assert!(matches!(
            apply_norm(&f, &stats),
            Err(FeatureError::BinCountMismatch { .. })
        ));
        assert!(fit_norm(&[]).is_err());
    }

    #[test]
    fn gain_shifts_spectrogram_by_constant_db() {
        let buf = sine_buffer(300.0, 2048);
        let gained = AudioBuffer::new(
            buf.samples().iter().map(|s| s * 2.0).collect(),
            buf.sample_rate(),
        )
        .unwrap();
        let fcfg = FrameConfig::default();
        let ccfg = ChirpConfig::default();
        let base = spectrogram(&buf, &fcfg, &ccfg).unwrap();
        let louder = spectrogram(&gained, &fcfg, &ccfg).unwrap();
        let shift = 20.0 * 2.0f64.log10();
        for (a, b) in base.data().iter().zip(louder.data()) {
            // Away from the log floor the shift is uniform.
            if *a > -150.0 {
                assert!((b - a - shift).abs() < 1e-6, "a={a} b={b}");
            }
        }
    }
}
