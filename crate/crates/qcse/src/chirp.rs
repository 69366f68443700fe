//! The chirp spectrum: the z-transform evaluated on a circle of radius
//! `r` in the z-plane instead of the unit circle.
//!
//! Evaluating at `z = r * exp(j*2*pi*k/K)` for uniform bins `k` is
//! algebraically a plain DFT of the sample sequence pre-weighted by
//! `r^-n`, so the fast path is one element-wise product followed by an
//! FFT. [`chirp_spectrum_oracle`] keeps the O(N*K) direct summation as a
//! definitionally-correct reference; it is used by the test suite and the
//! `inspect` command, never by the feature pipeline.
//!
//! Estimating slightly outside the unit circle (`r = 1 + dr`) smooths
//! spectral peaks and damps the contribution of weak wideband noise,
//! which is what makes the quartered chirp envelope hold up under
//! additive noise.

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

/// Default spectrum-estimation radius, `1 + 0.01`.
pub const DEFAULT_RADIUS: f64 = 1.01;

/// Additive floor inside the log so silence maps to a finite dB value.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ChirpError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("fft_size must be a power of two, got {0}")]
    FftSizeNotPowerOfTwo(usize),
    #[error("frame of {frame_len} samples exceeds fft_size {fft_size}")]
    FrameTooLong { frame_len: usize, fft_size: usize },
    #[error("weight vector length must be positive")]
    EmptyWeights,
}

/// Radius and transform size for chirp-spectrum estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpConfig {
    radius: f64,
    fft_size: usize,
}

impl Default for ChirpConfig {
    fn default() -> Self {
        Self {
            radius: DEFAULT_RADIUS,
            fft_size: 1024,
        }
    }
}

impl ChirpConfig {
    pub fn new(radius: f64, fft_size: usize) -> Result<Self, ChirpError> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(ChirpError::NonPositiveRadius(radius));
        }
        if !fft_size.is_power_of_two() {
            return Err(ChirpError::FftSizeNotPowerOfTwo(fft_size));
        }
        Ok(Self { radius, fft_size })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    /// Half-spectrum bin count `K = fft_size / 2`.
    pub fn half_bins(&self) -> usize {
        self.fft_size / 2
    }
}

/// Complex spectrum on the radius-`r` circle, one value per FFT bin.
/// For real input the bins are conjugate-symmetric:
/// `bin[K - k] = conj(bin[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    bins: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn fft_size(&self) -> usize {
        self.bins.len()
    }
}

/// The radius weight vector: element `i` is `radius^-i`.
///
/// Strictly decreasing for `r > 1`, strictly increasing for `r < 1`,
/// all ones at `r = 1` (where the chirp spectrum is the plain DFT).
pub fn chirp_weights(radius: f64, n: usize) -> Result<Vec<f64>, ChirpError> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(ChirpError::NonPositiveRadius(radius));
    }
    if n == 0 {
        return Err(ChirpError::EmptyWeights);
    }
    Ok((0..n).map(|i| radius.powi(-(i as i32))).collect())
}

/// FFT-form chirp spectrum: weight the frame by `r^-n`, zero-pad to
/// `fft_size`, and take the FFT. At `r = 1` this is exactly the DFT.
///
/// The weights apply to the real samples only; zero-padding happens after
/// weighting (the padded tail is zero either way).
pub fn chirp_spectrum(frame: &[f64], cfg: &ChirpConfig) -> Result<ComplexSpectrum, ChirpError> {
    let fft_size = cfg.fft_size();
    if frame.len() > fft_size {
        return Err(ChirpError::FrameTooLong {
            frame_len: frame.len(),
            fft_size,
        });
    }
    let weights = chirp_weights(cfg.radius(), frame.len().max(1))?;
    let mut bins = vec![Complex64::new(0.0, 0.0); fft_size];
    for (bin, (x, w)) in bins.iter_mut().zip(frame.iter().zip(&weights)) {
        *bin = Complex64::new(x * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(fft_size).process(&mut bins);
    Ok(ComplexSpectrum { bins })
}

/// Direct-summation reference: bin `k` is
/// `sum_n x[n] * (r * exp(j*2*pi*k/fft_size))^-n`, each term evaluated
/// independently from polar form. O(N*K); tests and inspection only.
pub fn chirp_spectrum_oracle(
    frame: &[f64],
    radius: f64,
    fft_size: usize,
) -> Result<ComplexSpectrum, ChirpError> {
    let cfg = ChirpConfig::new(radius, fft_size)?;
    if frame.len() > fft_size {
        return Err(ChirpError::FrameTooLong {
            frame_len: frame.len(),
            fft_size,
        });
    }
    let bins = (0..cfg.fft_size())
        .map(|k| {
            let omega = 2.0 * std::f64::consts::PI * k as f64 / fft_size as f64;
            frame
                .iter()
                .enumerate()
                .map(|(n, &x)| {
                    x * Complex64::from_polar(radius.powi(-(n as i32)), -omega * n as f64)
                })
                .sum()
        })
        .collect();
    Ok(ComplexSpectrum { bins })
}

/// Log-magnitude half-spectrum in dB: `20*log10(|bin[k]| + 1e-10)` for
/// `k = 0 .. fft_size/2 - 1`. The floor keeps silence at exactly -200 dB
/// instead of -inf.
pub fn log_magnitude(spec: &ComplexSpectrum) -> Vec<f64> {
    spec.bins()[..spec.fft_size() / 2]
        .iter()
        .map(|b| 20.0 * (b.norm() + LOG_FLOOR).log10())
        .collect()
}
