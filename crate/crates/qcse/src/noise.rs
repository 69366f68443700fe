//! Calibrated additive white Gaussian noise at a requested SNR.
//!
//! The noise sequence is i.i.d. standard Gaussian drawn from the seeded
//! generator in [`crate::rng`], so it depends only on the seed and length
//! — parallel corpora corrupted with the same seed get the same noise
//! shape. The sequence is then scaled so the realized noise power equals
//! `signal_power / 10^(snr_db/10)` exactly, which pins the realized SNR
//! to the requested one instead of leaving it to sampling fluctuation.

use thiserror::Error;

use crate::rng::SeededRng;
use crate::signal::AudioBuffer;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("cannot compute power of an empty buffer")]
    EmptyBuffer,
    #[error("signal power is zero; SNR is undefined for silence")]
    ZeroPower,
    #[error("snr_db must be finite, got {0}")]
    NonFiniteSnr(f64),
}

/// Requested SNR in dB plus the seed that fixes the noise sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, seed: u64) -> Result<Self, NoiseError> {
        if !snr_db.is_finite() {
            return Err(NoiseError::NonFiniteSnr(snr_db));
        }
        Ok(Self { snr_db, seed })
    }
}

/// Mean square amplitude: `(1/L) * sum x[i]^2`.
pub fn signal_power(buf: &AudioBuffer) -> Result<f64, NoiseError> {
    if buf.is_empty() {
        return Err(NoiseError::EmptyBuffer);
    }
    Ok(buf.samples().iter().map(|x| x * x).sum::<f64>() / buf.len() as f64)
}

/// The standard-normal noise sequence for a given seed and length,
/// before any scaling. Depends on nothing else.
pub fn unit_gaussian(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = SeededRng::from_seed(seed);
    (0..len).map(|_| rng.next_gaussian()).collect()
}

/// Add white Gaussian noise at the requested SNR.
///
/// The noise variance target is `signal_power(buf) / 10^(snr_db/10)`;
/// the drawn sequence is rescaled so its realized mean-square power hits
/// that target exactly. Output is not clipped — downstream use is
/// spectral, not playback.
pub fn add_awgn(buf: &AudioBuffer, spec: &NoiseSpec) -> Result<AudioBuffer, NoiseError> {
    let power = signal_power(buf)?;
    if power <= 0.0 {
        return Err(NoiseError::ZeroPower);
    }
    if !spec.snr_db.is_finite() {
        return Err(NoiseError::NonFiniteSnr(spec.snr_db));
    }
    let target_var = power / 10f64.powf(spec.snr_db / 10.0);

    let noise = unit_gaussian(spec.seed, buf.len());
    let realized = noise.iter().map(|n| n * n).sum::<f64>() / noise.len() as f64;
    let gain = (target_var / realized).sqrt();

    let samples = buf
        .samples()
        .iter()
        .zip(&noise)
        .map(|(x, n)| x + gain * n)
        .collect();
    Ok(AudioBuffer::new(samples, buf.sample_rate()).expect("noisy samples stay finite"))
}

/// Realized SNR of a corrupted buffer against its clean original, in dB.
pub fn measured_snr_db(clean: &AudioBuffer, noisy: &AudioBuffer) -> Result<f64, NoiseError> {
    let sig = signal_power(clean)?;
    if clean.len() != noisy.len() || clean.is_empty() {
        return Err(NoiseError::EmptyBuffer);
    }
    let noise_power = clean
        .samples()
        .iter()
        .zip(noisy.samples())
        .map(|(c, n)| (n - c) * (n - c))
        .sum::<f64>()
        / clean.len() as f64;
    if noise_power <= 0.0 {
        return Err(NoiseError::ZeroPower);
    }
    Ok(10.0 * (sig / noise_power).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(amplitude: f64, freq: f64, len: usize, rate: u32) -> AudioBuffer {
        let samples = (0..len)
            .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioBuffer::new(samples, rate).unwrap()
    }

    #[test]
    fn power_of_constant_signal() {
        let buf = AudioBuffer::new(vec![1.0; 64], 16_000).unwrap();
        assert_eq!(signal_power(&buf).unwrap(), 1.0);
    }

    #[test]
    fn power_of_full_period_sine() {
        // 10 full periods of a 100 Hz sine at 16 kHz: power = A^2 / 2.
        let buf = sine(0.8, 100.0, 1600, 16_000);
        assert!((signal_power(&buf).unwrap() - 0.32).abs() < 1e-9);
    }

    #[test]
    fn power_of_silence_and_empty() {
        let silence = AudioBuffer::new(vec![0.0; 16], 16_000).unwrap();
        assert_eq!(signal_power(&silence).unwrap(), 0.0);
        let empty = AudioBuffer::new(vec![], 16_000).unwrap();
        assert!(matches!(signal_power(&empty), Err(NoiseError::EmptyBuffer)));
    }

    #[test]
    fn zero_snr_means_equal_powers() {
        let buf = sine(0.5, 200.0, 16_000, 16_000);
        let spec = NoiseSpec::new(0.0, 7).unwrap();
        let noisy = add_awgn(&buf, &spec).unwrap();
        let sig = signal_power(&buf).unwrap();
        let noise_power: f64 = buf
            .samples()
            .iter()
            .zip(noisy.samples())
            .map(|(c, n)| (n - c) * (n - c))
            .sum::<f64>()
            / buf.len() as f64;
        assert!((noise_power - sig).abs() < 1e-12 * sig);
    }

    #[test]
    fn ten_db_sine_noise_variance() {
        // Unit-amplitude sine has power 1/2; at 10 dB the noise variance
        // target is 0.05.
        let buf = sine(1.0, 250.0, 16_000, 16_000);
        let spec = NoiseSpec::new(10.0, 3).unwrap();
        let noisy = add_awgn(&buf, &spec).unwrap();
        let noise_power: f64 = buf
            .samples()
            .iter()
            .zip(noisy.samples())
            .map(|(c, n)| (n - c) * (n - c))
            .sum::<f64>()
            / buf.len() as f64;
        assert!((noise_power - 0.05).abs() < 1e-12);
    }

    #[test]
    fn one_second_sine_within_tenth_db() {
        let buf = sine(1.0, 440.0, 16_000, 16_000);
        let spec = NoiseSpec::new(5.0, 99).unwrap();
        let noisy = add_awgn(&buf, &spec).unwrap();
        let realized = measured_snr_db(&buf, &noisy).unwrap();
        assert!((realized - 5.0).abs() < 0.1, "realized {realized}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let buf = sine(0.3, 123.0, 4_000, 16_000);
        let spec = NoiseSpec::new(5.0, 42).unwrap();
        let a = add_awgn(&buf, &spec).unwrap();
        let b = add_awgn(&buf, &spec).unwrap();
        assert_eq!(a.samples(), b.samples());
        let other = add_awgn(&buf, &NoiseSpec::new(5.0, 43).unwrap()).unwrap();
        assert_ne!(a.samples(), other.samples());
    }

    #[test]
    fn noise_shape_is_content_independent() {
        // Two different signals, same spec: the noise terms are the same
        // sequence up to the per-signal scale.
        let a = sine(0.2, 100.0, 2_000, 16_000);
        let b = sine(0.9, 700.0, 2_000, 16_000);
        let spec = NoiseSpec::new(8.0, 5).unwrap();
        let na = add_awgn(&a, &spec).unwrap();
        let nb = add_awgn(&b, &spec).unwrap();
        let noise_a: Vec<f64> = a
            .samples()
            .iter()
            .zip(na.samples())
            .map(|(c, n)| n - c)
            .collect();
        let noise_b: Vec<f64> = b
            .samples()
            .iter()
            .zip(nb.samples())
            .map(|(c, n)| n - c)
            .collect();
        let scale = noise_a[0] / noise_b[0];
        for (x, y) in noise_a.iter().zip(&noise_b) {
            assert!((x - scale * y).abs() < 1e-12);
        }
    }

    #[test]
    fn silence_rejected() {
        let silence = AudioBuffer::new(vec![0.0; 100], 16_000).unwrap();
        let spec = NoiseSpec::new(0.0, 1).unwrap();
        assert!(matches!(
            add_awgn(&silence, &spec),
            Err(NoiseError::ZeroPower)
        ));
    }

    #[test]
    fn non_finite_snr_rejected() {
        assert!(NoiseSpec::new(f64::INFINITY, 0).is_err());
        assert!(NoiseSpec::new(f64::NAN, 0).is_err());
    }
}
