//! The synthetic corpus must be separable by construction: a linear
//! probe on one scalar feature (mean spectral flatness of the first
//! quarter band) has to reach 90% on held-out pairs before the CNN is
//! ever involved.

use qcse::chirp::ChirpConfig;
use qcse::corpus::{synth_normal, synth_whisper, SynthConfig};
use qcse::features::{extract, FeatureMatrix};
use qcse::rng::derive_seed;
use qcse::signal::FrameConfig;

/// Mean spectral flatness (geometric over arithmetic mean of linear
/// magnitudes) across frames of a quartered envelope in dB.
fn mean_flatness(features: &FeatureMatrix) -> f64 {
    let mut total = 0.0;
    for row in features.data().rows() {
        let n = row.len() as f64;
        let mut log_sum = 0.0;
        let mut lin_sum = 0.0;
        for &db in row {
            let mag = 10f64.powf(db / 20.0);
            log_sum += mag.ln();
            lin_sum += mag;
        }
        total += (log_sum / n).exp() / (lin_sum / n);
    }
    total / features.n_frames() as f64
}

fn flatness_of(label_is_whisper: bool, seed: u64) -> f64 {
    let cfg = SynthConfig {
        seed,
        duration_s: 0.3,
        ..SynthConfig::default()
    };
    let buf = if label_is_whisper {
        synth_whisper(&cfg).unwrap()
    } else {
        synth_normal(&cfg).unwrap()
    };
    let features = extract(
        &buf,
        &FrameConfig::default(),
        &ChirpConfig::new(1.01, 1024).unwrap(),
    )
    .unwrap();
    mean_flatness(&features)
}

#[test]
fn linear_probe_on_flatness_separates_classes() {
    // Fit a threshold on 40 training pairs, evaluate on 100 held-out
    // pairs.
    let train_pairs = 40;
    let test_pairs = 100;

    let mut normal_mean = 0.0;
    let mut whisper_mean = 0.0;
    for i in 0..train_pairs {
        let pair = derive_seed(12345, &format!("probe:train:{i}"));
        normal_mean += flatness_of(false, derive_seed(pair, "normal")) / train_pairs as f64;
        whisper_mean += flatness_of(true, derive_seed(pair, "whisper")) / train_pairs as f64;
    }
    assert!(
        whisper_mean > normal_mean,
        "whisper flatness {whisper_mean:.4} should exceed normal {normal_mean:.4}"
    );
    let threshold = 0.5 * (normal_mean + whisper_mean);

    let mut correct = 0usize;
    for i in 0..test_pairs {
        let pair = derive_seed(12345, &format!("probe:test:{i}"));
        let f_normal = flatness_of(false, derive_seed(pair, "normal"));
        let f_whisper = flatness_of(true, derive_seed(pair, "whisper"));
        correct += (f_normal < threshold) as usize;
        correct += (f_whisper >= threshold) as usize;
    }
    let accuracy = correct as f64 / (2 * test_pairs) as f64;
    assert!(
        accuracy >= 0.90,
        "flatness probe accuracy {accuracy:.3} on {test_pairs} held-out pairs"
    );
}
