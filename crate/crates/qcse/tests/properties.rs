//! Property tests over the signal, chirp, and feature invariants.

use ndarray::Array2;
use proptest::prelude::*;

use qcse::chirp::{chirp_spectrum, chirp_weights, ChirpConfig};
use qcse::features::{apply_norm, fit_norm, invert_norm, FeatureKind, FeatureMatrix};
use qcse::signal::{frame_signal, AudioBuffer, FrameConfig, WindowKind};

fn finite_samples(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn framing_preserves_content_with_rect_window_and_hop_eq_len(
        samples in finite_samples(32..512),
        frame_len in 4usize..32,
    ) {
        prop_assume!(samples.len() >= frame_len);
        let buf = AudioBuffer::new(samples.clone(), 16_000).unwrap();
        let cfg = FrameConfig::new(frame_len, frame_len, WindowKind::Rectangular).unwrap();
        let frames = frame_signal(&buf, &cfg).unwrap();

        let concatenated: Vec<f64> = frames.rows().iter().flatten().copied().collect();
        let covered = frames.n_frames() * frame_len;
        prop_assert_eq!(&concatenated[..], &samples[..covered]);
    }

    #[test]
    fn frame_count_formula_holds(
        len in 8usize..2048,
        frame_len in 4usize..64,
        hop in 1usize..64,
    ) {
        prop_assume!(hop <= frame_len && len >= frame_len);
        let buf = AudioBuffer::new(vec![0.25; len], 16_000).unwrap();
        let cfg = FrameConfig::new(frame_len, hop, WindowKind::Hann).unwrap();
        let frames = frame_signal(&buf, &cfg).unwrap();
        prop_assert_eq!(frames.n_frames(), (len - frame_len) / hop + 1);
    }

    #[test]
    fn windowing_commutes_with_gain(
        samples in finite_samples(64..128),
        gain in 0.01f64..8.0,
    ) {
        let buf = AudioBuffer::new(samples.clone(), 16_000).unwrap();
        let scaled = AudioBuffer::new(
            samples.iter().map(|s| s * gain).collect(),
            16_000,
        ).unwrap();
        let cfg = FrameConfig::new(32, 16, WindowKind::Hamming).unwrap();
        let base = frame_signal(&buf, &cfg).unwrap();
        let amplified = frame_signal(&scaled, &cfg).unwrap();
        for (row_a, row_b) in base.rows().iter().zip(amplified.rows()) {
            for (a, b) in row_a.iter().zip(row_b) {
                prop_assert!((a * gain - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chirp_weights_monotone(radius in 0.8f64..1.2, n in 2usize..128) {
        prop_assume!((radius - 1.0).abs() > 1e-6);
        let w = chirp_weights(radius, n).unwrap();
        if radius > 1.0 {
            prop_assert!(w.windows(2).all(|p| p[1] < p[0]));
        } else {
            prop_assert!(w.windows(2).all(|p| p[1] > p[0]));
        }
    }

    #[test]
    fn chirp_spectrum_conjugate_symmetric(
        frame in finite_samples(1..64),
        radius in 0.9f64..1.1,
    ) {
        let cfg = ChirpConfig::new(radius, 64).unwrap();
        let spec = chirp_spectrum(&frame, &cfg).unwrap();
        let k = spec.fft_size();
        for i in 1..k {
            let d = (spec.bins()[k - i] - spec.bins()[i].conj()).norm();
            prop_assert!(d < 1e-9, "bin {}: asymmetry {}", i, d);
        }
    }

    #[test]
    fn chirp_spectrum_linear(
        x in finite_samples(16..17),
        y in finite_samples(16..17),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let cfg = ChirpConfig::new(1.03, 16).unwrap();
        let combined: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
        let sx = chirp_spectrum(&x, &cfg).unwrap();
        let sy = chirp_spectrum(&y, &cfg).unwrap();
        let sc = chirp_spectrum(&combined, &cfg).unwrap();
        for ((xi, yi), ci) in sx.bins().iter().zip(sy.bins()).zip(sc.bins()) {
            prop_assert!((ci - (xi * a + yi * b)).norm() < 1e-9);
        }
    }

    #[test]
    fn normalization_round_trips_within_1e9(
        rows in 1usize..20,
        cols in 1usize..16,
        seed in 0u64..1000,
    ) {
        let mut rng = qcse::rng::SeededRng::from_seed(seed);
        let data = Array2::from_shape_fn((rows, cols), |_| rng.next_range(-200.0, 20.0));
        let f = FeatureMatrix::new(data, FeatureKind::Qcse, 1.01);
        let stats = fit_norm(std::slice::from_ref(&f)).unwrap();
        let back = invert_norm(&apply_norm(&f, &stats).unwrap(), &stats).unwrap();
        for (a, b) in f.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn feature_file_round_trip(
        rows in 1usize..12,
        cols in 1usize..40,
        seed in 0u64..1000,
    ) {
        let mut rng = qcse::rng::SeededRng::from_seed(seed);
        let data = Array2::from_shape_fn((rows, cols), |_| {
            rng.next_range(-200.0, 20.0) as f32 as f64
        });
        let f = FeatureMatrix::new(data, FeatureKind::Qse, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.qcse");
        qcse::corpus::write_features(&p, &f).unwrap();
        let back = qcse::corpus::read_features(&p).unwrap();
        prop_assert_eq!(back.data(), f.data());
    }
}
