//! Quartered chirp spectral envelope (QCSE) features and a 1D-CNN
//! classifier for telling whispered speech from normal speech.
//!
//! Normal speech carries pitch harmonics; whispered speech does not,
//! because the glottis never vibrates. The contrast is strongest in the
//! first quarter of the short-time spectral envelope, and it survives
//! additive white noise much better when the spectrum is estimated on a
//! z-plane circle of radius `1 + dr` (the chirp spectrum) instead of the
//! unit circle. This crate implements that whole pipeline:
//!
//! * [`signal`] — WAV ingestion, framing, windowing;
//! * [`chirp`] — the chirp spectrum via pre-weighted FFT, plus a
//!   direct-summation oracle;
//! * [`features`] — spectrograms, the quartered envelope, normalization;
//! * [`noise`] — seeded additive white Gaussian noise at a target SNR;
//! * [`corpus`] — manifests, feature files, and a synthetic parallel
//!   corpus generator;
//! * [`model`] — the 1D-CNN, its training loop, and checkpointing;
//! * [`eval`] — precision/recall/F1/accuracy reports;
//! * [`rng`] — the documented seeded randomness everything shares.
//!
//! ```
//! use qcse::chirp::{chirp_spectrum, ChirpConfig};
//!
//! // The chirp spectrum of an impulse is flat for any radius.
//! let cfg = ChirpConfig::new(1.01, 8).unwrap();
//! let spec = chirp_spectrum(&[1.0, 0.0, 0.0, 0.0], &cfg).unwrap();
//! assert!(spec.bins().iter().all(|b| (b.re - 1.0).abs() < 1e-12));
//! ```

pub mod chirp;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod model;
pub mod noise;
pub mod rng;
pub mod signal;

// The guide chapters double as doc-tests: every Rust snippet in the book
// compiles and runs under `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/chirp-spectrum.md")]
    mod chirp_spectrum {}
    #[doc = include_str!("../../../book/src/signal-pipeline.md")]
    mod signal_pipeline {}
    #[doc = include_str!("../../../book/src/quartered-envelope.md")]
    mod quartered_envelope {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/synthetic-corpus.md")]
    mod synthetic_corpus {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
}
