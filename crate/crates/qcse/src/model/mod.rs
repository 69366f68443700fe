//! The 1D-CNN classifier: two convolution + max-pool stages, one hidden
//! dense layer, a 2-way softmax head, and the training loop that drives
//! them.
//!
//! The pipeline is `conv(32 filters, kernel 20) -> relu -> pool(2) ->
//! conv(64, kernel 10) -> relu -> pool(2) -> flatten -> dense(1024) ->
//! relu -> dense(2) -> softmax`, applied per feature frame; utterance
//! decisions average the frame probability vectors. All arithmetic is
//! generic over `f32`/`f64`: training runs in `f32`, gradient checks in
//! `f64`, over the identical code path.

mod io;
mod layers;
mod train;

pub use io::{load_model, save_model};
pub use train::{
    train, Checkpoint, CheckpointTracker, EarlyStopper, EpochStats, OptimizerKind, TrainConfig,
    TrainLog, TrainOutcome,
};

use ndarray::{Array1, Array2, Array3, ArrayViewD, ArrayViewMutD, Axis};
use thiserror::Error;

use crate::corpus::Label;
use crate::features::FeatureMatrix;
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("input length {got} does not match input_bins {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("parameter vector length {got} does not match config ({expected})")]
    FlatLengthMismatch { expected: usize, got: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("feature matrix has no frames")]
    EmptyFeatures,
    #[error("training data contains a single class; both classes are required")]
    SingleClass,
    #[error("training diverged: non-finite loss {loss} at epoch {epoch}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("invalid train config: {0}")]
    BadTrainConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: String,
        expected: [u8; 4],
        found: [u8; 4],
    },
    #[error("{path}: unsupported model file version {found} (expected {expected})")]
    BadVersion {
        path: String,
        expected: u8,
        found: u8,
    },
    #[error("{path}: truncated model file: expected {expected} bytes, found {actual}")]
    Truncated {
        path: String,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: invalid field: {detail}")]
    BadField { path: String, detail: String },
}

/// Scalar type the network runs on. Implemented for `f32` and `f64`.
pub trait Scalar:
    ndarray::LinalgScalar
    + num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssignOps
    + ndarray::ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn cast(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn cast(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn cast(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Output-length convention for the convolutions: `valid` shrinks by
/// `kernel - 1`, `same` zero-pads to preserve length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    Valid,
    Same,
}

impl Padding {
    pub fn name(self) -> &'static str {
        match self {
            Padding::Valid => "valid",
            Padding::Same => "same",
        }
    }
}

impl std::str::FromStr for Padding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "valid" => Ok(Padding::Valid),
            "same" => Ok(Padding::Same),
            other => Err(format!("unknown padding mode '{other}'")),
        }
    }
}

/// One convolutional stage: filter count and kernel width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
}

/// Network hyperparameters. The default is the production geometry:
/// 128 input bins, conv 32xk20 and 64xk10, pool 2 after each conv,
/// dense hidden 1024, 2 classes, valid padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_bins: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub pool_size: usize,
    pub padding: Padding,
    pub dense_hidden: usize,
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_bins: 128,
            conv1: ConvSpec {
                filters: 32,
                kernel: 20,
            },
            conv2: ConvSpec {
                filters: 64,
                kernel: 10,
            },
            pool_size: 2,
            padding: Padding::Valid,
            dense_hidden: 1024,
            classes: 2,
        }
    }
}

/// Per-layer lengths derived from the config. Odd pooled lengths
/// truncate: the trailing element is discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub conv1_len: usize,
    pub pool1_len: usize,
    pub conv2_len: usize,
    pub pool2_len: usize,
    pub flatten: usize,
    pub pad1_left: usize,
    pub pad2_left: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::BadConfig(msg));
        if self.classes != 2 {
            return bad(format!("classes must be 2, got {}", self.classes));
        }
        if self.input_bins == 0
            || self.conv1.filters == 0
            || self.conv2.filters == 0
            || self.dense_hidden == 0
        {
            return bad("all layer sizes must be positive".into());
        }
        if self.pool_size == 0 {
            return bad("pool_size must be positive".into());
        }
        if self.conv1.kernel == 0 || self.conv1.kernel > self.input_bins {
            return bad(format!(
                "conv1 kernel {} exceeds its input length {}",
                self.conv1.kernel, self.input_bins
            ));
        }
        let g = self.geometry();
        if g.pool1_len == 0 {
            return bad("conv1/pool output collapsed to zero length".into());
        }
        if self.conv2.kernel == 0 || self.conv2.kernel > g.pool1_len {
            return bad(format!(
                "conv2 kernel {} exceeds its input length {}",
                self.conv2.kernel, g.pool1_len
            ));
        }
        if g.pool2_len == 0 {
            return bad("conv2/pool output collapsed to zero length".into());
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        let conv_out = |in_len: usize, kernel: usize| match self.padding {
            Padding::Valid => in_len + 1 - kernel.min(in_len),
            Padding::Same => in_len,
        };
        // Same-padding splits `kernel - 1` zeros with the extra one on
        // the right when the kernel is even.
        let pad_left = |kernel: usize| match self.padding {
            Padding::Valid => 0,
            Padding::Same => (kernel - 1) / 2,
        };
        let conv1_len = conv_out(self.input_bins, self.conv1.kernel);
        let pool1_len = conv1_len / self.pool_size;
        let conv2_len = conv_out(pool1_len, self.conv2.kernel);
        let pool2_len = conv2_len / self.pool_size;
        Geometry {
            conv1_len,
            pool1_len,
            conv2_len,
            pool2_len,
            flatten: pool2_len * self.conv2.filters,
            pad1_left: pad_left(self.conv1.kernel),
            pad2_left: pad_left(self.conv2.kernel),
        }
    }
}

/// Closed-form parameter count: every weight and bias tensor under the
/// configured padding mode.
pub fn param_count(cfg: &ModelConfig) -> usize {
    let g = cfg.geometry();
    let conv1 = cfg.conv1.filters * cfg.conv1.kernel + cfg.conv1.filters;
    let conv2 = cfg.conv2.filters * cfg.conv1.filters * cfg.conv2.kernel + cfg.conv2.filters;
    let dense1 = g.flatten * cfg.dense_hidden + cfg.dense_hidden;
    let output = cfg.dense_hidden * cfg.classes + cfg.classes;
    conv1 + conv2 + dense1 + output
}

/// All weights and biases, in declaration order:
/// conv1 w/b, conv2 w/b, dense1 w/b, output w/b.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    /// `[filters, in_channels, kernel]`
    pub conv1_w: Array3<F>,
    pub conv1_b: Array1<F>,
    pub conv2_w: Array3<F>,
    pub conv2_b: Array1<F>,
    /// `[flatten, hidden]`
    pub dense1_w: Array2<F>,
    pub dense1_b: Array1<F>,
    /// `[hidden, classes]`
    pub out_w: Array2<F>,
    pub out_b: Array1<F>,
}

impl<F: Scalar> ModelParams<F> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let g = cfg.geometry();
        Self {
            conv1_w: Array3::zeros((cfg.conv1.filters, 1, cfg.conv1.kernel)),
            conv1_b: Array1::zeros(cfg.conv1.filters),
            conv2_w: Array3::zeros((cfg.conv2.filters, cfg.conv1.filters, cfg.conv2.kernel)),
            conv2_b: Array1::zeros(cfg.conv2.filters),
            dense1_w: Array2::zeros((g.flatten, cfg.dense_hidden)),
            dense1_b: Array1::zeros(cfg.dense_hidden),
            out_w: Array2::zeros((cfg.dense_hidden, cfg.classes)),
            out_b: Array1::zeros(cfg.classes),
        }
    }

    pub fn views(&self) -> Vec<ArrayViewD<'_, F>> {
        vec![
            self.conv1_w.view().into_dyn(),
            self.conv1_b.view().into_dyn(),
            self.conv2_w.view().into_dyn(),
            self.conv2_b.view().into_dyn(),
            self.dense1_w.view().into_dyn(),
            self.dense1_b.view().into_dyn(),
            self.out_w.view().into_dyn(),
            self.out_b.view().into_dyn(),
        ]
    }

    pub fn views_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        vec![
            self.conv1_w.view_mut().into_dyn(),
            self.conv1_b.view_mut().into_dyn(),
            self.conv2_w.view_mut().into_dyn(),
            self.conv2_b.view_mut().into_dyn(),
            self.dense1_w.view_mut().into_dyn(),
            self.dense1_b.view_mut().into_dyn(),
            self.out_w.view_mut().into_dyn(),
            self.out_b.view_mut().into_dyn(),
        ]
    }

    pub fn n_params(&self) -> usize {
        self.views().iter().map(|v| v.len()).sum()
    }

    /// Flatten every tensor, declaration order, row-major.
    pub fn to_flat(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.n_params());
        for v in self.views() {
            out.extend(v.iter().copied());
        }
        out
    }

    pub fn from_flat(cfg: &ModelConfig, values: &[F]) -> Result<Self, ModelError> {
        let mut params = Self::zeros(cfg);
        let expected = params.n_params();
        if values.len() != expected {
            return Err(ModelError::FlatLengthMismatch {
                expected,
                got: values.len(),
            });
        }
        let mut cursor = 0;
        for mut view in params.views_mut() {
            for slot in view.iter_mut() {
                *slot = values[cursor];
                cursor += 1;
            }
        }
        Ok(params)
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (mut a, b) in self.views_mut().into_iter().zip(other.views()) {
            a.zip_mut_with(&b, |x, y| *x += *y);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.views().iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Fan-in-scaled uniform initialization: weights drawn uniformly from
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in))` in declaration order (row-major
/// within each tensor), biases zero. Draws are made in `f64` and cast,
/// so `f32` and `f64` instantiations see the same underlying stream.
pub fn init_params<F: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ModelParams<F>, ModelError> {
    cfg.validate()?;
    let mut rng = SeededRng::from_seed(seed);
    let mut params = ModelParams::<F>::zeros(cfg);

    let g = cfg.geometry();
    let mut fill = |tensor: &mut [F], fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for w in tensor {
            *w = F::cast(rng.next_range(-bound, bound));
        }
    };
    fill(
        params.conv1_w.as_slice_mut().unwrap(),
        cfg.conv1.kernel, // 1 input channel
    );
    fill(
        params.conv2_w.as_slice_mut().unwrap(),
        cfg.conv1.filters * cfg.conv2.kernel,
    );
    fill(params.dense1_w.as_slice_mut().unwrap(), g.flatten);
    fill(params.out_w.as_slice_mut().unwrap(), cfg.dense_hidden);
    Ok(params)
}

/// Class probabilities for a single feature frame.
pub fn forward<F: Scalar>(
    cfg: &ModelConfig,
    params: &ModelParams<F>,
    frame: &[F],
) -> Result<Array1<F>, ModelError> {
    if frame.len() != cfg.input_bins {
        return Err(ModelError::ShapeMismatch {
            expected: cfg.input_bins,
            got: frame.len(),
        });
    }
    let x = Array2::from_shape_vec((1, cfg.input_bins), frame.to_vec()).unwrap();
    let probs = layers::forward_probs(cfg, params, &x)?;
    Ok(probs.row(0).to_owned())
}

/// Batched class probabilities, one row per frame.
pub fn forward_batch<F: Scalar>(
    cfg: &ModelConfig,
    params: &ModelParams<F>,
    frames: &Array2<F>,
) -> Result<Array2<F>, ModelError> {
    layers::forward_probs(cfg, params, frames)
}

/// Mean cross-entropy over the batch plus the gradient of every
/// parameter tensor. `frames` is `[batch, input_bins]`, `labels` the
/// matching class indices.
///
/// The batch is processed in fixed 16-frame slices whose partial
/// gradients are reduced in slice order, so results are bit-identical no
/// matter how the work is scheduled.
pub fn loss_and_grad<F: Scalar>(
    cfg: &ModelConfig,
    params: &ModelParams<F>,
    frames: &Array2<F>,
    labels: &[usize],
) -> Result<(f64, ModelParams<F>), ModelError> {
    train::chunked_loss_and_grad(cfg, params, frames, labels, 1)
}

/// Average frame probability vectors into one utterance decision.
/// Exact ties go to normal (class 0).
pub fn aggregate_scores<F: Scalar>(frame_probs: &Array2<F>) -> Result<(Label, [f64; 2]), ModelError> {
    if frame_probs.nrows() == 0 {
        return Err(ModelError::EmptyFeatures);
    }
    let mean = frame_probs.mean_axis(Axis(0)).unwrap();
    let score = [mean[0].to_f64(), mean[1].to_f64()];
    let label = if score[1] > score[0] {
        Label::Whisper
    } else {
        Label::Normal
    };
    Ok((label, score))
}

/// Classify one utterance: run every frame through the network and
/// average the class probabilities.
pub fn predict_utterance<F: Scalar>(
    cfg: &ModelConfig,
    params: &ModelParams<F>,
    features: &FeatureMatrix,
) -> Result<(Label, [f64; 2]), ModelError> {
    if features.n_frames() == 0 {
        return Err(ModelError::EmptyFeatures);
    }
    if features.bin_count() != cfg.input_bins {
        return Err(ModelError::ShapeMismatch {
            expected: cfg.input_bins,
            got: features.bin_count(),
        });
    }
    let frames = features.data().mapv(|v| F::cast(v));
    let probs = layers::forward_probs(cfg, params, &frames)?;
    aggregate_scores(&probs)
}
