//! Training loop: seeded shuffling, mini-batch gradient steps, early
//! stopping on a held-out validation split, and retention of the two
//! lowest-loss checkpoints.
//!
//! Training runs in `f32`. Gradients are always computed over fixed
//! 16-frame slices reduced in slice order, so a run is bit-reproducible
//! for any worker count, including 1.

use ndarray::Array2;
use rayon::prelude::*;

use super::{layers, ModelConfig, ModelError, ModelParams, Scalar};
use crate::corpus::Label;
use crate::features::FeatureMatrix;
use crate::rng::{derive_seed, SeededRng};

/// Fixed gradient-slice width; the unit of parallel work and of the
/// canonical reduction order.
const GRAD_CHUNK: usize = 16;

/// Fraction of training utterances held out for early stopping.
const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    AdaptiveMoment,
    SgdMomentum,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::AdaptiveMoment => "adaptive_moment",
            OptimizerKind::SgdMomentum => "sgd_momentum",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adaptive_moment" | "adam" => Ok(OptimizerKind::AdaptiveMoment),
            "sgd_momentum" | "sgd" => Ok(OptimizerKind::SgdMomentum),
            other => Err(format!("unknown optimizer '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 50,
            patience: 3,
            seed: 0,
            optimizer: OptimizerKind::AdaptiveMoment,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::BadTrainConfig(msg.to_string()));
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max epochs must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        Ok(())
    }
}

/// Parameter snapshot taken at the end of an epoch.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub epoch: usize,
    pub val_loss: f64,
}

/// Keeps the two lowest-validation-loss checkpoints, ascending by loss
/// (ties broken toward the earlier epoch).
#[derive(Debug, Default)]
pub struct CheckpointTracker {
    best: Vec<Checkpoint>,
}

impl CheckpointTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn offer(&mut self, candidate: Checkpoint) {
        self.best.push(candidate);
        self.best.sort_by(|a, b| {
            a.val_loss
                .partial_cmp(&b.val_loss)
                .unwrap()
                .then(a.epoch.cmp(&b.epoch))
        });
        self.best.truncate(2);
    }

    pub fn into_sorted(self) -> Vec<Checkpoint> {
        self.best
    }
}

/// Stops after `patience` consecutive epochs without strict
/// validation-loss improvement.
#[derive(Debug)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Record an epoch's validation loss; returns true when training
    /// should stop.
    pub fn should_stop(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        self.bad_epochs >= self.patience
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub stopped_early: bool,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.train_loss, e.val_loss));
        }
        out
    }
}

pub struct TrainOutcome {
    /// Parameters of the lowest-validation-loss checkpoint.
    pub best: ModelParams<f32>,
    /// At most two checkpoints, ascending by validation loss.
    pub checkpoints: Vec<Checkpoint>,
    pub log: TrainLog,
}

/// Mean loss and mean gradients over the batch via fixed-size slices
/// reduced in order. `workers > 1` computes slices in parallel; the
/// result is identical either way.
pub(crate) fn chunked_loss_and_grad<F: Scalar>(
    cfg: &ModelConfig,
    params: &ModelParams<F>,
    frames: &Array2<F>,
    labels: &[usize],
    workers: usize,
) -> Result<(f64, ModelParams<F>), ModelError> {
    let batch = frames.nrows();
    if batch == 0 {
        return Err(ModelError::EmptyBatch);
    }
    if batch != labels.len() {
        return Err(ModelError::ShapeMismatch {
            expected: batch,
            got: labels.len(),
        });
    }
    let geom = cfg.geometry();

    let ranges: Vec<(usize, usize)> = (0..batch)
        .step_by(GRAD_CHUNK)
        .map(|start| (start, (start + GRAD_CHUNK).min(batch)))
        .collect();

    let run_chunk = |&(start, end): &(usize, usize)| -> Result<(f64, ModelParams<F>), ModelError> {
        let x = frames.slice(ndarray::s![start..end, ..]).to_owned();
        let chunk_labels = &labels[start..end];
        let cache = layers::forward_full(cfg, params, &x)?;
        let loss_sum = layers::cross_entropy_sum(&cache.probs, chunk_labels);
        let grad_sum = layers::backward_sum(cfg, &geom, params, &cache, chunk_labels);
        Ok((loss_sum, grad_sum))
    };

    let partials: Vec<(f64, ModelParams<F>)> = if workers > 1 {
        ranges
            .par_iter()
            .map(run_chunk)
            .collect::<Result<Vec<_>, _>>()?
    } else {
        ranges
            .iter()
            .map(run_chunk)
            .collect::<Result<Vec<_>, _>>()?
    };

    // Reduce in slice order regardless of how the work was scheduled.
    let mut loss = 0.0;
    let mut grad = ModelParams::<F>::zeros(cfg);
    for (l, g) in &partials {
        loss += l;
        grad.add_assign(g);
    }
    let scale = F::cast(1.0 / batch as f64);
    for mut view in grad.views_mut() {
        view.mapv_inplace(|v| v * scale);
    }
    Ok((loss / batch as f64, grad))
}

/// Mean cross-entropy without gradients, same fixed slicing.
fn chunked_loss<F: Scalar>(
    cfg: &ModelConfig,
    params: &ModelParams<F>,
    frames: &Array2<F>,
    labels: &[usize],
) -> Result<f64, ModelError> {
    let batch = frames.nrows();
    if batch == 0 {
        return Err(ModelError::EmptyBatch);
    }
    let mut sum = 0.0;
    for start in (0..batch).step_by(GRAD_CHUNK) {
        let end = (start + GRAD_CHUNK).min(batch);
        let x = frames.slice(ndarray::s![start..end, ..]).to_owned();
        let probs = layers::forward_probs(cfg, params, &x)?;
        sum += layers::cross_entropy_sum(&probs, &labels[start..end]);
    }
    Ok(sum / batch as f64)
}

#[allow(clippy::large_enum_variant)]
enum OptimizerState {
    Adam {
        m: ModelParams<f32>,
        v: ModelParams<f32>,
        step: i32,
    },
    Momentum {
        velocity: ModelParams<f32>,
    },
}

impl OptimizerState {
    fn new(kind: OptimizerKind, cfg: &ModelConfig) -> Self {
        match kind {
            OptimizerKind::AdaptiveMoment => OptimizerState::Adam {
                m: ModelParams::zeros(cfg),
                v: ModelParams::zeros(cfg),
                step: 0,
            },
            OptimizerKind::SgdMomentum => OptimizerState::Momentum {
                velocity: ModelParams::zeros(cfg),
            },
        }
    }

    fn apply(&mut self, params: &mut ModelParams<f32>, grad: &ModelParams<f32>, lr: f32) {
        match self {
            OptimizerState::Adam { m, v, step } => {
                const BETA1: f32 = 0.9;
                const BETA2: f32 = 0.999;
                const EPS: f32 = 1e-8;
                *step += 1;
                let bias1 = 1.0 - BETA1.powi(*step);
                let bias2 = 1.0 - BETA2.powi(*step);
                for (((mut p, g), mut mi), mut vi) in params
                    .views_mut()
                    .into_iter()
                    .zip(grad.views())
                    .zip(m.views_mut())
                    .zip(v.views_mut())
                {
                    ndarray::Zip::from(&mut p)
                        .and(&g)
                        .and(&mut mi)
                        .and(&mut vi)
                        .for_each(|p, &g, m, v| {
                            *m = BETA1 * *m + (1.0 - BETA1) * g;
                            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                            let m_hat = *m / bias1;
                            let v_hat = *v / bias2;
                            *p -= lr * m_hat / (v_hat.sqrt() + EPS);
                        });
                }
            }
            OptimizerState::Momentum { velocity } => {
                const MU: f32 = 0.9;
                for ((mut p, g), mut vel) in params
                    .views_mut()
                    .into_iter()
                    .zip(grad.views())
                    .zip(velocity.views_mut())
                {
                    ndarray::Zip::from(&mut p).and(&g).and(&mut vel).for_each(
                        |p, &g, vel| {
                            *vel = MU * *vel + g;
                            *p -= lr * *vel;
                        },
                    );
                }
            }
        }
    }
}

/// Train from scratch on labeled utterances.
///
/// Frames inherit their utterance's label. 10% of the utterances
/// (at least one) are held out for validation; training stops when the
/// validation loss fails to improve for `patience` consecutive epochs
/// or at `max_epochs`. Returns the best parameters, the two lowest-loss
/// checkpoints, and the per-epoch log. A non-finite loss aborts with
/// [`ModelError::Divergence`].
pub fn train(
    dataset: &[(FeatureMatrix, Label)],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    workers: usize,
) -> Result<TrainOutcome, ModelError> {
    mcfg.validate()?;
    tcfg.validate()?;
    if dataset.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let has_normal = dataset.iter().any(|(_, l)| *l == Label::Normal);
    let has_whisper = dataset.iter().any(|(_, l)| *l == Label::Whisper);
    if !has_normal || !has_whisper {
        return Err(ModelError::SingleClass);
    }
    for (f, _) in dataset {
        if f.bin_count() != mcfg.input_bins {
            return Err(ModelError::ShapeMismatch {
                expected: mcfg.input_bins,
                got: f.bin_count(),
            });
        }
    }

    // Hold out ~10% of utterances (at least 1) for early stopping.
    let n_utts = dataset.len();
    let mut order: Vec<usize> = (0..n_utts).collect();
    SeededRng::from_seed(derive_seed(tcfg.seed, "model:valsplit")).shuffle(&mut order);
    let n_val = ((n_utts as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, n_utts - 1);
    let (val_utts, train_utts) = order.split_at(n_val);

    let collect_frames = |utts: &[usize]| -> (Array2<f32>, Vec<usize>) {
        let mut sorted: Vec<usize> = utts.to_vec();
        sorted.sort_unstable();
        let total: usize = sorted.iter().map(|&i| dataset[i].0.n_frames()).sum();
        let mut frames = Array2::<f32>::zeros((total, mcfg.input_bins));
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for &i in &sorted {
            let (f, label) = &dataset[i];
            for src in f.data().rows() {
                for (dst, &v) in frames.row_mut(row).iter_mut().zip(src) {
                    *dst = v as f32;
                }
                labels.push(label.index());
                row += 1;
            }
        }
        (frames, labels)
    };
    let (train_frames, train_labels) = collect_frames(train_utts);
    let (val_frames, val_labels) = collect_frames(val_utts);
    let n_train = train_frames.nrows();

    let mut params = super::init_params::<f32>(mcfg, derive_seed(tcfg.seed, "model:init"))?;
    let mut optimizer = OptimizerState::new(tcfg.optimizer, mcfg);
    let mut stopper = EarlyStopper::new(tcfg.patience);
    let mut tracker = CheckpointTracker::new();
    let mut log = TrainLog::default();
    let lr = tcfg.learning_rate as f32;

    for epoch in 1..=tcfg.max_epochs {
        let mut indices: Vec<usize> = (0..n_train).collect();
        SeededRng::from_seed(derive_seed(tcfg.seed, &format!("model:epoch:{epoch}")))
            .shuffle(&mut indices);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch_idx in indices.chunks(tcfg.batch_size) {
            let mut x = Array2::<f32>::zeros((batch_idx.len(), mcfg.input_bins));
            let mut y = Vec::with_capacity(batch_idx.len());
            for (row, &i) in batch_idx.iter().enumerate() {
                x.row_mut(row).assign(&train_frames.row(i));
                y.push(train_labels[i]);
            }
            let (loss, grad) = chunked_loss_and_grad(mcfg, &params, &x, &y, workers)?;
            if !loss.is_finite() {
                return Err(ModelError::Divergence { epoch, loss });
            }
            optimizer.apply(&mut params, &grad, lr);
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches as f64;

        let val_loss = chunked_loss(mcfg, &params, &val_frames, &val_labels)?;
        if !val_loss.is_finite() || !params.all_finite() {
            return Err(ModelError::Divergence {
                epoch,
                loss: val_loss,
            });
        }
        log.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        tracker.offer(Checkpoint {
            params: params.clone(),
            epoch,
            val_loss,
        });

        if stopper.should_stop(val_loss) {
            log.stopped_early = true;
            break;
        }
    }

    let checkpoints = tracker.into_sorted();
    let best = checkpoints
        .first()
        .expect("at least one epoch ran")
        .clone();
    log.best_epoch = best.epoch;
    Ok(TrainOutcome {
        best: best.params,
        checkpoints,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopper_counts_exactly_patience_bad_epochs() {
        // Strictly worsening losses after the first epoch: stops after
        // exactly 3 further epochs.
        let mut s = EarlyStopper::new(3);
        assert!(!s.should_stop(1.0)); // improvement (first observation)
        assert!(!s.should_stop(1.1)); // bad 1
        assert!(!s.should_stop(1.2)); // bad 2
        assert!(s.should_stop(1.3)); // bad 3 -> stop
    }

    #[test]
    fn early_stopper_resets_on_improvement() {
        let mut s = EarlyStopper::new(2);
        assert!(!s.should_stop(1.0));
        assert!(!s.should_stop(1.5));
        assert!(!s.should_stop(0.9)); // improvement resets the counter
        assert!(!s.should_stop(1.0));
        assert!(s.should_stop(1.0)); // equal is not an improvement
    }

    #[test]
    fn tracker_keeps_two_lowest_sorted() {
        let cfg = ModelConfig {
            input_bins: 32,
            conv1: super::super::ConvSpec {
                filters: 2,
                kernel: 5,
            },
            conv2: super::super::ConvSpec {
                filters: 2,
                kernel: 3,
            },
            dense_hidden: 4,
            ..ModelConfig::default()
        };
        let params = ModelParams::<f32>::zeros(&cfg);
        let mut t = CheckpointTracker::new();
        for (epoch, loss) in [(1, 0.9), (2, 0.5), (3, 0.7), (4, 0.4), (5, 1.2)] {
            t.offer(Checkpoint {
                params: params.clone(),
                epoch,
                val_loss: loss,
            });
        }
        let best = t.into_sorted();
        assert_eq!(best.len(), 2);
        assert_eq!(best[0].epoch, 4);
        assert_eq!(best[1].epoch, 2);
        assert!(best[0].val_loss <= best[1].val_loss);
    }
}
