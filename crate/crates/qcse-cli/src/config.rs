//! The declarative run configuration.
//!
//! Every pipeline parameter lives in one document with defaults.
//! Precedence: command-line flags override config-file values override
//! defaults. The effective configuration is echoed into every output
//! directory so a result is always traceable to its parameters.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use qcse::chirp::ChirpConfig;
use qcse::corpus::{Formant, SynthConfig, WhisperTransform};
use qcse::model::{ConvSpec, ModelConfig, OptimizerKind, Padding, TrainConfig};
use qcse::signal::{FrameConfig, WindowKind};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; all randomness in a run derives from it.
    pub seed: u64,
    pub signal: SignalSection,
    pub chirp: ChirpSection,
    pub synth: SynthSection,
    pub model: ModelSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSection {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    /// rectangular | hamming | hann
    pub window: String,
    /// First-difference pre-emphasis coefficient; off when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre_emphasis: Option<f64>,
    /// Subtract the mean amplitude before framing.
    pub remove_dc: bool,
}

impl Default for SignalSection {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_len: 1024,
            hop: 256,
            window: "hamming".into(),
            pre_emphasis: None,
            remove_dc: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChirpSection {
    pub radius: f64,
    pub fft_size: usize,
}

impl Default for ChirpSection {
    fn default() -> Self {
        Self {
            radius: 1.01,
            fft_size: 1024,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub duration_s: f64,
    pub pitch_lo_hz: f64,
    pub pitch_hi_hz: f64,
    pub formant_centers_hz: Vec<f64>,
    pub formant_bandwidths_hz: Vec<f64>,
    pub formant_gains: Vec<f64>,
    pub whisper_formant_shift: f64,
    pub whisper_bandwidth_widening: f64,
    pub whisper_gain_attenuation_db: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let base = SynthConfig::default();
        Self {
            duration_s: base.duration_s,
            pitch_lo_hz: base.pitch_range_hz.0,
            pitch_hi_hz: base.pitch_range_hz.1,
            formant_centers_hz: base.formants.iter().map(|f| f.center_hz).collect(),
            formant_bandwidths_hz: base.formants.iter().map(|f| f.bandwidth_hz).collect(),
            formant_gains: base.formants.iter().map(|f| f.gain).collect(),
            whisper_formant_shift: base.whisper.formant_shift,
            whisper_bandwidth_widening: base.whisper.bandwidth_widening,
            whisper_gain_attenuation_db: base.whisper.gain_attenuation_db,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub input_bins: usize,
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub pool_size: usize,
    /// valid | same
    pub padding: String,
    pub dense_hidden: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let base = ModelConfig::default();
        Self {
            input_bins: base.input_bins,
            conv1_filters: base.conv1.filters,
            conv1_kernel: base.conv1.kernel,
            conv2_filters: base.conv2.filters,
            conv2_kernel: base.conv2.kernel,
            pool_size: base.pool_size,
            padding: "valid".into(),
            dense_hidden: base.dense_hidden,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// adaptive_moment | sgd_momentum
    pub optimizer: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            learning_rate: base.learning_rate,
            batch_size: base.batch_size,
            max_epochs: base.max_epochs,
            patience: base.patience,
            optimizer: "adaptive_moment".into(),
        }
    }
}

impl RunConfig {
    /// Defaults, optionally overlaid by a TOML config file.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config file {}", p.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("cannot parse config file {}", p.display()))
            }
        }
    }

    /// Write the effective configuration into an output directory.
    pub fn echo_into(&self, out_dir: &Path) -> Result<()> {
        let rendered = toml::to_string_pretty(self).context("serialize effective config")?;
        let path = out_dir.join("effective-config.toml");
        std::fs::write(&path, rendered)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    // --- typed views, validated before any stage runs ---

    pub fn frame_config(&self) -> Result<FrameConfig> {
        let window: WindowKind = self
            .signal
            .window
            .parse()
            .map_err(|e: String| anyhow::anyhow!(e))?;
        FrameConfig::new(self.signal.frame_len, self.signal.hop, window)
            .context("invalid [signal] section")
    }

    pub fn chirp_config(&self) -> Result<ChirpConfig> {
        ChirpConfig::new(self.chirp.radius, self.chirp.fft_size).context("invalid [chirp] section")
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let s = &self.synth;
        if s.formant_centers_hz.len() != s.formant_bandwidths_hz.len()
            || s.formant_centers_hz.len() != s.formant_gains.len()
        {
            anyhow::bail!(
                "[synth] formant_centers_hz, formant_bandwidths_hz, formant_gains must have equal lengths"
            );
        }
        let formants = s
            .formant_centers_hz
            .iter()
            .zip(&s.formant_bandwidths_hz)
            .zip(&s.formant_gains)
            .map(|((&center_hz, &bandwidth_hz), &gain)| Formant {
                center_hz,
                bandwidth_hz,
                gain,
            })
            .collect();
        let cfg = SynthConfig {
            sample_rate: self.signal.sample_rate,
            duration_s: s.duration_s,
            pitch_range_hz: (s.pitch_lo_hz, s.pitch_hi_hz),
            formants,
            whisper: WhisperTransform {
                formant_shift: s.whisper_formant_shift,
                bandwidth_widening: s.whisper_bandwidth_widening,
                gain_attenuation_db: s.whisper_gain_attenuation_db,
            },
            seed: self.seed,
        };
        cfg.validate().context("invalid [synth] section")?;
        Ok(cfg)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let m = &self.model;
        let padding: Padding = m.padding.parse().map_err(|e: String| anyhow::anyhow!(e))?;
        let cfg = ModelConfig {
            input_bins: m.input_bins,
            conv1: ConvSpec {
                filters: m.conv1_filters,
                kernel: m.conv1_kernel,
            },
            conv2: ConvSpec {
                filters: m.conv2_filters,
                kernel: m.conv2_kernel,
            },
            pool_size: m.pool_size,
            padding,
            dense_hidden: m.dense_hidden,
            classes: 2,
        };
        cfg.validate().context("invalid [model] section")?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let optimizer: OptimizerKind = t
            .optimizer
            .parse()
            .map_err(|e: String| anyhow::anyhow!(e))?;
        let cfg = TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: self.seed,
            optimizer,
        };
        cfg.validate().context("invalid [train] section")?;
        Ok(cfg)
    }
}
