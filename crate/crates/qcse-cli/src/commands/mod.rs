pub mod corrupt;
pub mod eval;
pub mod extract;
pub mod inspect;
pub mod synth;
pub mod train;

use std::path::Path;

use anyhow::{Context, Result};

use crate::config::RunConfig;
use crate::Common;

/// Load the run config and apply the global `--seed` override.
pub fn effective_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("cannot create output directory {}", path.display()))
}

/// File stem used to pair a manifest entry with its feature file.
pub fn stem_of(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}

/// Optional waveform conditioning from the `[signal]` section: DC
/// removal first, then pre-emphasis. Both are off by default.
pub fn preprocess(
    buf: qcse::signal::AudioBuffer,
    signal: &crate::config::SignalSection,
) -> qcse::signal::AudioBuffer {
    let buf = if signal.remove_dc {
        qcse::signal::remove_dc(&buf)
    } else {
        buf
    };
    match signal.pre_emphasis {
        Some(coeff) => qcse::signal::pre_emphasize(&buf, coeff),
        None => buf,
    }
}
