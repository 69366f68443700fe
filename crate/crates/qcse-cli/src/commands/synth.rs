use std::path::Path;

use anyhow::{Context, Result};

use qcse::corpus::build_synthetic_corpus;

use super::{effective_config, ensure_dir};
use crate::Common;

pub fn run(
    common: &Common,
    train: usize,
    test: usize,
    out: &Path,
    duration: Option<f64>,
) -> Result<()> {
    let mut run_cfg = effective_config(common)?;
    if let Some(d) = duration {
        run_cfg.synth.duration_s = d;
    }
    let synth_cfg = run_cfg.synth_config()?;

    ensure_dir(out)?;
    run_cfg.echo_into(out)?;
    let manifest = build_synthetic_corpus(train, test, &synth_cfg, out)
        .context("corpus generation failed")?;
    println!("{}", manifest.display());
    Ok(())
}
