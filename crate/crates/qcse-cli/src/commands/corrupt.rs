use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use qcse::noise::{add_awgn, NoiseSpec};
use qcse::rng::derive_seed;
use qcse::signal::{read_wav, write_wav};

use super::{effective_config, ensure_dir, stem_of};
use crate::Common;

pub fn run(common: &Common, input: &Path, snr_db: f64, out: &Path) -> Result<()> {
    let run_cfg = effective_config(common)?;
    let master_seed = run_cfg.seed;

    let mut files: Vec<PathBuf> = if input.is_dir() {
        std::fs::read_dir(input)
            .with_context(|| format!("cannot read directory {}", input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "wav"))
            .collect()
    } else {
        vec![input.to_path_buf()]
    };
    files.sort();
    if files.is_empty() {
        bail!("no .wav files under {}", input.display());
    }

    ensure_dir(out)?;
    run_cfg.echo_into(out)?;

    let results: Vec<Result<usize>> = files
        .par_iter()
        .map(|path| {
            let buf = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
            let stem = stem_of(&path.display().to_string());
            let spec = NoiseSpec::new(snr_db, derive_seed(master_seed, &format!("corrupt:{stem}")))
                .context("invalid SNR")?;
            let noisy = add_awgn(&buf, &spec)
                .with_context(|| format!("corrupting {}", path.display()))?;
            let target = out.join(path.file_name().expect("wav file name"));
            let clipped =
                write_wav(&target, &noisy).with_context(|| format!("writing {}", target.display()))?;
            Ok(clipped)
        })
        .collect();

    let mut failures = Vec::new();
    let mut total_clipped = 0usize;
    for (path, result) in files.iter().zip(results) {
        match result {
            Ok(clipped) => {
                if clipped > 0 {
                    eprintln!(
                        "warning: {}: {clipped} samples clipped at quantization",
                        path.display()
                    );
                    total_clipped += clipped;
                }
            }
            Err(e) => failures.push(format!("{}: {e:#}", path.display())),
        }
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("failed: {f}");
        }
        bail!("{} of {} files failed", failures.len(), files.len());
    }
    println!(
        "corrupted {} files at {snr_db} dB ({total_clipped} clipped samples)",
        files.len()
    );
    Ok(())
}
