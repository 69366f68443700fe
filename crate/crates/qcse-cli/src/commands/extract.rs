use std::collections::HashSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use qcse::chirp::ChirpConfig;
use qcse::corpus::{load_manifest, write_features, write_norm_stats, ManifestEntry, Split};
use qcse::features::{apply_norm, extract, fit_norm, FeatureMatrix};
use qcse::noise::{add_awgn, NoiseSpec};
use qcse::rng::derive_seed;
use qcse::signal::read_wav;

use super::{effective_config, ensure_dir, preprocess, stem_of};
use crate::Common;

#[allow(clippy::too_many_arguments)]
pub fn run(
    common: &Common,
    manifest_path: &Path,
    out: &Path,
    radius: Option<f64>,
    snr_db: Option<f64>,
    pre_emphasis: Option<f64>,
    remove_dc: bool,
) -> Result<()> {
    let mut run_cfg = effective_config(common)?;
    if let Some(r) = radius {
        run_cfg.chirp.radius = r;
    }
    if let Some(coeff) = pre_emphasis {
        run_cfg.signal.pre_emphasis = Some(coeff);
    }
    if remove_dc {
        run_cfg.signal.remove_dc = true;
    }
    let frame_cfg = run_cfg.frame_config()?;
    let chirp_cfg: ChirpConfig = run_cfg.chirp_config()?;
    let expected_rate = run_cfg.signal.sample_rate;
    let master_seed = run_cfg.seed;

    let entries = load_manifest(manifest_path)
        .with_context(|| format!("cannot load manifest {}", manifest_path.display()))?;

    // Feature files are keyed by the audio file stem; collisions would
    // silently overwrite, so they are rejected up front.
    let mut seen = HashSet::new();
    for e in &entries {
        if !seen.insert(stem_of(&e.path)) {
            bail!("duplicate file stem '{}' in manifest", stem_of(&e.path));
        }
    }

    ensure_dir(out)?;
    run_cfg.echo_into(out)?;

    let extract_one = |entry: &ManifestEntry| -> Result<(String, FeatureMatrix)> {
        let wav_path = entry.resolve(manifest_path);
        let mut buf =
            read_wav(&wav_path).with_context(|| format!("reading {}", wav_path.display()))?;
        if buf.sample_rate() != expected_rate {
            bail!(
                "{}: sample rate {} Hz, expected {} Hz (resampling is not supported)",
                wav_path.display(),
                buf.sample_rate(),
                expected_rate
            );
        }
        let stem = stem_of(&entry.path);
        if let Some(snr) = snr_db {
            // Noise goes onto the waveform as read; conditioning is part
            // of the feature front end.
            let spec = NoiseSpec::new(snr, derive_seed(master_seed, &format!("corrupt:{stem}")))
                .context("invalid SNR")?;
            buf = add_awgn(&buf, &spec)
                .with_context(|| format!("corrupting {}", wav_path.display()))?;
        }
        let buf = preprocess(buf, &run_cfg.signal);
        let features = extract(&buf, &frame_cfg, &chirp_cfg)
            .with_context(|| format!("extracting {}", wav_path.display()))?;
        Ok((stem, features))
    };

    // Pass 1: raw features, in manifest order.
    let results: Vec<Result<(String, FeatureMatrix)>> =
        entries.par_iter().map(extract_one).collect();
    let mut raw = Vec::with_capacity(entries.len());
    let mut failures = Vec::new();
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok(item) => raw.push(item),
            Err(e) => failures.push(format!("{}: {e:#}", entry.path)),
        }
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("failed: {f}");
        }
        bail!("{} of {} items failed", failures.len(), entries.len());
    }

    // Normalization statistics come from the training split only.
    let train_features: Vec<FeatureMatrix> = entries
        .iter()
        .zip(&raw)
        .filter(|(e, _)| e.split == Split::Train)
        .map(|(_, (_, f))| f.clone())
        .collect();
    if train_features.is_empty() {
        bail!("manifest has no training rows; cannot fit normalization statistics");
    }
    let stats = fit_norm(&train_features).context("fitting normalization statistics")?;
    write_norm_stats(out.join("norm_stats.qcn"), &stats)?;

    // Pass 2: normalize and persist.
    let writes: Vec<Result<()>> = raw
        .par_iter()
        .map(|(stem, features)| {
            let normalized = apply_norm(features, &stats)?;
            write_features(out.join(format!("{stem}.qcse")), &normalized)?;
            Ok(())
        })
        .collect();
    for w in writes {
        w?;
    }

    println!(
        "extracted {} utterances ({} bins, radius {}, {})",
        raw.len(),
        stats.bin_count(),
        chirp_cfg.radius(),
        match snr_db {
            Some(snr) => format!("snr {snr} dB"),
            None => "clean".to_string(),
        }
    );
    Ok(())
}
