use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use qcse::corpus::{load_manifest, read_features, Label, Split};
use qcse::eval::{confusion, metrics, render_csv, render_report, MetricsReport, ReportMeta};
use qcse::model::{load_model, predict_utterance};

use super::{effective_config, ensure_dir, stem_of};
use crate::Common;

pub fn run(
    common: &Common,
    manifest_path: &Path,
    features_dir: &Path,
    model_path: &Path,
    out: &Path,
    snr_db: Option<f64>,
    tag: Option<String>,
) -> Result<()> {
    let run_cfg = effective_config(common)?;

    let entries = load_manifest(manifest_path)
        .with_context(|| format!("cannot load manifest {}", manifest_path.display()))?;
    let test_entries: Vec<_> = entries.iter().filter(|e| e.split == Split::Test).collect();
    if test_entries.is_empty() {
        bail!("manifest {} has no test rows", manifest_path.display());
    }

    let mut features = Vec::with_capacity(test_entries.len());
    let mut truths: Vec<Label> = Vec::with_capacity(test_entries.len());
    for e in &test_entries {
        let path = features_dir.join(format!("{}.qcse", stem_of(&e.path)));
        features.push(
            read_features(&path)
                .with_context(|| format!("reading features {}", path.display()))?,
        );
        truths.push(e.label);
    }
    let feature_kind = features[0].kind();
    let radius = features[0].radius();
    let dataset_tag = tag.unwrap_or_else(|| {
        manifest_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });

    // A directory from `train` holds checkpoint_1/checkpoint_2; a single
    // .qcm file is also accepted.
    let checkpoints: Vec<PathBuf> = if model_path.is_dir() {
        let found: Vec<PathBuf> = ["checkpoint_1.qcm", "checkpoint_2.qcm"]
            .iter()
            .map(|name| model_path.join(name))
            .filter(|p| p.exists())
            .collect();
        if found.is_empty() {
            bail!(
                "no checkpoint_*.qcm files under {}; was this directory produced by `train`?",
                model_path.display()
            );
        }
        found
    } else {
        vec![model_path.to_path_buf()]
    };

    let mut reports: Vec<MetricsReport> = Vec::new();
    for (i, checkpoint) in checkpoints.iter().enumerate() {
        let (model_cfg, _stats, params) = load_model(checkpoint)
            .with_context(|| format!("loading model {}", checkpoint.display()))?;
        let mut predictions = Vec::with_capacity(features.len());
        for f in &features {
            let (label, _score) = predict_utterance(&model_cfg, &params, f)
                .with_context(|| format!("scoring with {}", checkpoint.display()))?;
            predictions.push(label);
        }
        let counts = confusion(&predictions, &truths)?;
        let meta = ReportMeta {
            feature: feature_kind,
            radius,
            snr_db,
            dataset: format!("{dataset_tag}/ckpt{}", i + 1),
        };
        reports.push(metrics(&counts, &meta));
    }

    // Ties prefer the earlier checkpoint (the lower validation loss).
    let best = reports
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |best, (i, r)| {
            if r.accuracy > best.1 {
                (i, r.accuracy)
            } else {
                best
            }
        });

    ensure_dir(out)?;
    run_cfg.echo_into(out)?;
    let table = render_report(&reports);
    let csv = render_csv(&reports);
    std::fs::write(out.join("report.txt"), &table).context("writing report.txt")?;
    std::fs::write(out.join("report.csv"), &csv).context("writing report.csv")?;

    print!("{table}");
    println!(
        "best-of-two: checkpoint_{} (accuracy {:.4})",
        best.0 + 1,
        best.1
    );
    Ok(())
}
