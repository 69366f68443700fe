use std::path::Path;

use anyhow::{Context, Result};

use qcse::chirp::ChirpConfig;
use qcse::features::{quarter, spectrogram};
use qcse::noise::{add_awgn, NoiseSpec};
use qcse::rng::derive_seed;
use qcse::signal::{read_wav, AudioBuffer, FrameConfig};

use super::{effective_config, ensure_dir, preprocess, stem_of};
use crate::Common;

/// Mean quartered envelope over all frames, in dB.
fn mean_quartered_envelope(
    buf: &AudioBuffer,
    frame_cfg: &FrameConfig,
    radius: f64,
    fft_size: usize,
) -> Result<Vec<f64>> {
    let chirp_cfg = ChirpConfig::new(radius, fft_size)?;
    let spec = spectrogram(buf, frame_cfg, &chirp_cfg)?;
    let quartered = quarter(&spec)?;
    let n_frames = quartered.n_frames() as f64;
    let mut mean = vec![0.0; quartered.bin_count()];
    for row in quartered.data().rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v / n_frames;
        }
    }
    Ok(mean)
}

/// Complex chirp spectrum of the first windowed frame, as CSV.
fn dump_spectrum(
    buf: &AudioBuffer,
    frame_cfg: &FrameConfig,
    radius: f64,
    fft_size: usize,
    use_oracle: bool,
    out: &Path,
) -> Result<()> {
    use qcse::chirp::{chirp_spectrum, chirp_spectrum_oracle, LOG_FLOOR};
    use qcse::signal::frame_signal;

    let frames = frame_signal(buf, frame_cfg)?;
    let frame = &frames.rows()[0];
    let spec = if use_oracle {
        chirp_spectrum_oracle(frame, radius, fft_size)?
    } else {
        chirp_spectrum(frame, &ChirpConfig::new(radius, fft_size)?)?
    };
    let mut csv = String::from("bin,real,imag,magnitude_db\n");
    for (bin, v) in spec.bins().iter().enumerate() {
        let db = 20.0 * (v.norm() + LOG_FLOOR).log10();
        csv.push_str(&format!("{bin},{:.9},{:.9},{db:.6}\n", v.re, v.im));
    }
    std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

pub fn run(
    common: &Common,
    input: &Path,
    out: &Path,
    radius: Option<f64>,
    snr_db: Option<f64>,
    spectrum_csv: Option<&Path>,
    use_oracle: bool,
) -> Result<()> {
    let mut run_cfg = effective_config(common)?;
    if let Some(r) = radius {
        run_cfg.chirp.radius = r;
    }
    let frame_cfg = run_cfg.frame_config()?;
    let chirp_radius = run_cfg.chirp.radius;
    let fft_size = run_cfg.chirp.fft_size;

    let raw = read_wav(input).with_context(|| format!("reading {}", input.display()))?;
    let clean = preprocess(raw.clone(), &run_cfg.signal);
    let qse = mean_quartered_envelope(&clean, &frame_cfg, 1.0, fft_size)?;
    let qcse = mean_quartered_envelope(&clean, &frame_cfg, chirp_radius, fft_size)?;

    if let Some(spectrum_out) = spectrum_csv {
        dump_spectrum(
            &clean,
            &frame_cfg,
            chirp_radius,
            fft_size,
            use_oracle,
            spectrum_out,
        )?;
        println!(
            "wrote complex spectrum ({}) to {}",
            if use_oracle { "direct summation" } else { "fft path" },
            spectrum_out.display()
        );
    }

    let noisy = match snr_db {
        Some(snr) => {
            let stem = stem_of(&input.display().to_string());
            let spec = NoiseSpec::new(snr, derive_seed(run_cfg.seed, &format!("corrupt:{stem}")))
                .context("invalid SNR")?;
            let noisy_buf = preprocess(
                add_awgn(&raw, &spec)
                    .with_context(|| format!("corrupting {}", input.display()))?,
                &run_cfg.signal,
            );
            Some((
                mean_quartered_envelope(&noisy_buf, &frame_cfg, 1.0, fft_size)?,
                mean_quartered_envelope(&noisy_buf, &frame_cfg, chirp_radius, fft_size)?,
            ))
        }
        None => None,
    };

    let mut csv = String::new();
    match &noisy {
        None => {
            csv.push_str("bin,qse_db,qcse_db\n");
            for (bin, (a, b)) in qse.iter().zip(&qcse).enumerate() {
                csv.push_str(&format!("{bin},{a:.6},{b:.6}\n"));
            }
        }
        Some((qse_noisy, qcse_noisy)) => {
            csv.push_str("bin,qse_db,qcse_db,qse_noisy_db,qcse_noisy_db\n");
            for bin in 0..qse.len() {
                csv.push_str(&format!(
                    "{bin},{:.6},{:.6},{:.6},{:.6}\n",
                    qse[bin], qcse[bin], qse_noisy[bin], qcse_noisy[bin]
                ));
            }
        }
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "wrote {} bins (radius {chirp_radius}{}) to {}",
        qse.len(),
        match snr_db {
            Some(snr) => format!(", plus {snr} dB corrupted columns"),
            None => String::new(),
        },
        out.display()
    );
    Ok(())
}
