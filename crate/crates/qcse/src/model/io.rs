//! Model file serialization.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic "QCM1" | version u8 = 1 | padding u8 (0 = valid, 1 = same)
//! | input_bins, conv1_filters, conv1_kernel, conv2_filters,
//!   conv2_kernel, pool_size, dense_hidden, classes   (u32 each)
//! | norm stats: n_bins u32, mean f64 * n, std f64 * n
//! | every parameter tensor in declaration order, f32, row-major
//! ```
//!
//! The round trip is bit-exact.

use std::path::Path;

use ndarray::Array1;

use super::{ConvSpec, ModelConfig, ModelError, ModelParams, Padding};
use crate::features::NormStats;

const MAGIC: [u8; 4] = *b"QCM1";
const VERSION: u8 = 1;

pub fn save_model(
    path: impl AsRef<Path>,
    cfg: &ModelConfig,
    stats: &NormStats,
    params: &ModelParams<f32>,
) -> Result<(), ModelError> {
    let path = path.as_ref();
    cfg.validate()?;
    let flat = params.to_flat();

    let mut out = Vec::with_capacity(38 + stats.bin_count() * 16 + flat.len() * 4);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(match cfg.padding {
        Padding::Valid => 0,
        Padding::Same => 1,
    });
    for field in [
        cfg.input_bins,
        cfg.conv1.filters,
        cfg.conv1.kernel,
        cfg.conv2.filters,
        cfg.conv2.kernel,
        cfg.pool_size,
        cfg.dense_hidden,
        cfg.classes,
    ] {
        out.extend_from_slice(&(field as u32).to_le_bytes());
    }
    out.extend_from_slice(&(stats.bin_count() as u32).to_le_bytes());
    for &m in stats.mean().iter() {
        out.extend_from_slice(&m.to_le_bytes());
    }
    for &s in stats.std().iter() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }

    std::fs::write(path, out).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(
    path: impl AsRef<Path>,
) -> Result<(ModelConfig, NormStats, ModelParams<f32>), ModelError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path_str.clone(),
        source,
    })?;

    let truncated = |expected: usize| ModelError::Truncated {
        path: path_str.clone(),
        expected,
        actual: bytes.len(),
    };
    if bytes.len() < 42 {
        return Err(truncated(42));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ModelError::BadMagic {
            path: path_str,
            expected: MAGIC,
            found: magic,
        });
    }
    if bytes[4] != VERSION {
        return Err(ModelError::BadVersion {
            path: path_str,
            expected: VERSION,
            found: bytes[4],
        });
    }
    let padding = match bytes[5] {
        0 => Padding::Valid,
        1 => Padding::Same,
        other => {
            return Err(ModelError::BadField {
                path: path_str,
                detail: format!("padding byte {other}"),
            })
        }
    };

    let u32_at = |offset: usize| {
        u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()) as usize
    };
    // Cap the header fields before any size arithmetic touches them.
    for offset in (6..42).step_by(4) {
        if u32_at(offset) > (1 << 20) {
            return Err(ModelError::BadField {
                path: path_str,
                detail: format!("implausible header field {} at byte {offset}", u32_at(offset)),
            });
        }
    }
    let cfg = ModelConfig {
        padding,
        input_bins: u32_at(6),
        conv1: ConvSpec {
            filters: u32_at(10),
            kernel: u32_at(14),
        },
        conv2: ConvSpec {
            filters: u32_at(18),
            kernel: u32_at(22),
        },
        pool_size: u32_at(26),
        dense_hidden: u32_at(30),
        classes: u32_at(34),
    };
    cfg.validate().map_err(|e| ModelError::BadField {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;

    let n_bins = u32_at(38);
    let stats_end = 42 + n_bins * 16;
    let n_params = super::param_count(&cfg);
    let expected_len = stats_end + n_params * 4;
    if bytes.len() != expected_len {
        return Err(ModelError::Truncated {
            path: path.display().to_string(),
            expected: expected_len,
            actual: bytes.len(),
        });
    }

    let f64s = |range: std::ops::Range<usize>| -> Array1<f64> {
        bytes[range]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let mean = f64s(42..42 + n_bins * 8);
    let std = f64s(42 + n_bins * 8..stats_end);
    let stats = NormStats::new(mean, std);

    let flat: Vec<f32> = bytes[stats_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = ModelParams::from_flat(&cfg, &flat)?;
    Ok((cfg, stats, params))
}
