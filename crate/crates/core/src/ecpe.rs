//! Effective contribution of the positional embedding.
//!
//! With `z` the early-stage output and `Z = sum_{n,d} z[n, d]`, the
//! contribution of `E_pos` for one image is `sum_{n,d} ReLU(dZ/dE_pos)`; the
//! dataset score adds these per-image values up. The ReLU is applied to each
//! gradient entry before summing so that negative entries cannot cancel
//! positive ones.
//!
//! `E_pos` is added directly to the PostLayerNorm input, so `dZ/dE_pos`
//! equals the gradient of `Z` with respect to that input and only one
//! LayerNorm backward pass is needed for either variant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corruptions::{enhance, CorruptionKind, CorruptionSpec};
use crate::dd::Dd;
use crate::embedding::{patchify, post_ln_input, EarlyStageConfig, Variant};
use crate::error::{Error, Result};
use crate::image::{Image, Mode};
use crate::tensor::{mean_var, pairwise_sum, Matrix, RngSeed};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// `dZ/dE_pos` by reverse-mode differentiation through the PostLayerNorm.
///
/// For a row `v` with `s = sqrt(var + eps)`, `y = (v - mean) / s` and
/// upstream gradient `g` (all ones here):
///
/// ```text
/// dv = (gamma*g - mean(gamma*g) - y * mean(gamma*g*y)) / s
/// ```
pub fn grad_epos_analytic(x: &Matrix, cfg: &EarlyStageConfig) -> Result<Matrix> {
    let v = post_ln_input(x, cfg)?;
    let post = cfg.post_ln();
    let gamma = post.gamma();
    let d = gamma.len() as f64;
    let mean_gamma = gamma.iter().sum::<f64>() / d;
    let mut grad = Matrix::zeros(v.rows(), v.cols());
    for r in 0..v.rows() {
        let row = v.row(r);
        let (mean, var) = mean_var(row);
        let inv_s = 1.0 / (var + post.epsilon()).sqrt();
        let mean_gy = row
            .iter()
            .zip(gamma)
            .map(|(&vi, &g)| g * (vi - mean) * inv_s)
            .sum::<f64>()
            / d;
        for ((out, &vi), &g) in grad.row_mut(r).iter_mut().zip(row).zip(gamma) {
            let y = (vi - mean) * inv_s;
            *out = (g - mean_gamma - y * mean_gy) * inv_s;
        }
    }
    Ok(grad)
}

/// Central-difference estimate of `dZ/dE_pos`, one entry at a time:
/// `(Z(E + h e_nd) - Z(E - h e_nd)) / 2h`.
///
/// Moving `E[n, d]` only changes row `n` of the output and leaves the `beta`
/// terms alone, so each difference is `sum_k gamma_k (y+_k - y-_k)` for
/// that row. Both rows are evaluated in double-double arithmetic, which
/// keeps cancellation error far below the `O(h^2)` truncation error.
pub fn grad_epos_fd(x: &Matrix, cfg: &EarlyStageConfig, h: f64) -> Result<Matrix> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::invalid(format!("step h = {h} outside [1e-7, 1e-3]")));
    }
    let v = post_ln_input(x, cfg)?;
    let post = cfg.post_ln();
    let (rows, cols) = v.shape();
    let entries: Vec<(usize, usize)> = (0..rows).flat_map(|n| (0..cols).map(move |d| (n, d))).collect();
    let values: Vec<f64> = entries
        .par_iter()
        .map(|&(n, d)| {
            let row: Vec<Dd> = v.row(n).iter().map(|&a| Dd::new(a)).collect();
            let shifted = |delta: f64| {
                let mut r = row.clone();
                r[d] = r[d] + Dd::new(delta);
                normalized_row_sum(&r, post.gamma(), post.epsilon())
            };
            ((shifted(h) - shifted(-h)) / Dd::new(2.0 * h)).to_f64()
        })
        .collect();
    Matrix::from_vec(rows, cols, values)
}

/// `sum_k gamma_k (v_k - mean) / sqrt(var + eps)` in double-double.
fn normalized_row_sum(v: &[Dd], gamma: &[f64], eps: f64) -> Dd {
    let n = Dd::new(v.len() as f64);
    let mean = v.iter().fold(Dd::ZERO, |a, &b| a + b) / n;
    let var = v.iter().fold(Dd::ZERO, |a, &b| {
        let c = b - mean;
        a + c * c
    }) / n;
    let s = (var + Dd::new(eps)).sqrt();
    v.iter()
        .zip(gamma)
        .fold(Dd::ZERO, |a, (&b, &g)| a + Dd::new(g) * (b - mean))
        / s
}

/// Summary of an analytic-vs-numeric gradient comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheck {
    /// Entries with `|analytic| > floor` that were compared.
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(row, col, analytic, numeric)` of the worst relative entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

pub fn grad_check(x: &Matrix, cfg: &EarlyStageConfig, h: f64, floor: f64) -> Result<GradCheck> {
    let analytic = grad_epos_analytic(x, cfg)?;
    let numeric = grad_epos_fd(x, cfg, h)?;
    let mut check = GradCheck {
        checked: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
    };
    for n in 0..analytic.rows() {
        for d in 0..analytic.cols() {
            let (a, f) = (analytic.get(n, d), numeric.get(n, d));
            let abs = (a - f).abs();
            check.max_abs_error = check.max_abs_error.max(abs);
            if a.abs() > floor {
                check.checked += 1;
                let rel = abs / a.abs();
                if rel > check.max_rel_error || check.worst.is_none() {
                    check.max_rel_error = check.max_rel_error.max(rel);
                    check.worst = Some((n, d, a, f));
                }
            }
        }
    }
    Ok(check)
}

/// ECPE of one image: `sum ReLU(dZ/dE_pos)`.
pub fn image_ecpe(x: &Matrix, cfg: &EarlyStageConfig) -> Result<f64> {
    let grad = grad_epos_analytic(x, cfg)?;
    let relu: Vec<f64> = grad.as_slice().iter().map(|&g| g.max(0.0)).collect();
    Ok(pairwise_sum(&relu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcpeReport {
    pub variant: Variant,
    pub corruption_factor: f64,
    pub num_images: usize,
    pub ecpe_value: f64,
    pub per_image_values: Vec<f64>,
    pub seed: RngSeed,
    pub mode: Mode,
    pub tool_version: String,
    pub dataset_checksum: Option<String>,
}

impl EcpeReport {
    pub fn with_checksum(mut self, checksum: impl Into<String>) -> Self {
        self.dataset_checksum = Some(checksum.into());
        self
    }
}

/// Contrast-enhances every image by `factor`, then accumulates ECPE.
///
/// `seed` is the seed the pipeline was built from; it is only recorded.
/// Per-image values are computed in parallel and reduced pairwise in
/// dataset order, so the result does not depend on thread scheduling.
pub fn ecpe_accumulate(
    images: &[Image],
    factor: f64,
    cfg: &EarlyStageConfig,
    mode: Mode,
    seed: RngSeed,
) -> Result<EcpeReport> {
    if images.is_empty() {
        return Err(Error::invalid("ECPE needs at least one image"));
    }
    if factor <= 0.0 || !factor.is_finite() {
        return Err(Error::invalid(format!("contrast factor must be > 0, got {factor}")));
    }
    let spec = CorruptionSpec::new(CorruptionKind::Contrast, factor, mode);
    let per_image_values = images
        .par_iter()
        .map(|img| {
            let corrupted = enhance(img, spec)?;
            image_ecpe(&patchify(&corrupted, cfg)?, cfg)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EcpeReport {
        variant: cfg.variant(),
        corruption_factor: factor,
        num_images: images.len(),
        ecpe_value: pairwise_sum(&per_image_values),
        per_image_values,
        seed,
        mode,
        tool_version: TOOL_VERSION.to_string(),
        dataset_checksum: None,
    })
}
