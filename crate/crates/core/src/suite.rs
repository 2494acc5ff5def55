//! Seeded property suite for the early stage.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ecpe::{grad_check, TOOL_VERSION};
use crate::embedding::{consistency_gap, ln_normalize, EarlyStageConfig, EarlyStageInit, ScaleBias, Variant, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::tensor::{row_mean_var, Matrix, RngSeed};

/// Scales and shifts applied to every sampled matrix.
pub const SCALES: [f64; 3] = [0.5, 2.0, 5.0];
pub const SHIFTS: [f64; 3] = [-1.0, 0.0, 3.0];

/// Half-width of the uniform distribution the invariance checks sample
/// patch matrices from. Row variances land near `200^2 / 3`.
pub const INVARIANCE_RANGE: f64 = 200.0;

pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;
pub const CONSISTENCY_TOLERANCE: f64 = 1e-8;
pub const INCONSISTENCY_THRESHOLD: f64 = 1e-2;
pub const INCONSISTENCY_FRACTION: f64 = 0.99;
pub const INCONSISTENCY_SCALE: ScaleBias = ScaleBias::new(2.0, 0.5);
pub const GRADIENT_STEP: f64 = 1e-5;
pub const GRADIENT_FLOOR: f64 = 1e-8;
pub const GRADIENT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub trials: usize,
    pub grid: (usize, usize),
    pub patch_size: usize,
    pub embed_dim: usize,
    pub gradient_configs: usize,
    pub seed: RngSeed,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            trials: 1000,
            grid: (6, 6),
            patch_size: 16,
            embed_dim: 64,
            gradient_configs: 4,
            seed: RngSeed(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub variant: Option<Variant>,
    /// `measured < threshold` or `measured >= threshold`, spelled out.
    pub criterion: String,
    pub measured: f64,
    pub threshold: f64,
    pub trials: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub tool_version: String,
    pub seed: RngSeed,
    pub config: SuiteConfig,
    pub properties: Vec<PropertyResult>,
    pub passed: bool,
}

/// Patch matrix for trial `t`, entries uniform in `[-range, range]`.
pub fn sample_patches(cfg: &SuiteConfig, trial: usize, range: f64) -> Result<Matrix> {
    let n = cfg.grid.0 * cfg.grid.1;
    Matrix::random_uniform(n, cfg.embed_dim, -range, range, cfg.seed.derive(1_000_000 + trial as u64))
}

fn affine_pairs() -> impl Iterator<Item = ScaleBias> {
    SCALES.into_iter().flat_map(|a| SHIFTS.into_iter().map(move |b| ScaleBias::new(a, b)))
}

/// Largest `|N(aX + b) - N(X)|` over all trials and scale/shift pairs.
pub fn normalization_error(cfg: &SuiteConfig) -> Result<f64> {
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let x = sample_patches(cfg, t, INVARIANCE_RANGE)?;
            if row_mean_var(&x).1.iter().any(|&v| v < 1.0) {
                return Err(Error::invalid("sampled row with variance below 1"));
            }
            let base = ln_normalize(&x, DEFAULT_EPSILON)?;
            affine_pairs().try_fold(0.0_f64, |m, sb| {
                let moved = ln_normalize(&sb.apply_to_patches(&x)?, DEFAULT_EPSILON)?;
                Ok(m.max(moved.max_abs_diff(&base)?))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_trial.into_iter().fold(0.0, f64::max))
}

/// Consistency gaps of `stage` for every trial and scale/shift pair.
pub fn consistency_gaps(cfg: &SuiteConfig, stage: &EarlyStageConfig, range: f64, pairs: &[ScaleBias]) -> Result<Vec<f64>> {
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let x = sample_patches(cfg, t, range)?;
            pairs.iter().map(|sb| consistency_gap(&x, sb, stage)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

pub fn stage(variant: Variant, cfg: &SuiteConfig, index: u64) -> Result<EarlyStageConfig> {
    EarlyStageConfig::random(
        variant,
        cfg.patch_size,
        cfg.grid,
        cfg.embed_dim,
        &EarlyStageInit::default(),
        cfg.seed.derive(index),
    )
}

fn check(name: &str, variant: Option<Variant>, below: bool, measured: f64, threshold: f64, trials: usize) -> PropertyResult {
    let passed = if below { measured < threshold } else { measured >= threshold };
    PropertyResult {
        name: name.to_string(),
        variant,
        criterion: format!("{} {threshold:e}", if below { "<" } else { ">=" }),
        measured,
        threshold,
        trials,
        passed,
    }
}

/// Runs normalization invariance plus, per variant, the end-to-end
/// scale/shift check and an analytic-vs-numeric gradient check.
///
/// SwinStyle must be invariant (`gap < 1e-8` everywhere). VitStyle must be
/// inconsistent: at least 99% of trials with `a = 2, b = 0.5` and
/// `X ~ U[-1, 1]` give `gap > 1e-2`.
pub fn run_invariance_suite(variants: &[Variant], cfg: &SuiteConfig) -> Result<InvarianceReport> {
    if cfg.trials == 0 || cfg.gradient_configs == 0 {
        return Err(Error::invalid("suite needs at least one trial and one gradient config"));
    }
    let mut properties = vec![check(
        "normalization_invariance",
        None,
        true,
        normalization_error(cfg)?,
        NORMALIZATION_TOLERANCE,
        cfg.trials,
    )];
    for &variant in variants {
        let st = stage(variant, cfg, 0)?;
        match variant {
            Variant::SwinStyle => {
                let pairs: Vec<ScaleBias> = affine_pairs().collect();
                let gaps = consistency_gaps(cfg, &st, INVARIANCE_RANGE, &pairs)?;
                let worst = gaps.into_iter().fold(0.0, f64::max);
                properties.push(check("affine_invariance", Some(variant), true, worst, CONSISTENCY_TOLERANCE, cfg.trials));
            }
            Variant::VitStyle => {
                let gaps = consistency_gaps(cfg, &st, 1.0, &[INCONSISTENCY_SCALE])?;
                let hits = gaps.iter().filter(|&&g| g > INCONSISTENCY_THRESHOLD).count();
                properties.push(check(
                    "affine_inconsistency_fraction",
                    Some(variant),
                    false,
                    hits as f64 / gaps.len() as f64,
                    INCONSISTENCY_FRACTION,
                    cfg.trials,
                ));
            }
        }
        let mut worst: f64 = 0.0;
        for i in 0..cfg.gradient_configs {
            let st = stage(variant, cfg, 100 + i as u64)?;
            let x = sample_patches(cfg, cfg.trials + i, 1.0)?;
            worst = worst.max(grad_check(&x, &st, GRADIENT_STEP, GRADIENT_FLOOR)?.max_rel_error);
        }
        properties.push(check("gradient_relative_error", Some(variant), true, worst, GRADIENT_TOLERANCE, cfg.gradient_configs));
    }
    let passed = properties.iter().all(|p| p.passed);
    Ok(InvarianceReport {
        tool_version: TOOL_VERSION.to_string(),
        seed: cfg.seed,
        config: *cfg,
        properties,
        passed,
    })
}
