//! Linear probes on frozen early-stage features and corruption sweeps.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corruptions::{apply, CorruptionKind, CorruptionSpec, TranslationProtocol};
use crate::embedding::{early_stage_forward, patchify, EarlyStageConfig, Variant};
use crate::error::{Error, Result};
use crate::image::{Image, Mode};
use crate::tensor::{uniform, Matrix, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureReduction {
    /// Mean of the `N` output rows: a length-`D` vector.
    #[default]
    MeanPoolRows,
    /// Row-major flattening: a length-`N * D` vector.
    Flatten,
}

pub fn extract_features(img: &Image, cfg: &EarlyStageConfig, reduction: FeatureReduction) -> Result<Vec<f64>> {
    let z = early_stage_forward(&patchify(img, cfg)?, cfg)?;
    Ok(match reduction {
        FeatureReduction::MeanPoolRows => z.column_means(),
        FeatureReduction::Flatten => z.into_vec(),
    })
}

pub fn extract_all(images: &[Image], cfg: &EarlyStageConfig, reduction: FeatureReduction) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|img| extract_features(img, cfg, reduction))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: RngSeed,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            lr: 0.5,
            epochs: 400,
            l2: 1e-4,
            seed: RngSeed(0),
        }
    }
}

/// Multinomial logistic regression on standardized features.
///
/// Features are standardized with the training mean and standard deviation
/// stored in the model before the linear map is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub feature_reduction: FeatureReduction,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub final_loss: f64,
}

impl ProbeModel {
    pub fn feature_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (k, &f) in features.iter().enumerate() {
            let x = (f - self.feature_mean[k]) / self.feature_scale[k];
            out.iter_mut().zip(self.weights.row(k)).for_each(|(o, &w)| *o += x * w);
        }
        out
    }

    /// Arg-max class; the lowest index wins ties.
    pub fn predict(&self, features: &[f64]) -> usize {
        argmax(&self.logits(features))
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[usize]) -> f64 {
        let correct = features
            .iter()
            .zip(labels)
            .filter(|(f, &l)| self.predict(f) == l)
            .count();
        correct as f64 / labels.len().max(1) as f64
    }

    /// Writes a checkpoint: an 8-byte little-endian header length, a JSON
    /// header, then the float64 little-endian payload (weights row-major,
    /// bias, feature mean, feature scale).
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.to_string(),
            feature_dim: self.feature_dim(),
            num_classes: self.num_classes(),
            feature_reduction: self.feature_reduction,
            final_loss: self.final_loss,
            layout: "weights[feature_dim x num_classes] bias[num_classes] feature_mean[feature_dim] feature_scale[feature_dim]".into(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut bytes = (header.len() as u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(&header);
        let payload = self
            .weights
            .as_slice()
            .iter()
            .chain(&self.bias)
            .chain(&self.feature_mean)
            .chain(&self.feature_scale);
        for v in payload {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ProbeModel> {
        let path = path.as_ref();
        let bad = |reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let len_bytes: [u8; 8] = bytes.get(..8).and_then(|b| b.try_into().ok()).ok_or_else(|| bad("truncated"))?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let header: CheckpointHeader = serde_json::from_slice(bytes.get(8..8 + header_len).ok_or_else(|| bad("truncated header"))?)
            .map_err(|e| bad(&e.to_string()))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(bad("unknown checkpoint format"));
        }
        let (f, c) = (header.feature_dim, header.num_classes);
        let values: Vec<f64> = bytes[8 + header_len..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        if values.len() != f * c + c + 2 * f {
            return Err(bad("payload length does not match header"));
        }
        let (w, rest) = values.split_at(f * c);
        let (bias, rest) = rest.split_at(c);
        let (mean, scale) = rest.split_at(f);
        Ok(ProbeModel {
            weights: Matrix::from_vec(f, c, w.to_vec())?,
            bias: bias.to_vec(),
            feature_reduction: header.feature_reduction,
            feature_mean: mean.to_vec(),
            feature_scale: scale.to_vec(),
            final_loss: header.final_loss,
        })
    }
}

const CHECKPOINT_FORMAT: &str = "probe-f64le-v1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    feature_dim: usize,
    num_classes: usize,
    feature_reduction: FeatureReduction,
    final_loss: f64,
    layout: String,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Full-batch gradient descent on mean softmax cross-entropy plus
/// `l2 / 2 * ||W||^2`. Initial weights are `U[-0.01, 0.01]` from the seed;
/// biases start at zero.
pub fn train_probe(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    reduction: FeatureReduction,
    config: &ProbeConfig,
) -> Result<ProbeModel> {
    if num_classes < 2 {
        return Err(Error::invalid("a probe needs at least two classes"));
    }
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} feature vectors for {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::invalid(format!("label {l} outside 0..{num_classes}")));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim || f.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("features must be finite and of equal length"));
    }

    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in features {
        mean.iter_mut().zip(f).for_each(|(m, &v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut scale = vec![0.0; dim];
    for f in features {
        scale
            .iter_mut()
            .zip(f.iter().zip(&mean))
            .for_each(|(s, (&v, &m))| *s += (v - m) * (v - m));
    }
    scale.iter_mut().for_each(|s| {
        let sd = (*s / n).sqrt();
        *s = if sd > 1e-12 { sd } else { 1.0 };
    });
    let xs: Vec<Vec<f64>> = features
        .iter()
        .map(|f| f.iter().zip(mean.iter().zip(&scale)).map(|(&v, (&m, &s))| (v - m) / s).collect())
        .collect();

    let mut rng = config.seed.rng();
    let mut weights = Matrix::from_vec(
        dim,
        num_classes,
        (0..dim * num_classes).map(|_| uniform(&mut rng, -0.01, 0.01)).collect(),
    )?;
    let mut bias = vec![0.0; num_classes];
    let mut loss = f64::NAN;

    for epoch in 0..=config.epochs {
        let mut grad_w = Matrix::zeros(dim, num_classes);
        let mut grad_b = vec![0.0; num_classes];
        let mut total = 0.0;
        for (x, &label) in xs.iter().zip(labels) {
            let mut p = bias.clone();
            for (k, &xk) in x.iter().enumerate() {
                p.iter_mut().zip(weights.row(k)).for_each(|(o, &w)| *o += xk * w);
            }
            let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in p.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            p.iter_mut().for_each(|v| *v /= z);
            total -= p[label].max(f64::MIN_POSITIVE).ln();
            p[label] -= 1.0;
            for (k, &xk) in x.iter().enumerate() {
                grad_w.row_mut(k).iter_mut().zip(&p).for_each(|(g, &d)| *g += xk * d);
            }
            grad_b.iter_mut().zip(&p).for_each(|(g, &d)| *g += d);
        }
        let penalty = 0.5 * config.l2 * weights.as_slice().iter().map(|w| w * w).sum::<f64>();
        loss = total / n + penalty;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                seed: config.seed.0,
                loss,
            });
        }
        if epoch == config.epochs {
            break;
        }
        for k in 0..dim {
            let w_row = weights.row(k).to_vec();
            for (c, w) in weights.row_mut(k).iter_mut().enumerate() {
                *w -= config.lr * (grad_w.get(k, c) / n + config.l2 * w_row[c]);
            }
        }
        bias.iter_mut()
            .zip(&grad_b)
            .for_each(|(b, g)| *b -= config.lr * g / n);
    }

    Ok(ProbeModel {
        weights,
        bias,
        feature_reduction: reduction,
        feature_mean: mean,
        feature_scale: scale,
        final_loss: loss,
    })
}

/// Deterministic 70:15:15 train/val/test split of `0..n`.
pub fn split_indices(n: usize, seed: RngSeed) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed.rng());
    let train = n * 70 / 100;
    let val = n * 15 / 100;
    let test = idx.split_off(train + val);
    let val_idx = idx.split_off(train);
    (idx, val_idx, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub corruption: CorruptionKind,
    pub mode: Mode,
    pub factors: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub variant: Variant,
    pub num_test: usize,
    pub seed: RngSeed,
}

impl SweepResult {
    /// Accuracy at the identity factor.
    pub fn baseline(&self) -> f64 {
        let id = self.corruption.identity_factor();
        self.factors
            .iter()
            .position(|&f| f == id)
            .map(|i| self.accuracy[i])
            .expect("sweeps always contain the identity factor")
    }

    pub fn accuracy_at(&self, factor: f64) -> Option<f64> {
        self.factors.iter().position(|&f| f == factor).map(|i| self.accuracy[i])
    }

    /// Baseline accuracy minus accuracy at `factor`.
    pub fn drop_at(&self, factor: f64) -> Option<f64> {
        self.accuracy_at(factor).map(|a| self.baseline() - a)
    }

    pub const CSV_HEADER: &'static str = "variant,corruption,mode,factor,accuracy,num_test,seed";

    pub fn csv_rows(&self) -> Vec<String> {
        self.factors
            .iter()
            .zip(&self.accuracy)
            .map(|(f, a)| {
                format!(
                    "{},{},{},{},{},{},{}",
                    self.variant, self.corruption, self.mode, f, a, self.num_test, self.seed
                )
            })
            .collect()
    }
}

/// Everything a sweep needs besides the images.
#[derive(Debug, Clone, Copy)]
pub struct SweepSetup<'a> {
    pub probe: &'a ProbeModel,
    pub cfg: &'a EarlyStageConfig,
    pub kind: CorruptionKind,
    pub mode: Mode,
    pub protocol: TranslationProtocol,
    pub seed: RngSeed,
}

/// Predicted class of every image under every factor, in input order.
pub fn sweep_predictions(images: &[Image], setup: &SweepSetup<'_>, factors: &[f64]) -> Result<Vec<Vec<usize>>> {
    let identity = setup.kind.identity_factor();
    if !factors.contains(&identity) {
        return Err(Error::invalid(format!(
            "{} sweep must include the identity factor {identity}",
            setup.kind
        )));
    }
    factors
        .iter()
        .map(|&factor| {
            let spec = CorruptionSpec::new(setup.kind, factor, setup.mode);
            images
                .par_iter()
                .map(|img| {
                    let corrupted = apply(img, spec, setup.protocol)?;
                    let f = extract_features(&corrupted, setup.cfg, setup.probe.feature_reduction)?;
                    Ok(setup.probe.predict(&f))
                })
                .collect()
        })
        .collect()
}

/// Test accuracy at every corruption severity.
pub fn run_sweep(images: &[Image], labels: &[usize], setup: &SweepSetup<'_>, factors: &[f64]) -> Result<SweepResult> {
    if images.len() != labels.len() || images.is_empty() {
        return Err(Error::invalid("sweep needs one label per test image"));
    }
    let predictions = sweep_predictions(images, setup, factors)?;
    let accuracy = predictions
        .iter()
        .map(|p| p.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64)
        .collect();
    Ok(SweepResult {
        corruption: setup.kind,
        mode: setup.mode,
        factors: factors.to_vec(),
        accuracy,
        variant: setup.cfg.variant(),
        num_test: images.len(),
        seed: setup.seed,
    })
}
