//! Early stage of a vision transformer: patch projection, optional
//! PreLayerNorm, positional embedding and PostLayerNorm.
//!
//! For flattened, projected patches `X` (one row per patch) the two variants
//! compute
//!
//! ```text
//! ViT-style:   z(X) = LN_post(X + E_pos)
//! Swin-style:  z(X) = LN_post(LN_pre(X) + E_pos)
//! ```
//!
//! where `LN(v) = L(N(v))`, `N` standardizes each row with its own mean and
//! population variance and `L` applies the per-channel `gamma`/`beta`.
//! `N(aX + b) = N(X)` for any scale `a > 0` and row-constant bias `b` (up to
//! the variance stabilizer), so the Swin-style output ignores image-wide
//! rescaling while the ViT-style output does not: the fixed `E_pos` term
//! shrinks relative to `aX` as `a` grows.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::tensor::{mean_var, uniform, Matrix, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// No PreLayerNorm.
    #[serde(rename = "vit")]
    VitStyle,
    /// PreLayerNorm before the positional embedding is added.
    #[serde(rename = "swin")]
    SwinStyle,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::VitStyle, Variant::SwinStyle];

    pub fn name(self) -> &'static str {
        match self {
            Variant::VitStyle => "vit",
            Variant::SwinStyle => "swin",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vit" | "vit_style" | "vitstyle" => Ok(Variant::VitStyle),
            "swin" | "swin_style" | "swinstyle" => Ok(Variant::SwinStyle),
            other => Err(Error::invalid(format!("unknown variant {other:?}"))),
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    epsilon: f64,
}

impl LayerNormParams {
    pub fn new(gamma: Vec<f64>, beta: Vec<f64>, epsilon: f64) -> Result<Self> {
        if gamma.len() != beta.len() {
            return Err(Error::shape(format!(
                "gamma has {} channels, beta {}",
                gamma.len(),
                beta.len()
            )));
        }
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(Error::invalid(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(LayerNormParams { gamma, beta, epsilon })
    }

    /// `gamma = 1`, `beta = 0`.
    pub fn identity(dim: usize, epsilon: f64) -> Result<Self> {
        LayerNormParams::new(vec![1.0; dim], vec![0.0; dim], epsilon)
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }
}

/// The `N` step: `(v - mean) / sqrt(var + epsilon)` per row.
///
/// Constant rows come out as all zeros.
pub fn ln_normalize(x: &Matrix, epsilon: f64) -> Result<Matrix> {
    ln_normalize_with_diagnostics(x, epsilon).map(|(m, _)| m)
}

/// Like [`ln_normalize`], also returning the indices of zero-variance rows.
pub fn ln_normalize_with_diagnostics(x: &Matrix, epsilon: f64) -> Result<(Matrix, Vec<usize>)> {
    if x.cols() < 2 {
        return Err(Error::shape(format!(
            "normalization needs at least 2 columns, got {}",
            x.cols()
        )));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    let mut out = x.clone();
    let mut degenerate = Vec::new();
    for r in 0..x.rows() {
        let (mean, var) = mean_var(x.row(r));
        if var == 0.0 {
            degenerate.push(r);
        }
        let inv = 1.0 / (var + epsilon).sqrt();
        out.row_mut(r).iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
    Ok((out, degenerate))
}

/// The `L` step: `gamma[d] * x[n, d] + beta[d]`.
pub fn ln_affine(x: &Matrix, p: &LayerNormParams) -> Result<Matrix> {
    if x.cols() != p.dim() {
        return Err(Error::shape(format!(
            "{} columns vs {} layer-norm channels",
            x.cols(),
            p.dim()
        )));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        out.row_mut(r)
            .iter_mut()
            .zip(p.gamma.iter().zip(&p.beta))
            .for_each(|(v, (g, b))| *v = g * *v + b);
    }
    Ok(out)
}

pub fn layer_norm(x: &Matrix, p: &LayerNormParams) -> Result<Matrix> {
    ln_affine(&ln_normalize(x, p.epsilon)?, p)
}

/// Bias part of an `aX + b` transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bias {
    /// Same offset on every channel.
    Scalar(f64),
    /// One offset per color channel; only meaningful on images.
    PerColor([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBias {
    pub a: f64,
    pub b: Bias,
}

impl ScaleBias {
    pub const fn new(a: f64, b: f64) -> Self {
        ScaleBias {
            a,
            b: Bias::Scalar(b),
        }
    }

    pub fn per_color(a: f64, b: [f64; 3]) -> Self {
        ScaleBias {
            a,
            b: Bias::PerColor(b),
        }
    }

    pub fn apply_to_patches(&self, x: &Matrix) -> Result<Matrix> {
        match self.b {
            Bias::Scalar(b) => Ok(x.affine(self.a, b)),
            Bias::PerColor(_) => Err(Error::invalid(
                "per-color bias applies to images, not projected patches",
            )),
        }
    }

    pub fn apply_to_image(&self, img: &Image) -> Image {
        let b = match self.b {
            Bias::Scalar(b) => [b; 3],
            Bias::PerColor(b) => b,
        };
        img.affine(self.a, b)
    }
}

/// Parameters of one early-stage pipeline.
///
/// The image is split into a `grid_width x grid_height` raster of square
/// patches, giving `N = grid_width * grid_height` rows in `X` and `E_pos`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStageConfig {
    variant: Variant,
    patch_size: usize,
    embed_dim: usize,
    grid_width: usize,
    grid_height: usize,
    proj_weights: Matrix,
    proj_bias: Vec<f64>,
    pos_embed: Matrix,
    pre_ln: Option<LayerNormParams>,
    post_ln: LayerNormParams,
    gray_free: bool,
}

impl EarlyStageConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: Variant,
        patch_size: usize,
        grid: (usize, usize),
        proj_weights: Matrix,
        proj_bias: Vec<f64>,
        pos_embed: Matrix,
        pre_ln: Option<LayerNormParams>,
        post_ln: LayerNormParams,
    ) -> Result<Self> {
        let (grid_width, grid_height) = grid;
        if patch_size == 0 || grid_width == 0 || grid_height == 0 {
            return Err(Error::invalid("patch size and grid must be positive"));
        }
        let embed_dim = post_ln.dim();
        let patch_len = patch_size * patch_size * CHANNELS;
        if proj_weights.shape() != (patch_len, embed_dim) {
            return Err(Error::shape(format!(
                "projection is {:?}, expected ({patch_len}, {embed_dim})",
                proj_weights.shape()
            )));
        }
        if proj_bias.len() != embed_dim {
            return Err(Error::shape("projection bias length differs from embed dim"));
        }
        if pos_embed.shape() != (grid_width * grid_height, embed_dim) {
            return Err(Error::shape(format!(
                "positional embedding is {:?}, expected ({}, {embed_dim})",
                pos_embed.shape(),
                grid_width * grid_height
            )));
        }
        match (&variant, &pre_ln) {
            (Variant::VitStyle, Some(_)) => {
                return Err(Error::invalid("ViT-style pipelines have no PreLayerNorm"))
            }
            (Variant::SwinStyle, None) => {
                return Err(Error::invalid("Swin-style pipelines need a PreLayerNorm"))
            }
            (Variant::SwinStyle, Some(p)) if p.dim() != embed_dim => {
                return Err(Error::shape("PreLayerNorm width differs from embed dim"))
            }
            _ => {}
        }
        Ok(EarlyStageConfig {
            variant,
            patch_size,
            embed_dim,
            grid_width,
            grid_height,
            proj_weights,
            proj_bias,
            pos_embed,
            pre_ln,
            post_ln,
            gray_free: false,
        })
    }

    /// Seeded random pipeline; see [`EarlyStageInit`].
    ///
    /// Both variants built from the same seed share the projection,
    /// positional embedding and PostLayerNorm; the Swin-style pipeline adds a
    /// PreLayerNorm drawn from its own sub-stream.
    pub fn random(
        variant: Variant,
        patch_size: usize,
        grid: (usize, usize),
        embed_dim: usize,
        init: &EarlyStageInit,
        seed: RngSeed,
    ) -> Result<Self> {
        if embed_dim < 2 {
            return Err(Error::invalid("embed dim must be at least 2"));
        }
        let patch_len = patch_size * patch_size * CHANNELS;
        let bound = 1.0 / (patch_len as f64).sqrt();
        let mut proj = Matrix::random_uniform(patch_len, embed_dim, -bound, bound, seed.derive(0))?;
        if init.gray_free {
            remove_gray_response(&mut proj);
        }
        let proj_bias = match init.proj_bias {
            Some(r) => {
                let mut rng = seed.derive(1).rng();
                (0..embed_dim).map(|_| uniform(&mut rng, -r, r)).collect()
            }
            None => vec![0.0; embed_dim],
        };
        let n = grid.0 * grid.1;
        let pos = Matrix::random_uniform(n, embed_dim, -init.pos_scale, init.pos_scale, seed.derive(2))?;
        let post_ln = init.layer_norm(embed_dim, init.epsilon, seed.derive(3));
        let pre_ln = match variant {
            Variant::VitStyle => None,
            Variant::SwinStyle => Some(init.layer_norm(embed_dim, init.pre_epsilon, seed.derive(4))),
        };
        let mut cfg = EarlyStageConfig::new(variant, patch_size, grid, proj, proj_bias, pos, pre_ln, post_ln)?;
        cfg.gray_free = init.gray_free;
        Ok(cfg)
    }

    /// Same parameters with the positional embedding replaced.
    pub fn with_pos_embed(&self, pos_embed: Matrix) -> Result<Self> {
        if pos_embed.shape() != self.pos_embed.shape() {
            return Err(Error::shape("positional embedding shape changed"));
        }
        Ok(EarlyStageConfig {
            pos_embed,
            ..self.clone()
        })
    }

    /// Same parameters with a different PostLayerNorm.
    pub fn with_post_ln(&self, post_ln: LayerNormParams) -> Result<Self> {
        if post_ln.dim() != self.embed_dim {
            return Err(Error::shape("PostLayerNorm width differs from embed dim"));
        }
        Ok(EarlyStageConfig {
            post_ln,
            ..self.clone()
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn num_patches(&self) -> usize {
        self.grid_width * self.grid_height
    }

    /// Expected image `(width, height)` in pixels.
    pub fn image_size(&self) -> (usize, usize) {
        (self.grid_width * self.patch_size, self.grid_height * self.patch_size)
    }

    pub fn proj_weights(&self) -> &Matrix {
        &self.proj_weights
    }

    pub fn proj_bias(&self) -> &[f64] {
        &self.proj_bias
    }

    pub fn pos_embed(&self) -> &Matrix {
        &self.pos_embed
    }

    pub fn pre_ln(&self) -> Option<&LayerNormParams> {
        self.pre_ln.as_ref()
    }

    pub fn post_ln(&self) -> &LayerNormParams {
        &self.post_ln
    }

    /// Whether the projection has zero response to uniform gray patches.
    pub fn gray_free(&self) -> bool {
        self.gray_free
    }
}

/// Subtracts each output channel's mean weight, so a uniform gray patch
/// projects to the projection bias. Colored patches keep their chromatic
/// response.
fn remove_gray_response(proj: &mut Matrix) {
    for d in 0..proj.cols() {
        let mean = (0..proj.rows()).map(|r| proj.get(r, d)).sum::<f64>() / proj.rows() as f64;
        for r in 0..proj.rows() {
            proj.set(r, d, proj.get(r, d) - mean);
        }
    }
}

/// Distributions for [`EarlyStageConfig::random`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStageInit {
    /// `E_pos ~ U[-pos_scale, pos_scale]`.
    pub pos_scale: f64,
    /// `gamma ~ U[lo, hi]` for both LayerNorms.
    pub gamma_range: (f64, f64),
    /// `beta ~ U[-beta_scale, beta_scale]`.
    pub beta_scale: f64,
    /// PostLayerNorm stabilizer.
    pub epsilon: f64,
    /// PreLayerNorm stabilizer.
    pub pre_epsilon: f64,
    /// Zero the projection's response to uniform gray patches.
    pub gray_free: bool,
    /// `proj_bias ~ U[-r, r]` when set, zero otherwise.
    pub proj_bias: Option<f64>,
}

impl Default for EarlyStageInit {
    fn default() -> Self {
        EarlyStageInit {
            pos_scale: 1.0,
            gamma_range: (0.5, 1.5),
            beta_scale: 0.5,
            epsilon: DEFAULT_EPSILON,
            pre_epsilon: DEFAULT_EPSILON,
            gray_free: false,
            proj_bias: None,
        }
    }
}

impl EarlyStageInit {
    /// Preset for experiments on raw 0..=255 pixel images: a projection
    /// blind to uniform gray and a positional embedding on the same scale as
    /// the projected patches of the bundled synthetic images.
    pub fn synthetic() -> Self {
        EarlyStageInit {
            pos_scale: SYNTHETIC_POS_SCALE,
            pre_epsilon: SYNTHETIC_PRE_EPSILON,
            gray_free: true,
            ..EarlyStageInit::default()
        }
    }

    fn layer_norm(&self, dim: usize, epsilon: f64, seed: RngSeed) -> LayerNormParams {
        let mut rng = seed.rng();
        let (lo, hi) = self.gamma_range;
        let gamma = (0..dim)
            .map(|_| if lo < hi { uniform(&mut rng, lo, hi) } else { lo })
            .collect();
        let beta = (0..dim)
            .map(|_| {
                if self.beta_scale > 0.0 {
                    uniform(&mut rng, -self.beta_scale, self.beta_scale)
                } else {
                    0.0
                }
            })
            .collect();
        LayerNormParams { gamma, beta, epsilon }
    }
}

pub const SYNTHETIC_POS_SCALE: f64 = 20.0;
pub const SYNTHETIC_PRE_EPSILON: f64 = 1e-12;

/// Rearranges an image into one row per patch (raster order), each row the
/// patch's pixels in row-major order with the three channels interleaved.
pub fn flatten_patches(img: &Image, patch_size: usize) -> Result<Matrix> {
    let (w, h) = (img.width(), img.height());
    if patch_size == 0 || w % patch_size != 0 || h % patch_size != 0 {
        return Err(Error::shape(format!(
            "{w}x{h} image is not divisible into {patch_size}-pixel patches"
        )));
    }
    let (gw, gh) = (w / patch_size, h / patch_size);
    let row_len = patch_size * CHANNELS;
    let mut data = Vec::with_capacity(w * h * CHANNELS);
    let src = img.as_slice();
    for py in 0..gh {
        for px in 0..gw {
            for y in 0..patch_size {
                let start = ((py * patch_size + y) * w + px * patch_size) * CHANNELS;
                data.extend_from_slice(&src[start..start + row_len]);
            }
        }
    }
    Matrix::from_vec(gw * gh, patch_size * patch_size * CHANNELS, data)
}

/// Patch embedding: `flatten(patch) . proj_weights + proj_bias` per patch.
///
/// For gray-free projections each flattened patch is first shifted by its
/// own mean. The projection's columns sum to zero, so the product is the
/// same; the shift makes uniform gray patches land on `proj_bias` exactly
/// instead of within rounding error of it.
pub fn patchify(img: &Image, cfg: &EarlyStageConfig) -> Result<Matrix> {
    if (img.width(), img.height()) != cfg.image_size() {
        return Err(Error::shape(format!(
            "{}x{} image for a pipeline expecting {:?}",
            img.width(),
            img.height(),
            cfg.image_size()
        )));
    }
    let mut patches = flatten_patches(img, cfg.patch_size)?;
    if cfg.gray_free {
        for r in 0..patches.rows() {
            let row = patches.row_mut(r);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            row.iter_mut().for_each(|v| *v -= mean);
        }
    }
    patches.matmul(&cfg.proj_weights)?.add_row_vector(&cfg.proj_bias)
}

fn check_patches(x: &Matrix, cfg: &EarlyStageConfig) -> Result<()> {
    if x.shape() != cfg.pos_embed.shape() {
        return Err(Error::shape(format!(
            "patches {:?} vs pipeline {:?}",
            x.shape(),
            cfg.pos_embed.shape()
        )));
    }
    Ok(())
}

/// Input of the PostLayerNorm: `X + E_pos` or `LN_pre(X) + E_pos`.
pub fn post_ln_input(x: &Matrix, cfg: &EarlyStageConfig) -> Result<Matrix> {
    check_patches(x, cfg)?;
    match &cfg.pre_ln {
        None => x.add(&cfg.pos_embed),
        Some(pre) => layer_norm(x, pre)?.add(&cfg.pos_embed),
    }
}

/// Early-stage output `z` up to and including PostLayerNorm.
pub fn early_stage_forward(x: &Matrix, cfg: &EarlyStageConfig) -> Result<Matrix> {
    layer_norm(&post_ln_input(x, cfg)?, &cfg.post_ln)
}

/// Relative change of the early-stage output under `X -> aX + b`:
/// `||z(aX + b) - z(X)||_F / ||z(X)||_F`.
pub fn consistency_gap(x: &Matrix, sb: &ScaleBias, cfg: &EarlyStageConfig) -> Result<f64> {
    let base = early_stage_forward(x, cfg)?;
    let moved = early_stage_forward(&sb.apply_to_patches(x)?, cfg)?;
    let num = moved.sub(&base)?.frobenius_norm();
    Ok(num / base.frobenius_norm().max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(variant: Variant, grid: (usize, usize), dim: usize, seed: u64) -> EarlyStageConfig {
        EarlyStageConfig::random(variant, 4, grid, dim, &EarlyStageInit::default(), RngSeed(seed)).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let n = ln_normalize(&x, 1e-300).unwrap();
        // mean 2, std sqrt(2/3)
        let want = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((n.get(0, 0) + want).abs() < 1e-12);
        assert_eq!(n.get(0, 1), 0.0);
        assert!((n.get(0, 2) - want).abs() < 1e-12);
        assert!((want - 1.22474).abs() < 1e-5);

        let (z, flagged) = ln_normalize_with_diagnostics(&Matrix::filled(2, 3, 5.0), 1e-5).unwrap();
        assert_eq!(z.as_slice(), &[0.0; 6]);
        assert_eq!(flagged, vec![0, 1]);

        assert!(ln_normalize(&Matrix::filled(2, 1, 1.0), 1e-5).is_err());
    }

    #[test]
    fn normalize_two_x_plus_one_high_variance_rows() {
        let x = Matrix::random_uniform(8, 32, -500.0, 500.0, RngSeed(11)).unwrap();
        let a = ln_normalize(&x, DEFAULT_EPSILON).unwrap();
        let b = ln_normalize(&x.affine(2.0, 1.0), DEFAULT_EPSILON).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
    }

    #[test]
    fn normalize_unit_variance_deviation_matches_epsilon_bound() {
        // Rows standardized to variance exactly 1: the stabilizer alone
        // separates N(aX) from N(X) by about eps/2 * (1/a^2 - 1) * |x_hat|.
        let x = ln_normalize(&Matrix::random_uniform(4, 64, -1.0, 1.0, RngSeed(5)).unwrap(), 1e-300).unwrap();
        let eps = DEFAULT_EPSILON;
        let a = 0.5;
        let diff = ln_normalize(&x.affine(a, 0.0), eps)
            .unwrap()
            .sub(&ln_normalize(&x, eps).unwrap())
            .unwrap()
            .max_abs();
        let bound = eps / 2.0 * (1.0 / (a * a) - 1.0) * x.max_abs();
        assert!((diff - bound).abs() < 0.01 * bound, "{diff} vs {bound}");
    }

    #[test]
    fn affine_examples() {
        let x = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let p = LayerNormParams::new(vec![2.0, 3.0], vec![1.0, 1.0], 1e-5).unwrap();
        assert_eq!(ln_affine(&x, &p).unwrap().as_slice(), &[3.0, -2.0]);

        let id = LayerNormParams::identity(2, 1e-5).unwrap();
        assert_eq!(ln_affine(&x, &id).unwrap(), x);

        let zero = LayerNormParams::new(vec![0.0, 0.0], vec![0.25, -4.0], 1e-5).unwrap();
        assert_eq!(ln_affine(&x, &zero).unwrap().as_slice(), &[0.25, -4.0]);

        let wrong = LayerNormParams::identity(3, 1e-5).unwrap();
        assert!(matches!(ln_affine(&x, &wrong), Err(Error::Shape(_))));
        assert!(LayerNormParams::new(vec![1.0], vec![0.0], 0.0).is_err());
    }

    #[test]
    fn patchify_shapes_and_linearity() {
        let init = EarlyStageInit::default();
        let c = EarlyStageConfig::random(Variant::VitStyle, 16, (14, 14), 64, &init, RngSeed(1)).unwrap();
        let img = Image::from_fn(224, 224, |x, y| [(x % 200) as f64, (y % 200) as f64, 3.0]);
        let x = patchify(&img, &c).unwrap();
        assert_eq!(x.shape(), (196, 64));

        let zero = patchify(&Image::uniform(224, 224, [0.0; 3]), &c).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));

        let scaled = patchify(&img.affine(2.5, [0.0; 3]), &c).unwrap();
        let tol = 1e-12 * 2.5 * x.max_abs();
        for (s, v) in scaled.as_slice().iter().zip(x.as_slice()) {
            assert!((s - 2.5 * v).abs() <= tol);
        }

        assert!(patchify(&Image::uniform(100, 224, [0.0; 3]), &c).is_err());
        assert!(flatten_patches(&Image::uniform(20, 16, [0.0; 3]), 16).is_err());
    }

    #[test]
    fn flatten_order_is_raster_with_interleaved_channels() {
        let img = Image::from_fn(4, 2, |x, y| [(10 * y + x) as f64, 100.0, 200.0]);
        let m = flatten_patches(&img, 2).unwrap();
        assert_eq!(m.shape(), (2, 12));
        let red: Vec<f64> = m.row(1).iter().step_by(3).copied().collect();
        assert_eq!(red, vec![2.0, 3.0, 12.0, 13.0]);
        assert_eq!(m.row(0)[1], 100.0);
    }

    #[test]
    fn gray_free_projection_ignores_gray_offsets() {
        let init = EarlyStageInit {
            gray_free: true,
            ..EarlyStageInit::default()
        };
        let c = EarlyStageConfig::random(Variant::SwinStyle, 4, (2, 2), 8, &init, RngSeed(3)).unwrap();
        let gray = patchify(&Image::uniform(8, 8, [77.0; 3]), &c).unwrap();
        assert_eq!(gray.max_abs(), 0.0);
        let col_sums: Vec<f64> = (0..8).map(|d| (0..48).map(|r| c.proj_weights().get(r, d)).sum()).collect();
        assert!(col_sums.iter().all(|s| s.abs() < 1e-14));

        // the centered route equals the plain product
        let img = Image::from_fn(8, 8, |x, y| [(x * 30) as f64, (y * 20) as f64, 99.0]);
        let centered = patchify(&img, &c).unwrap();
        let plain = flatten_patches(&img, 4).unwrap().matmul(c.proj_weights()).unwrap();
        assert!(centered.max_abs_diff(&plain).unwrap() < 1e-9);

        let red = patchify(&Image::uniform(8, 8, [200.0, 40.0, 40.0]), &c).unwrap();
        assert!(red.max_abs() > 1.0);
    }

    #[test]
    fn config_validation() {
        let c = cfg(Variant::SwinStyle, (2, 2), 8, 1);
        let bad = EarlyStageConfig::new(
            Variant::VitStyle,
            4,
            (2, 2),
            c.proj_weights().clone(),
            c.proj_bias().to_vec(),
            c.pos_embed().clone(),
            c.pre_ln().cloned(),
            c.post_ln().clone(),
        );
        assert!(bad.is_err());
        assert!(early_stage_forward(&Matrix::zeros(3, 8), &c).is_err());
    }

    #[test]
    fn swin_forward_is_scale_bias_invariant() {
        let c = cfg(Variant::SwinStyle, (3, 3), 16, 9);
        let x = Matrix::random_uniform(9, 16, -200.0, 200.0, RngSeed(10)).unwrap();
        let gap = consistency_gap(&x, &ScaleBias::new(3.0, -2.0), &c).unwrap();
        assert!(gap < 1e-8, "{gap}");
    }

    #[test]
    fn vit_pure_scaling_without_pos_embed_is_invariant() {
        let c = cfg(Variant::VitStyle, (3, 3), 16, 9);
        let c = c.with_pos_embed(Matrix::zeros(9, 16)).unwrap();
        let x = Matrix::random_uniform(9, 16, -1000.0, 1000.0, RngSeed(10)).unwrap();
        let a = early_stage_forward(&x, &c).unwrap();
        let b = early_stage_forward(&x.affine(2.0, 0.0), &c).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
    }

    #[test]
    fn vit_output_moves_under_scaling() {
        let c = cfg(Variant::VitStyle, (3, 3), 16, 9);
        let x = Matrix::random_uniform(9, 16, -1.0, 1.0, RngSeed(10)).unwrap();
        assert_eq!(consistency_gap(&x, &ScaleBias::new(1.0, 0.0), &c).unwrap(), 0.0);
        assert!(consistency_gap(&x, &ScaleBias::new(2.0, 0.0), &c).unwrap() > 1e-2);
    }

    #[test]
    fn constant_rows_do_not_produce_nan() {
        for v in Variant::BOTH {
            let c = cfg(v, (2, 2), 8, 4);
            let z = early_stage_forward(&Matrix::filled(4, 8, 7.0), &c).unwrap();
            assert!(z.is_finite());
        }
    }

    #[test]
    fn per_color_bias_is_image_only() {
        let sb = ScaleBias::per_color(2.0, [1.0, 2.0, 3.0]);
        assert!(sb.apply_to_patches(&Matrix::zeros(1, 2)).is_err());
        let img = sb.apply_to_image(&Image::uniform(1, 1, [1.0, 1.0, 1.0]));
        assert_eq!(img.pixel(0, 0), [3.0, 4.0, 5.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn normalization_ignores_scale_and_bias(
                seed in any::<u64>(),
                a in prop::sample::select(vec![0.5, 2.0, 5.0]),
                b in prop::sample::select(vec![-1.0, 0.0, 3.0]),
            ) {
                let x = Matrix::random_uniform(6, 24, -200.0, 200.0, RngSeed(seed)).unwrap();
                let n0 = ln_normalize(&x, DEFAULT_EPSILON).unwrap();
                let n1 = ln_normalize(&x.affine(a, b), DEFAULT_EPSILON).unwrap();
                prop_assert!(n0.max_abs_diff(&n1).unwrap() < 1e-6);
            }

            #[test]
            fn swin_gap_is_tiny(seed in any::<u64>(), a in 0.5f64..5.0, b in -3.0f64..3.0) {
                let c = EarlyStageConfig::random(
                    Variant::SwinStyle, 2, (2, 3), 24, &EarlyStageInit::default(), RngSeed(seed),
                ).unwrap();
                let x = Matrix::random_uniform(6, 24, -200.0, 200.0, RngSeed(seed ^ 1)).unwrap();
                prop_assert!(consistency_gap(&x, &ScaleBias::new(a, b), &c).unwrap() < 1e-8);
            }

            #[test]
            fn patchify_is_linear(seed in any::<u64>(), a in 0.1f64..10.0) {
                let c = EarlyStageConfig::random(
                    Variant::VitStyle, 4, (2, 2), 8, &EarlyStageInit::default(), RngSeed(seed),
                ).unwrap();
                let img = Image::new(8, 8, Matrix::random_uniform(1, 192, 0.0, 255.0, RngSeed(seed ^ 7))
                    .unwrap().into_vec()).unwrap();
                let x = patchify(&img, &c).unwrap();
                let y = patchify(&img.affine(a, [0.0; 3]), &c).unwrap();
                let scale = x.max_abs().max(1e-300);
                for (p, q) in y.as_slice().iter().zip(x.as_slice()) {
                    prop_assert!((p - a * q).abs() <= 1e-12 * a * scale);
                }
            }
        }
    }
}
