//! Image corruptions used by the robustness sweeps.
//!
//! Brightness and contrast are blends toward a "degenerate" anchor image,
//! `out = degenerate + factor * (in - degenerate)`: the zero image for
//! brightness and a uniform image at the mean luminance for contrast. In
//! [`Mode::PilExact`] every output channel is rounded half to even and
//! clamped to `0..=255`; in [`Mode::Idealized`] the blend is applied as an
//! exact affine map.
//!
//! Geometric transforms resample bilinearly with half-pixel-centered
//! coordinates: output pixel `x` samples source position
//! `(x + 0.5) * in / out - 0.5`, clamped to the image (edge replication).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{quantize, Image, Mode, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    Contrast,
    Brightness,
    Gamma,
    Translation,
    Rotation,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 5] = [
        CorruptionKind::Contrast,
        CorruptionKind::Brightness,
        CorruptionKind::Gamma,
        CorruptionKind::Translation,
        CorruptionKind::Rotation,
    ];

    /// Severity value that leaves an image unchanged.
    pub fn identity_factor(self) -> f64 {
        match self {
            CorruptionKind::Contrast | CorruptionKind::Brightness | CorruptionKind::Gamma => 1.0,
            CorruptionKind::Translation | CorruptionKind::Rotation => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::Brightness => "brightness",
            CorruptionKind::Gamma => "gamma",
            CorruptionKind::Translation => "translation",
            CorruptionKind::Rotation => "rotation",
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown corruption {s:?}")))
    }
}

/// One corruption at one severity.
///
/// `factor` is the enhancement factor for contrast/brightness, the exponent
/// for gamma, degrees for rotation and the pixel shift `s` for translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub factor: f64,
    pub mode: Mode,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, factor: f64, mode: Mode) -> Self {
        CorruptionSpec { kind, factor, mode }
    }
}

/// How the contrast anchor color is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastAnchor {
    /// Mean of the grayscale image `L = 0.299 R + 0.587 G + 0.114 B`,
    /// replicated to all three channels.
    #[default]
    Luminance,
    /// Independent mean of each color channel.
    ChannelMean,
}

/// Resize-then-crop geometry of the translation test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationProtocol {
    pub short_side: usize,
    pub crop: usize,
}

impl TranslationProtocol {
    /// Standard evaluation geometry: short side 256, 224x224 window.
    pub const STANDARD: TranslationProtocol = TranslationProtocol {
        short_side: 256,
        crop: 224,
    };

    /// Largest shift that keeps the window inside a square template.
    pub fn max_shift(&self) -> usize {
        (self.short_side - self.crop) / 2
    }
}

impl Default for TranslationProtocol {
    fn default() -> Self {
        TranslationProtocol::STANDARD
    }
}

/// Anchor color of a contrast blend.
///
/// In `PilExact` mode the per-pixel luminance is rounded before averaging
/// and the mean is rounded again, so the anchor is an integer gray level.
pub fn contrast_anchor(img: &Image, mode: Mode, anchor: ContrastAnchor) -> [f64; 3] {
    let n = (img.width() * img.height()) as f64;
    match anchor {
        ContrastAnchor::Luminance => {
            let total: f64 = img
                .as_slice()
                .chunks_exact(CHANNELS)
                .map(|p| {
                    let l = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
                    match mode {
                        Mode::PilExact => l.round_ties_even(),
                        Mode::Idealized => l,
                    }
                })
                .sum();
            let mean = total / n;
            let mean = match mode {
                Mode::PilExact => mean.round_ties_even(),
                Mode::Idealized => mean,
            };
            [mean; 3]
        }
        ContrastAnchor::ChannelMean => {
            let mut sums = [0.0; 3];
            for p in img.as_slice().chunks_exact(CHANNELS) {
                for c in 0..CHANNELS {
                    sums[c] += p[c];
                }
            }
            sums.map(|s| match mode {
                Mode::PilExact => (s / n).round_ties_even(),
                Mode::Idealized => s / n,
            })
        }
    }
}

/// Brightness or contrast enhancement with the luminance contrast anchor.
pub fn enhance(img: &Image, spec: CorruptionSpec) -> Result<Image> {
    enhance_with_anchor(img, spec, ContrastAnchor::Luminance)
}

pub fn enhance_with_anchor(img: &Image, spec: CorruptionSpec, anchor: ContrastAnchor) -> Result<Image> {
    let degenerate = match spec.kind {
        CorruptionKind::Brightness => [0.0; 3],
        CorruptionKind::Contrast => contrast_anchor(img, spec.mode, anchor),
        other => {
            return Err(Error::invalid(format!(
                "enhance applies to contrast or brightness, not {other}"
            )))
        }
    };
    let factor = spec.factor;
    if !factor.is_finite() || factor < 0.0 {
        return Err(Error::invalid(format!(
            "enhancement factor must be >= 0, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(img.clone());
    }
    Ok(blend(img, degenerate, factor, spec.mode))
}

fn blend(img: &Image, degenerate: [f64; 3], factor: f64, mode: Mode) -> Image {
    let mut data = Vec::with_capacity(img.as_slice().len());
    for p in img.as_slice().chunks_exact(CHANNELS) {
        for c in 0..CHANNELS {
            let v = degenerate[c] + factor * (p[c] - degenerate[c]);
            data.push(match mode {
                Mode::PilExact => quantize(v),
                Mode::Idealized => v,
            });
        }
    }
    Image::new(img.width(), img.height(), data).expect("blend preserves shape")
}

/// Power-law tone curve `255 * (v / 255)^g`.
pub fn gamma(img: &Image, g: f64, mode: Mode) -> Result<Image> {
    if g <= 0.0 || !g.is_finite() {
        return Err(Error::invalid(format!("gamma must be > 0, got {g}")));
    }
    if g == 1.0 {
        return Ok(img.clone());
    }
    Ok(img.map(|v| {
        let out = 255.0 * (v / 255.0).powf(g);
        match mode {
            Mode::PilExact => quantize(out),
            Mode::Idealized => out,
        }
    }))
}

#[inline]
fn sample_bilinear(img: &Image, sx: f64, sy: f64, out: &mut [f64; 3]) {
    let max_x = (img.width() - 1) as f64;
    let max_y = (img.height() - 1) as f64;
    let sx = sx.clamp(0.0, max_x);
    let sy = sy.clamp(0.0, max_y);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let tx = sx - x0 as f64;
    let ty = sy - y0 as f64;
    for (c, o) in out.iter_mut().enumerate() {
        let top = img.channel(x0, y0, c) * (1.0 - tx) + img.channel(x1, y0, c) * tx;
        let bottom = img.channel(x0, y1, c) * (1.0 - tx) + img.channel(x1, y1, c) * tx;
        *o = top * (1.0 - ty) + bottom * ty;
    }
}

fn finish(v: f64, mode: Mode) -> f64 {
    match mode {
        Mode::PilExact => quantize(v),
        Mode::Idealized => v,
    }
}

/// Bilinear resize to `width x height`. Same-size requests return a copy.
pub fn resize_bilinear(img: &Image, width: usize, height: usize, mode: Mode) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("resize to an empty image"));
    }
    if (width, height) == (img.width(), img.height()) {
        return Ok(img.clone());
    }
    let scale_x = img.width() as f64 / width as f64;
    let scale_y = img.height() as f64 / height as f64;
    let mut px = [0.0; 3];
    let mut data = Vec::with_capacity(width * height * CHANNELS);
    for y in 0..height {
        let sy = (y as f64 + 0.5) * scale_y - 0.5;
        for x in 0..width {
            let sx = (x as f64 + 0.5) * scale_x - 0.5;
            sample_bilinear(img, sx, sy, &mut px);
            data.extend(px.iter().map(|&v| finish(v, mode)));
        }
    }
    Image::new(width, height, data)
}

/// Resizes so the shorter side equals `short_side`; the long side is
/// `floor(long * short_side / short)`.
pub fn resize_short_side(img: &Image, short_side: usize, mode: Mode) -> Result<Image> {
    let (w, h) = (img.width(), img.height());
    let (new_w, new_h) = if w <= h {
        (short_side, h * short_side / w)
    } else {
        (w * short_side / h, short_side)
    };
    resize_bilinear(img, new_w, new_h, mode)
}

/// Top-left corner of the crop window shifted by `(+s, +s)` from center.
pub fn window_origin(template_width: usize, template_height: usize, crop: usize, s: usize) -> Result<(usize, usize)> {
    if template_width < crop || template_height < crop {
        return Err(Error::OutOfRange(format!(
            "{crop}x{crop} window does not fit a {template_width}x{template_height} template"
        )));
    }
    let left = (template_width - crop) / 2 + s;
    let top = (template_height - crop) / 2 + s;
    if left + crop > template_width || top + crop > template_height {
        return Err(Error::OutOfRange(format!(
            "shift {s} moves the {crop}x{crop} window outside the {template_width}x{template_height} template"
        )));
    }
    Ok((left, top))
}

/// Center crop of the resized template (the standard evaluation view).
pub fn center_crop(img: &Image, protocol: TranslationProtocol, mode: Mode) -> Result<Image> {
    let template = resize_short_side(img, protocol.short_side, mode)?;
    let crop = protocol.crop;
    if template.width() < crop || template.height() < crop {
        return Err(Error::OutOfRange(format!(
            "template {}x{} smaller than the crop",
            template.width(),
            template.height()
        )));
    }
    template.crop(
        (template.width() - crop) / 2,
        (template.height() - crop) / 2,
        crop,
        crop,
    )
}

/// Camera-shift translation: resize to the template, then crop the window
/// whose center is shifted by `s` pixels right and down. Windows that would
/// leave the template are an error; nothing is padded.
pub fn translate_crop(img: &Image, s: usize, protocol: TranslationProtocol, mode: Mode) -> Result<Image> {
    let template = resize_short_side(img, protocol.short_side, mode)?;
    let (left, top) = window_origin(template.width(), template.height(), protocol.crop, s)?;
    template.crop(left, top, protocol.crop, protocol.crop)
}

/// Counter-clockwise rotation about the image center with bilinear
/// resampling and edge replication outside the source.
pub fn rotate(img: &Image, degrees: f64, mode: Mode) -> Result<Image> {
    if !degrees.is_finite() {
        return Err(Error::invalid(format!("rotation angle {degrees}")));
    }
    if degrees == 0.0 {
        return Ok(img.clone());
    }
    let (sin, cos) = exact_sin_cos(degrees);
    let (w, h) = (img.width(), img.height());
    let cx = w as f64 / 2.0;
    let cy = h as f64 / 2.0;
    let mut px = [0.0; 3];
    let mut data = Vec::with_capacity(w * h * CHANNELS);
    for y in 0..h {
        let dy = y as f64 + 0.5 - cy;
        for x in 0..w {
            let dx = x as f64 + 0.5 - cx;
            let sx = cos * dx - sin * dy + cx - 0.5;
            let sy = sin * dx + cos * dy + cy - 0.5;
            sample_bilinear(img, sx, sy, &mut px);
            data.extend(px.iter().map(|&v| finish(v, mode)));
        }
    }
    Image::new(w, h, data)
}

/// `sin`/`cos` with exact values at multiples of 90 degrees.
fn exact_sin_cos(degrees: f64) -> (f64, f64) {
    let turn = degrees.rem_euclid(360.0);
    if turn.rem_euclid(90.0) == 0.0 {
        match (turn / 90.0) as u32 {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        turn.to_radians().sin_cos()
    }
}

/// Applies any corruption kind. Translation uses `protocol`; its factor must
/// be a non-negative whole number of pixels.
pub fn apply(img: &Image, spec: CorruptionSpec, protocol: TranslationProtocol) -> Result<Image> {
    match spec.kind {
        CorruptionKind::Contrast | CorruptionKind::Brightness => enhance(img, spec),
        CorruptionKind::Gamma => gamma(img, spec.factor, spec.mode),
        CorruptionKind::Rotation => rotate(img, spec.factor, spec.mode),
        CorruptionKind::Translation => {
            let s = spec.factor;
            if s < 0.0 || s.fract() != 0.0 || !s.is_finite() {
                return Err(Error::invalid(format!(
                    "translation shift must be a whole number of pixels >= 0, got {s}"
                )));
            }
            translate_crop(img, s as usize, protocol, spec.mode)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_strip() -> Image {
        Image::from_fn(256, 1, |x, _| [x as f64; 3])
    }

    fn test_image() -> Image {
        Image::from_fn(7, 5, |x, y| {
            [
                (x * 31 + y * 7) as f64 % 256.0,
                (x * 5 + y * 40) as f64,
                (200 - x * 9 - y * 3) as f64,
            ]
        })
    }

    #[test]
    fn factor_one_is_identity() {
        let img = test_image();
        for kind in [CorruptionKind::Contrast, CorruptionKind::Brightness] {
            for mode in [Mode::Idealized, Mode::PilExact] {
                let out = enhance(&img, CorruptionSpec::new(kind, 1.0, mode)).unwrap();
                assert_eq!(out, img);
            }
        }
        assert_eq!(gamma(&img, 1.0, Mode::PilExact).unwrap(), img);
    }

    #[test]
    fn contrast_zero_is_uniform_mean_gray() {
        let img = test_image();
        let out = enhance(&img, CorruptionSpec::new(CorruptionKind::Contrast, 0.0, Mode::PilExact)).unwrap();
        let anchor = contrast_anchor(&img, Mode::PilExact, ContrastAnchor::Luminance);
        assert!(out.as_slice().iter().all(|&v| v == anchor[0]));
        assert_eq!(anchor[0].fract(), 0.0);
    }

    #[test]
    fn brightness_five_saturates_above_51() {
        let out = enhance(
            &gradient_strip(),
            CorruptionSpec::new(CorruptionKind::Brightness, 5.0, Mode::PilExact),
        )
        .unwrap();
        for x in 0..256 {
            let v = out.channel(x, 0, 0);
            if x <= 51 {
                assert_eq!(v, 5.0 * x as f64);
            } else {
                assert_eq!(v, 255.0);
            }
        }
    }

    #[test]
    fn enhance_rejects_negative_factor_and_wrong_kind() {
        let img = test_image();
        assert!(enhance(&img, CorruptionSpec::new(CorruptionKind::Contrast, -0.1, Mode::PilExact)).is_err());
        assert!(enhance(&img, CorruptionSpec::new(CorruptionKind::Gamma, 2.0, Mode::PilExact)).is_err());
    }

    #[test]
    fn gamma_examples() {
        let img = Image::from_fn(3, 1, |x, _| [[0.0, 128.0, 255.0][x]; 3]);
        let out = gamma(&img, 2.0, Mode::PilExact).unwrap();
        assert_eq!(out.pixel(0, 0), [0.0; 3]);
        // 255 * (128/255)^2 = 64.25
        assert_eq!(out.pixel(1, 0), [64.0; 3]);
        assert_eq!(out.pixel(2, 0), [255.0; 3]);
        assert!(gamma(&img, 0.0, Mode::PilExact).is_err());
        assert!(gamma(&img, -1.0, Mode::Idealized).is_err());
    }

    #[test]
    fn pil_exact_outputs_stay_in_byte_range() {
        let img = test_image();
        for f in [0.0, 0.5, 2.0, 5.0, 17.0] {
            for kind in [CorruptionKind::Contrast, CorruptionKind::Brightness] {
                let out = enhance(&img, CorruptionSpec::new(kind, f, Mode::PilExact)).unwrap();
                assert!(out.is_u8_valid());
            }
        }
    }

    #[test]
    fn idealized_contrast_composes_affinely() {
        let img = test_image();
        let anchor = contrast_anchor(&img, Mode::Idealized, ContrastAnchor::Luminance)[0];
        let (f1, f2) = (1.7, 2.3);
        let once = enhance(&img, CorruptionSpec::new(CorruptionKind::Contrast, f1, Mode::Idealized)).unwrap();
        let twice = enhance(&once, CorruptionSpec::new(CorruptionKind::Contrast, f2, Mode::Idealized)).unwrap();
        for (out, &v) in twice.as_slice().iter().zip(img.as_slice()) {
            let want = anchor + f1 * f2 * (v - anchor);
            assert!((out - want).abs() <= 1e-12 * want.abs().max(1.0), "{out} vs {want}");
        }
    }

    #[test]
    fn channel_mean_anchor() {
        let img = Image::from_fn(2, 1, |x, _| [x as f64 * 10.0, 100.0, 7.0]);
        let a = contrast_anchor(&img, Mode::Idealized, ContrastAnchor::ChannelMean);
        assert_eq!(a, [5.0, 100.0, 7.0]);
    }

    #[test]
    fn translation_window_arithmetic() {
        // 256 rows by 340 columns
        assert_eq!(window_origin(340, 256, 224, 16).unwrap(), (58 + 16, 16 + 16));
        assert_eq!(window_origin(256, 256, 224, 16).unwrap(), (32, 32));
        assert!(matches!(window_origin(256, 256, 224, 17), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn translate_zero_equals_center_crop() {
        let img = Image::from_fn(300, 280, |x, y| [(x % 256) as f64, (y % 256) as f64, ((x + y) % 256) as f64]);
        let p = TranslationProtocol::STANDARD;
        let a = translate_crop(&img, 0, p, Mode::PilExact).unwrap();
        let b = center_crop(&img, p, Mode::PilExact).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.width(), a.height()), (224, 224));
        // template is 274x256, so the horizontal slack is 25 pixels
        assert!(translate_crop(&img, 16, p, Mode::PilExact).is_ok());
        assert!(translate_crop(&img, 17, p, Mode::PilExact).is_err());
    }

    #[test]
    fn resize_short_side_dims() {
        let img = Image::uniform(340, 200, [1.0, 2.0, 3.0]);
        let r = resize_short_side(&img, 100, Mode::Idealized).unwrap();
        assert_eq!((r.width(), r.height()), (170, 100));
        assert!(r.as_slice().chunks(3).all(|p| p == [1.0, 2.0, 3.0]));
    }

    #[test]
    fn rotation_identities() {
        let img = test_image().map(|v| v + 0.25);
        assert_eq!(rotate(&img, 0.0, Mode::Idealized).unwrap(), img);
        let full = rotate(&img, 360.0, Mode::Idealized).unwrap();
        for (a, b) in full.as_slice().iter().zip(img.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rotate_90_permutes_pixels() {
        let n = 8;
        // left half dark, right half bright
        let img = Image::from_fn(n, n, |x, _| if x < n / 2 { [20.0; 3] } else { [220.0; 3] });
        let out = rotate(&img, 90.0, Mode::PilExact).unwrap();
        for y in 0..n {
            for x in 0..n {
                assert_eq!(out.pixel(x, y), img.pixel(n - 1 - y, x));
            }
        }
        // counter-clockwise turn moves the bright right half to the top
        assert_eq!(out.pixel(0, 0), [220.0; 3]);
        assert_eq!(out.pixel(0, n - 1), [20.0; 3]);
    }

    #[test]
    fn apply_dispatch_and_translation_validation() {
        let img = Image::uniform(32, 32, [100.0; 3]);
        let p = TranslationProtocol { short_side: 32, crop: 16 };
        let spec = CorruptionSpec::new(CorruptionKind::Translation, 2.5, Mode::PilExact);
        assert!(apply(&img, spec, p).is_err());
        let spec = CorruptionSpec::new(CorruptionKind::Translation, 8.0, Mode::PilExact);
        assert_eq!(apply(&img, spec, p).unwrap().width(), 16);
        assert_eq!("Contrast".parse::<CorruptionKind>().unwrap(), CorruptionKind::Contrast);
    }
}
