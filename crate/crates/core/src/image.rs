//! RGB raster type and binary PPM (P6, maxval 255) I/O.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel arithmetic regime for corruptions.
///
/// `PilExact` keeps channels as integers in `0..=255` (round half to even,
/// then clamp) after every transform. `Idealized` keeps real values and
/// never rounds or clamps, so enhancements are exact affine maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idealized,
    PilExact,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "idealized" | "ideal" => Ok(Mode::Idealized),
            "pil" | "pil_exact" | "pilexact" | "pil-exact" => Ok(Mode::PilExact),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Idealized => "idealized",
            Mode::PilExact => "pil",
        })
    }
}

/// Interleaved RGB image, row-major, three `f64` channels per pixel.
///
/// Integer images hold whole numbers in `0..=255`; idealized images may hold
/// any finite value.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

pub const CHANNELS: usize = 3;

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::shape(format!(
                "{} channel values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite pixel value {bad}")));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Image::new(width, height, bytes.iter().map(|&b| f64::from(b)).collect())
    }

    pub fn uniform(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Image {
            width,
            height,
            data,
        }
    }

    /// Builds an image from a per-pixel function `f(x, y) -> [r, g, b]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn channel(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Per-color-channel affine map `a * v + b[c]`, no rounding.
    pub fn affine(&self, a: f64, b: [f64; 3]) -> Image {
        let mut out = self.clone();
        for px in out.data.chunks_exact_mut(CHANNELS) {
            for (v, bc) in px.iter_mut().zip(b) {
                *v = a * *v + bc;
            }
        }
        out
    }

    /// True when every channel is a whole number in `0..=255`.
    pub fn is_u8_valid(&self) -> bool {
        self.data
            .iter()
            .all(|&v| (0.0..=255.0).contains(&v) && v.fract() == 0.0)
    }

    pub fn to_u8(&self) -> Result<Vec<u8>> {
        self.data
            .iter()
            .map(|&v| {
                if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                    Ok(v as u8)
                } else {
                    Err(Error::invalid(format!(
                        "pixel value {v} is not an integer in 0..=255"
                    )))
                }
            })
            .collect()
    }

    /// Rounds half to even and clamps into `0..=255`.
    pub fn quantized(&self) -> Image {
        self.map(quantize)
    }

    pub fn crop(&self, left: usize, top: usize, width: usize, height: usize) -> Result<Image> {
        if left + width > self.width || top + height > self.height {
            return Err(Error::OutOfRange(format!(
                "crop {width}x{height}+{left}+{top} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in top..top + height {
            let start = (y * self.width + left) * CHANNELS;
            data.extend_from_slice(&self.data[start..start + width * CHANNELS]);
        }
        Image::new(width, height, data)
    }

    pub fn encode_ppm(&self) -> Result<Vec<u8>> {
        let pixels = self.to_u8()?;
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&pixels);
        Ok(out)
    }

    pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Image, String> {
        let mut cursor = PpmCursor { bytes, pos: 0 };
        if cursor.token()? != b"P6" {
            return Err("not a binary PPM (expected P6 magic)".into());
        }
        let width = cursor.number()?;
        let height = cursor.number()?;
        let maxval = cursor.number()?;
        if maxval != 255 {
            return Err(format!("unsupported maxval {maxval}, only 255 is supported"));
        }
        // exactly one whitespace byte separates the header from the raster
        cursor.pos += 1;
        let need = width * height * CHANNELS;
        let raster = bytes
            .get(cursor.pos..cursor.pos + need)
            .ok_or_else(|| format!("truncated raster: need {need} bytes"))?;
        Image::from_u8(width, height, raster).map_err(|e| e.to_string())
    }

    pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::decode_ppm(&bytes).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode_ppm()?).map_err(|e| Error::io(path, e))
    }
}

#[inline]
pub(crate) fn quantize(v: f64) -> f64 {
    v.round_ties_even().clamp(0.0, 255.0)
}

struct PpmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PpmCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> std::result::Result<&'a [u8], String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err("unexpected end of header".into());
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> std::result::Result<usize, String> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .filter(|&n: &usize| n > 0)
            .ok_or_else(|| format!("bad header field {:?}", String::from_utf8_lossy(tok)))
    }
}
