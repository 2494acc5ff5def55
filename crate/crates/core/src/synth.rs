//! Deterministic labeled dataset of colored shapes.
//!
//! Each image holds one circle, square or triangle in one of three color
//! bins on a gray background. Class `l` is shape `l % 3` in color bin
//! `l / 3`, so up to nine classes are available. With [`Background::Noise`]
//! every pixel also carries uniform noise.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensor::{uniform, RngSeed};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKSUM_ALGORITHM: &str = "sha256 over the concatenated PPM file bytes of all entries, in manifest order, lowercase hex";

pub const MAX_CLASSES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Flat,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_images: usize,
    pub image_size: usize,
    pub patch_size: usize,
    pub num_classes: usize,
    pub seed: RngSeed,
    pub background: Background,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_images: 900,
            image_size: 96,
            patch_size: 16,
            num_classes: 9,
            seed: RngSeed(20_220_101),
            background: Background::Flat,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_CLASSES).contains(&self.num_classes) {
            return Err(Error::invalid(format!(
                "num_classes must be in 2..={MAX_CLASSES}, got {}",
                self.num_classes
            )));
        }
        if self.num_images < self.num_classes {
            return Err(Error::invalid(format!(
                "{} images cannot cover {} classes",
                self.num_images, self.num_classes
            )));
        }
        if self.patch_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::invalid("image size must be a multiple of the patch size"));
        }
        if self.image_size < 4 * self.patch_size {
            return Err(Error::invalid("image size must be at least four patches"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: usize,
    pub seed: RngSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub checksum_algorithm: String,
    pub checksum: String,
    pub spec: SynthSpec,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label).collect()
    }
}

/// A loaded dataset: images in manifest order plus the manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn labels(&self) -> Vec<usize> {
        self.manifest.labels()
    }

    pub fn checksum(&self) -> &str {
        &self.manifest.checksum
    }
}

const COLOR_BINS: [[f64; 3]; 3] = [
    [164.0, 92.0, 92.0],
    [92.0, 164.0, 92.0],
    [92.0, 92.0, 164.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

impl Shape {
    pub fn for_label(label: usize) -> Shape {
        [Shape::Circle, Shape::Square, Shape::Triangle][label % 3]
    }

    /// Whether the point `(px, py)` lies inside a shape of side `side`
    /// centered at `(cx, cy)`.
    fn contains(self, px: f64, py: f64, cx: f64, cy: f64, side: f64) -> bool {
        let (dx, dy) = (px - cx, py - cy);
        let half = side / 2.0;
        match self {
            Shape::Circle => dx * dx + dy * dy <= half * half,
            Shape::Square => dx.abs() <= half && dy.abs() <= half,
            // apex up, base at the bottom of the bounding box
            Shape::Triangle => {
                let t = (dy + half) / side;
                (0.0..=1.0).contains(&t) && dx.abs() <= t * half
            }
        }
    }
}

/// Renders one image of class `label` from its own seed.
pub fn render(spec: &SynthSpec, label: usize, seed: RngSeed) -> Image {
    let mut rng = seed.rng();
    let size = spec.image_size as f64;
    let side = (0.3 * size).round() + uniform(&mut rng, -1.0, 1.0);
    let margin = side / 2.0 + 0.15 * size;
    let cx = uniform(&mut rng, margin, size - margin);
    let cy = uniform(&mut rng, margin, size - margin);
    let gray = uniform(&mut rng, 116.0, 140.0);
    let base = COLOR_BINS[label / 3];
    let color = base.map(|c| c + uniform(&mut rng, -8.0, 8.0));
    let shape = Shape::for_label(label);
    let (background_noise, shape_noise) = match spec.background {
        Background::Noise => (24.0, 12.0),
        Background::Flat => (0.0, 0.0),
    };
    let mut data = Vec::with_capacity(spec.image_size * spec.image_size * 3);
    for y in 0..spec.image_size {
        for x in 0..spec.image_size {
            let inside = shape.contains(x as f64 + 0.5, y as f64 + 0.5, cx, cy, side);
            for &shade in &color {
                let (v, amp) = if inside { (shade, shape_noise) } else { (gray, background_noise) };
                let v = if amp > 0.0 { v + uniform(&mut rng, -amp, amp) } else { v };
                data.push(v.round().clamp(0.0, 255.0));
            }
        }
    }
    Image::new(spec.image_size, spec.image_size, data).expect("rendered image is well formed")
}

/// Generates the dataset described by `spec`.
///
/// Labels cycle through the classes (`label = i % num_classes`), so class
/// counts differ by at most one. Image `i` is rendered from
/// `spec.seed.derive(i)`, independent of every other image.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<Image>, Manifest)> {
    spec.validate()?;
    let entries: Vec<ManifestEntry> = (0..spec.num_images)
        .map(|i| ManifestEntry {
            file: format!("img_{i:05}.ppm"),
            label: i % spec.num_classes,
            seed: spec.seed.derive(i as u64),
        })
        .collect();
    let images: Vec<Image> = entries
        .par_iter()
        .map(|e| render(spec, e.label, e.seed))
        .collect();
    let checksum = checksum(&images)?;
    Ok((
        images,
        Manifest {
            checksum_algorithm: CHECKSUM_ALGORITHM.to_string(),
            checksum,
            spec: *spec,
            entries,
        },
    ))
}

pub fn checksum(images: &[Image]) -> Result<String> {
    let mut hasher = Sha256::new();
    for img in images {
        hasher.update(img.encode_ppm()?);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn write_dataset(dir: impl AsRef<Path>, images: &[Image], manifest: &Manifest) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (img, entry) in images.iter().zip(&manifest.entries) {
        img.write_ppm(dir.join(&entry.file))?;
    }
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn manifest_path(dir: impl AsRef<Path>) -> PathBuf {
    dir.as_ref().join(MANIFEST_FILE)
}

/// Loads a dataset directory and verifies its checksum.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path = manifest_path(dir);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let images = manifest
        .entries
        .par_iter()
        .map(|e| Image::read_ppm(dir.join(&e.file)))
        .collect::<Result<Vec<_>>>()?;
    if manifest.entries.iter().any(|e| e.label >= manifest.spec.num_classes) {
        return Err(Error::Format {
            path,
            reason: "label outside the class range".into(),
        });
    }
    let actual = checksum(&images)?;
    if actual != manifest.checksum {
        return Err(Error::Format {
            path,
            reason: format!("checksum mismatch: manifest {} vs images {actual}", manifest.checksum),
        });
    }
    Ok(Dataset { images, manifest })
}

/// Generates and writes the dataset unless `dir` already holds a manifest.
pub fn ensure_dataset(dir: impl AsRef<Path>, spec: &SynthSpec) -> Result<Dataset> {
    let dir = dir.as_ref();
    if !manifest_path(dir).exists() {
        let (images, manifest) = generate(spec)?;
        write_dataset(dir, &images, &manifest)?;
    }
    load_dataset(dir)
}
