//! Procedural grayscale defect-like images.
//!
//! Five classes, each a shape on a noisy background with randomized
//! position, scale and contrast:
//!
//! | label | name     | pattern                     |
//! |-------|----------|-----------------------------|
//! | 0     | `void`   | filled disc                 |
//! | 1     | `pillar` | vertical bar                |
//! | 2     | `pad`    | ring                        |
//! | 3     | `solder` | speckle field               |
//! | 4     | `normal` | near-uniform background     |
//!
//! Sample `i` has label `i % 5` and draws from its own ChaCha8 stream keyed
//! on `(seed, i)`, so datasets are reproducible and prefixes are stable.
//!
//! On disk a dataset is `dataset.bin` (little-endian `f32`, `N×C×H×W`) plus a
//! `dataset.toml` manifest carrying the shape, seed, class names and labels.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CLASS_NAMES: [&str; 5] = ["void", "pillar", "pad", "solder", "normal"];
pub const DATASET_FORMAT_VERSION: u32 = 1;

const NOISE_STD: f32 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub image_size: usize,
    pub channels: usize,
    /// Flattened `N × (C·H·W)` pixels in `[0, 1]`.
    pub images: Vec<f32>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub seed: u64,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.image_size * self.image_size
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let len = self.image_len();
        &self.images[i * len..(i + 1) * len]
    }

    /// Every fifth group of `K` consecutive samples goes to test, giving an
    /// 80/20 split with the same class balance on both sides.
    pub fn is_test(&self, i: usize) -> bool {
        (i / self.num_classes()) % 5 == 4
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_test(i)).collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_test(i)).collect()
    }

    /// Raw pixels of the selected samples, one row each.
    pub fn pixel_matrix(&self, indices: &[usize]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        Matrix::new(indices.len(), self.image_len(), data)
    }

    pub fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut bytes = Vec::with_capacity(self.images.len() * 4);
        for v in &self.images {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join("dataset.bin"), bytes)?;
        let manifest = Manifest {
            format_version: DATASET_FORMAT_VERSION,
            dtype: "f32-le".to_string(),
            shape: [self.len(), self.channels, self.image_size, self.image_size],
            seed: self.seed,
            class_names: self.class_names.clone(),
            labels: self.labels.clone(),
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::invalid("manifest", e.to_string()))?;
        fs::write(dir.join("dataset.toml"), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<SyntheticDataset> {
        let manifest_path = dir.join("dataset.toml");
        let bin_path = dir.join("dataset.bin");
        for p in [&manifest_path, &bin_path] {
            if !p.exists() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        let text = fs::read_to_string(&manifest_path)?;
        let m: Manifest = toml::from_str(&text).map_err(|e| Error::Syntax {
            path: manifest_path.display().to_string(),
            message: e.to_string().trim_end().replace('\n', " "),
        })?;
        if m.format_version != DATASET_FORMAT_VERSION || m.dtype != "f32-le" {
            return Err(Error::invalid("format_version", "unsupported dataset format"));
        }
        let bytes = fs::read(&bin_path)?;
        let [n, c, h, w] = m.shape;
        if h != w || bytes.len() != n * c * h * w * 4 || m.labels.len() != n {
            return Err(Error::invalid("shape", "manifest shape does not match the tensor file"));
        }
        let images = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(SyntheticDataset {
            image_size: h,
            channels: c,
            images,
            labels: m.labels,
            class_names: m.class_names,
            seed: m.seed,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    dtype: String,
    shape: [usize; 4],
    seed: u64,
    class_names: Vec<String>,
    labels: Vec<usize>,
}

fn sample_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn render(label: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let s = size as f32;
    let background = rng.random_range(0.1f32..0.3);
    let contrast = rng.random_range(0.3f32..0.6);
    let mut img = vec![background; size * size];
    let cx = rng.random_range(0.3 * s..0.7 * s);
    let cy = rng.random_range(0.3 * s..0.7 * s);
    let at = |x: usize, y: usize| (x as f32 + 0.5 - cx).hypot(y as f32 + 0.5 - cy);

    match label {
        0 => {
            let radius = rng.random_range(0.12 * s..0.25 * s);
            for y in 0..size {
                for x in 0..size {
                    if at(x, y) <= radius {
                        img[y * size + x] += contrast;
                    }
                }
            }
        }
        1 => {
            let half = rng.random_range(0.06 * s..0.12 * s);
            let top = rng.random_range(0.05 * s..0.3 * s);
            let bottom = rng.random_range(0.7 * s..0.95 * s);
            for y in 0..size {
                for x in 0..size {
                    let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
                    if (fx - cx).abs() <= half && fy >= top && fy <= bottom {
                        img[y * size + x] += contrast;
                    }
                }
            }
        }
        2 => {
            let radius = rng.random_range(0.2 * s..0.35 * s);
            let half = rng.random_range(0.05 * s..0.1 * s).max(0.75);
            for y in 0..size {
                for x in 0..size {
                    if (at(x, y) - radius).abs() <= half {
                        img[y * size + x] += contrast;
                    }
                }
            }
        }
        3 => {
            let density = rng.random_range(0.15f64..0.3);
            for v in img.iter_mut() {
                if rng.random_bool(density) {
                    *v += contrast;
                }
            }
        }
        _ => {
            let tilt = rng.random_range(-0.05f32..0.05);
            for y in 0..size {
                for x in 0..size {
                    img[y * size + x] += tilt * (x as f32 / s - 0.5);
                }
            }
        }
    }

    let noise = Normal::new(0.0f32, NOISE_STD).expect("positive std");
    for v in img.iter_mut() {
        *v = (*v + noise.sample(rng)).clamp(0.0, 1.0);
    }
    img
}

/// Class-balanced synthetic dataset with `5 × n_per_class` images.
pub fn generate_dataset(n_per_class: usize, image_size: usize, seed: u64) -> Result<SyntheticDataset> {
    if image_size < 16 {
        return Err(Error::invalid("image_size", format!("{image_size} is below the minimum of 16")));
    }
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class", "must be positive"));
    }
    let k = CLASS_NAMES.len();
    let n = n_per_class * k;
    let mut images = Vec::with_capacity(n * image_size * image_size);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % k;
        let mut rng = sample_stream(seed, i as u64);
        images.extend(render(label, image_size, &mut rng));
        labels.push(label);
    }
    Ok(SyntheticDataset {
        image_size,
        channels: 1,
        images,
        labels,
        class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let a = generate_dataset(8, 16, 3).unwrap();
        let b = generate_dataset(8, 16, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.images, generate_dataset(8, 16, 4).unwrap().images);
        for c in 0..5 {
            assert_eq!(a.labels.iter().filter(|&&l| l == c).count(), 8);
        }
        assert!(a.images.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn split_is_80_20_and_balanced() {
        let d = generate_dataset(10, 16, 0).unwrap();
        let test = d.test_indices();
        assert_eq!(test.len(), 10);
        assert_eq!(d.train_indices().len(), 40);
        for c in 0..5 {
            assert_eq!(d.labels_of(&test).iter().filter(|&&l| l == c).count(), 2);
        }
    }

    #[test]
    fn rejects_small_images() {
        assert!(generate_dataset(1, 8, 0).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_dataset(3, 16, 9).unwrap();
        d.save(dir.path()).unwrap();
        assert_eq!(SyntheticDataset::load(dir.path()).unwrap(), d);
        assert!(matches!(
            SyntheticDataset::load(&dir.path().join("nope")),
            Err(Error::MissingFile(_))
        ));
    }
}
