//! Weight container: a JSON manifest plus a raw little-endian f32 blob.
//!
//! ```text
//! model.json  {"format", "config", "normalization", "blob", "tensors": [{name, shape, dtype, offset}]}
//! model.bin   concatenated tensors, f32 little-endian, offsets in bytes
//! ```
//!
//! Tensor names follow the common PyTorch ViT layout (`blocks.{i}.attn.qkv.weight`, ...).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{tensor_specs, ModelConfig};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "histopatch-vit-f32le-v1";

/// Per-channel input normalisation applied after scaling pixels to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    /// ImageNet statistics.
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightContainer {
    pub config: ModelConfig,
    pub normalization: Normalization,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    #[serde(default)]
    pub normalization: Normalization,
    pub blob: String,
    pub tensors: Vec<ManifestEntry>,
}

impl WeightContainer {
    /// Builds a container, checking names and shapes against the config.
    pub fn new(config: ModelConfig, normalization: Normalization, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let specs = tensor_specs(&config);
        let mut index = BTreeMap::new();
        for (i, t) in tensors.iter().enumerate() {
            if index.insert(t.name.clone(), i).is_some() {
                return Err(Error::ManifestMismatch(format!("duplicate tensor {}", t.name)));
            }
            if t.data.len() != t.shape.iter().product::<usize>() {
                return Err(Error::ManifestMismatch(format!("tensor {} data length does not match shape", t.name)));
            }
        }
        for s in &specs {
            let Some(&i) = index.get(&s.name) else {
                return Err(Error::ManifestMismatch(format!("missing tensor {}", s.name)));
            };
            if tensors[i].shape != s.shape {
                return Err(Error::ManifestMismatch(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    s.name, tensors[i].shape, s.shape
                )));
            }
        }
        if tensors.len() != specs.len() {
            let known: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
            let extra = tensors.iter().find(|t| !known.contains(&t.name.as_str())).map(|t| t.name.clone());
            return Err(Error::ManifestMismatch(format!("unexpected tensor {}", extra.unwrap_or_default())));
        }
        Ok(Self {
            config,
            normalization,
            tensors,
            index,
        })
    }

    fn filled(config: ModelConfig, mut f: impl FnMut(&str, usize) -> f32) -> Result<Self> {
        let tensors = tensor_specs(&config)
            .into_iter()
            .map(|s| {
                let n = s.numel();
                let data = (0..n).map(|i| f(&s.name, i)).collect();
                Tensor {
                    name: s.name,
                    shape: s.shape,
                    data,
                }
            })
            .collect();
        Self::new(config, Normalization::default(), tensors)
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        Self::filled(config, |_, _| 0.0)
    }

    /// Random weights: N(0, 0.02) for matrices and embeddings, LayerNorm
    /// scales around 1 and small random biases.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Normal::new(0.0f32, 0.02).expect("valid normal");
        let b = Normal::new(0.0f32, 0.05).expect("valid normal");
        let g = Normal::new(1.0f32, 0.1).expect("valid normal");
        Self::filled(config, |name, _| {
            if name.contains("norm") && name.ends_with(".weight") {
                g.sample(&mut rng)
            } else if name.ends_with(".bias") {
                b.sample(&mut rng)
            } else {
                w.sample(&mut rng)
            }
        })
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.tensors[i])
            .ok_or_else(|| Error::ManifestMismatch(format!("missing tensor {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.tensors[i]),
            None => Err(Error::ManifestMismatch(format!("missing tensor {name}"))),
        }
    }

    /// Copy of the container for a different input side; the positional
    /// embedding grid is resized with bicubic interpolation.
    pub fn resized_for(&self, image_size: u32) -> Result<Self> {
        let mut config = self.config;
        config.image_size = image_size;
        config.validate()?;
        if config.tokens() == self.config.tokens() {
            let mut c = self.clone();
            c.config = config;
            return Ok(c);
        }
        let pos = self.get("pos_embed")?;
        let d = self.config.dim;
        let g_old = self.config.grid();
        let g_new = config.grid();
        let mut data = pos.data[..d].to_vec();
        data.extend(bicubic_resize_grid(&pos.data[d..], g_old, g_new, d));
        let mut tensors = self.tensors.clone();
        let i = self.index["pos_embed"];
        tensors[i] = Tensor {
            name: "pos_embed".into(),
            shape: vec![1, config.tokens(), d],
            data,
        };
        Self::new(config, self.normalization, tensors)
    }
}

fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.75;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Bicubic resize of a `g_old x g_old x d` grid (half-pixel centres, border clamp).
fn bicubic_resize_grid(src: &[f32], g_old: usize, g_new: usize, d: usize) -> Vec<f32> {
    let scale = g_old as f64 / g_new as f64;
    let taps = |o: usize| -> [(usize, f64); 4] {
        let s = (o as f64 + 0.5) * scale - 0.5;
        let f = s.floor();
        let t = s - f;
        let mut out = [(0usize, 0.0f64); 4];
        for (k, slot) in out.iter_mut().enumerate() {
            let idx = (f as i64 - 1 + k as i64).clamp(0, g_old as i64 - 1) as usize;
            *slot = (idx, cubic_weight(t - (k as f64 - 1.0)));
        }
        out
    };
    let mut out = vec![0f32; g_new * g_new * d];
    for oy in 0..g_new {
        let ty = taps(oy);
        for ox in 0..g_new {
            let tx = taps(ox);
            for c in 0..d {
                let mut acc = 0.0f64;
                for &(iy, wy) in &ty {
                    for &(ix, wx) in &tx {
                        acc += wy * wx * src[(iy * g_old + ix) * d + c] as f64;
                    }
                }
                out[(oy * g_new + ox) * d + c] = acc as f32;
            }
        }
    }
    out
}

fn blob_path(manifest_path: &Path, blob: &str) -> PathBuf {
    manifest_path.parent().unwrap_or(Path::new(".")).join(blob)
}

/// Writes `path` (manifest) and a sibling `.bin` blob.
pub fn save_weights(w: &WeightContainer, path: &Path) -> Result<()> {
    let blob_name = format!(
        "{}.bin",
        path.file_stem().and_then(|s| s.to_str()).unwrap_or("model")
    );
    let mut blob = Vec::with_capacity(w.tensors.iter().map(|t| t.data.len() * 4).sum());
    let mut entries = Vec::with_capacity(w.tensors.len());
    for t in &w.tensors {
        entries.push(ManifestEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            dtype: "f32".into(),
            offset: blob.len() as u64,
        });
        for v in &t.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        config: w.config,
        normalization: w.normalization,
        blob: blob_name.clone(),
        tensors: entries,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(blob_path(path, &blob_name), blob)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<WeightContainer> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(path)?)?;
    if manifest.format != FORMAT_TAG {
        return Err(Error::ManifestMismatch(format!("unknown format {}", manifest.format)));
    }
    let blob = fs::read(blob_path(path, &manifest.blob))?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        if e.dtype != "f32" {
            return Err(Error::ManifestMismatch(format!("tensor {} has dtype {}", e.name, e.dtype)));
        }
        let n: usize = e.shape.iter().product();
        let end = e.offset + 4 * n as u64;
        if end > blob.len() as u64 {
            return Err(Error::TruncatedBlob {
                expected: end,
                found: blob.len() as u64,
            });
        }
        let bytes = &blob[e.offset as usize..end as usize];
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor {
            name: e.name.clone(),
            shape: e.shape.clone(),
            data,
        });
    }
    WeightContainer::new(manifest.config, manifest.normalization, tensors)
}
