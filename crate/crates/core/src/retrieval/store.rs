use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STORE_BLOB: &str = "embeddings.bin";
pub const STORE_SIDECAR: &str = "embeddings.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub slide_id: String,
    pub x: u32,
    pub y: u32,
    /// Index into the store's label map.
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
}

/// Row-major matrix of embeddings with per-row metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub dim: usize,
    pub labels: Vec<String>,
    data: Vec<f32>,
    meta: Vec<RowMeta>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    rows: usize,
    dim: usize,
    labels: Vec<String>,
    meta: Vec<RowMeta>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, labels: Vec<String>) -> Self {
        Self {
            dim,
            labels,
            data: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f32], meta: RowMeta) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::ShapeMismatch(format!("row has {} values, store dim is {}", row.len(), self.dim)));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite embedding for slide {}", meta.slide_id)));
        }
        if meta.label >= self.labels.len() {
            return Err(Error::Invalid(format!("label {} outside label map of {}", meta.label, self.labels.len())));
        }
        self.data.extend_from_slice(row);
        self.meta.push(meta);
        Ok(())
    }

    /// Index of `name` in the label map, adding it when absent.
    pub fn label_id(&mut self, name: &str) -> usize {
        match self.labels.iter().position(|l| l == name) {
            Some(i) => i,
            None => {
                self.labels.push(name.to_string());
                self.labels.len() - 1
            }
        }
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn meta(&self) -> &[RowMeta] {
        &self.meta
    }

    pub fn label_of(&self, i: usize) -> usize {
        self.meta[i].label
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut blob = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(STORE_BLOB), blob)?;
        let side = Sidecar {
            rows: self.len(),
            dim: self.dim,
            labels: self.labels.clone(),
            meta: self.meta.clone(),
        };
        fs::write(dir.join(STORE_SIDECAR), serde_json::to_vec_pretty(&side)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_slice(&fs::read(dir.join(STORE_SIDECAR))?)?;
        let blob = fs::read(dir.join(STORE_BLOB))?;
        let expected = side.rows * side.dim * 4;
        if blob.len() != expected || side.meta.len() != side.rows {
            return Err(Error::Invalid(format!(
                "store has {} bytes and {} meta rows, expected {} bytes for {}x{}",
                blob.len(),
                side.meta.len(),
                expected,
                side.rows,
                side.dim
            )));
        }
        let mut store = EmbeddingStore::new(side.dim, side.labels);
        let values: Vec<f32> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        for (i, m) in side.meta.into_iter().enumerate() {
            store.push(&values[i * side.dim..(i + 1) * side.dim], m)?;
        }
        Ok(store)
    }
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(label: usize) -> RowMeta {
        RowMeta {
            slide_id: "s".into(),
            x: 0,
            y: 0,
            label,
            patient_id: None,
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let mut s = EmbeddingStore::new(2, vec!["a".into()]);
        assert!(s.push(&[1.0], meta(0)).is_err());
        assert!(s.push(&[f32::NAN, 0.0], meta(0)).is_err());
        assert!(s.push(&[1.0, 2.0], meta(3)).is_err());
        assert!(s.push(&[1.0, 2.0], meta(0)).is_ok());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = EmbeddingStore::new(3, vec!["a".into(), "b".into()]);
        s.push(&[1.0, -2.5, 3.25], meta(1)).unwrap();
        s.push(&[0.0, 0.5, 1e-7], RowMeta { patient_id: Some("p1".into()), ..meta(0) }).unwrap();
        s.save(dir.path()).unwrap();
        assert_eq!(EmbeddingStore::load(dir.path()).unwrap(), s);
    }
}
