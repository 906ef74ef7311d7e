use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use histopatch::slide::is_supported_path;

/// Supported slide or image files under `input`, sorted by path. A file
/// argument is returned as-is.
pub fn list_images(input: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_supported_path(p))
        .collect();
    out.sort();
    if out.is_empty() {
        bail!("no slide images found in {}", input.display());
    }
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Slide id to path; the first path wins when two files share a stem.
pub fn slide_index(input: &Path) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    for p in list_images(input)? {
        map.entry(stem(&p)).or_insert(p);
    }
    Ok(map)
}

/// Plan files (`*.jsonl`) in a directory, sorted.
pub fn list_plans(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    out.sort();
    if out.is_empty() {
        bail!("no plan files in {}", dir.display());
    }
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
pub struct LabelRow {
    pub slide_id: String,
    pub label: String,
    #[serde(default)]
    pub patient_id: Option<String>,
}

/// Reads a `slide_id,label[,patient_id]` CSV with a header row.
pub fn read_labels(path: &Path) -> anyhow::Result<BTreeMap<String, LabelRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut out = BTreeMap::new();
    for row in rdr.deserialize() {
        let mut row: LabelRow = row.with_context(|| format!("parsing {}", path.display()))?;
        if row.patient_id.as_deref() == Some("") {
            row.patient_id = None;
        }
        out.insert(row.slide_id.clone(), row);
    }
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// FNV-1a, used to give each source a seed that does not depend on its position in the batch.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}
