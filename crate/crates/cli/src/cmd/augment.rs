use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use serde::Serialize;

use histopatch::error::Error;
use histopatch::rotate::{make_crop_set, CropKind, CropProvenance, CropSetConfig, CropSpec, GlobalRotation};

use crate::inputs::{list_images, stable_hash, stem, write_json};
use crate::report::{run_batch, Counts};

#[derive(Debug, Clone, Args)]
pub struct AugmentArgs {
    /// Image file or directory of images.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub n_local: usize,
    /// Rotation used for the global crops.
    #[arg(long, value_enum, default_value_t = Mode::Auto)]
    pub mode: Mode,
    #[arg(long, default_value_t = 224)]
    pub global_size: u32,
    #[arg(long, default_value_t = 96)]
    pub local_size: u32,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Auto,
    Continuous,
    Discrete,
}

#[derive(Serialize)]
struct CropEntry<'a> {
    file: String,
    #[serde(flatten)]
    provenance: &'a CropProvenance,
}

#[derive(Serialize)]
struct SourceRecord<'a> {
    source_id: &'a str,
    seed: u64,
    crops: Vec<CropEntry<'a>>,
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    command: &'static str,
    input: &'a PathBuf,
    seed: u64,
    crops: &'a CropSetConfig,
}

pub fn run(a: AugmentArgs) -> anyhow::Result<ExitCode> {
    let images = list_images(&a.input)?;
    let cfg = CropSetConfig {
        n_local: a.n_local,
        global: CropSpec::global(a.global_size),
        local: CropSpec::local(a.local_size),
        global_rotation: match a.mode {
            Mode::Auto => GlobalRotation::Auto,
            Mode::Continuous => GlobalRotation::Continuous,
            Mode::Discrete => GlobalRotation::Discrete,
        },
        ..CropSetConfig::default()
    };
    fs::create_dir_all(&a.out)?;
    write_json(
        &a.out.join("config.json"),
        &ResolvedConfig { command: "augment", input: &a.input, seed: a.seed, crops: &cfg },
    )?;
    let (report, _) = run_batch("augment", &images, |p| stem(p), |path| {
        let id = stem(path);
        let img = image::open(path)
            .map_err(|e| Error::CorruptImage { path: path.clone(), reason: e.to_string() })?
            .to_rgb8();
        let seed = a.seed ^ stable_hash(&id);
        let set = make_crop_set(&id, &img, &cfg, seed)?;
        let dir = a.out.join(&id);
        fs::create_dir_all(&dir)?;
        let (mut g, mut l) = (0, 0);
        let mut crops = Vec::with_capacity(set.crops.len());
        for (crop, prov) in set.crops.iter().zip(&set.provenance) {
            let file = match prov.kind {
                CropKind::Global => {
                    g += 1;
                    format!("global_{}.png", g - 1)
                }
                CropKind::Local => {
                    l += 1;
                    format!("local_{}.png", l - 1)
                }
            };
            let path = dir.join(&file);
            crop.save(&path)
                .map_err(|e| Error::Invalid(format!("writing {}: {e}", path.display())))?;
            crops.push(CropEntry { file, provenance: prov });
        }
        let record = SourceRecord { source_id: &id, seed, crops };
        write_json(&dir.join("provenance.json"), &record).map_err(|e| Error::Invalid(e.to_string()))?;
        Ok((Counts::from([("global", g), ("local", l)]), ()))
    });
    report.write(&a.out)?;
    Ok(report.exit_code())
}
