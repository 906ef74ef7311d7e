use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use histopatch::error::Error;
use histopatch::retrieval::{EmbeddingStore, RowMeta};
use histopatch::slide::patch_file_name;
use histopatch::vit::{load_weights, PathDino};

use super::extract::{open_planned_slide, read_patch, read_plan};
use crate::inputs::{list_plans, read_labels, slide_index, stem, write_json, LabelRow};
use crate::report::{run_batch, Counts};

pub const UNLABELED: &str = "unlabeled";

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("pixels").required(true).args(["input", "patches"]))]
pub struct EmbedArgs {
    /// Weight manifest (`model.json`).
    #[arg(long)]
    pub weights: PathBuf,
    /// Directory of plan files written by `fps`.
    #[arg(long)]
    pub plans: PathBuf,
    /// Read patches straight from the slides in this file or directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Read patches from PNGs written by `extract`.
    #[arg(long)]
    pub patches: Option<PathBuf>,
    /// CSV with `slide_id,label[,patient_id]`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    command: &'static str,
    weights: &'a PathBuf,
    plans: &'a PathBuf,
    input: &'a Option<PathBuf>,
    patches: &'a Option<PathBuf>,
    labels: &'a Option<PathBuf>,
    image_size: u32,
}

pub fn run(a: EmbedArgs) -> anyhow::Result<ExitCode> {
    let weights = load_weights(&a.weights).with_context(|| format!("loading {}", a.weights.display()))?;
    let model = PathDino::new(&weights)?;
    let plans = list_plans(&a.plans)?;
    let labels: Option<BTreeMap<String, LabelRow>> = a.labels.as_deref().map(read_labels).transpose()?;
    let index = a.input.as_deref().map(slide_index).transpose()?;
    fs::create_dir_all(&a.out)?;
    write_json(
        &a.out.join("config.json"),
        &ResolvedConfig {
            command: "embed",
            weights: &a.weights,
            plans: &a.plans,
            input: &a.input,
            patches: &a.patches,
            labels: &a.labels,
            image_size: weights.config.image_size,
        },
    )?;

    let (report, per_slide) = run_batch("embed", &plans, |p| stem(p), |plan_path| {
        let slide_id = stem(plan_path);
        let (label, patient_id) = match &labels {
            None => (UNLABELED.to_string(), None),
            Some(map) => {
                let row = map
                    .get(&slide_id)
                    .ok_or_else(|| Error::Invalid(format!("slide {slide_id} has no label")))?;
                (row.label.clone(), row.patient_id.clone())
            }
        };
        let records = read_plan(plan_path)?;
        let slide = match &index {
            Some(ix) => Some(open_planned_slide(ix, &slide_id)?),
            None => None,
        };
        let rows = records
            .par_iter()
            .map(|r| {
                let patch = match (&slide, &a.patches) {
                    (Some(s), _) => read_patch(s, r)?,
                    (None, Some(dir)) => {
                        let path = dir.join(&slide_id).join(patch_file_name(&slide_id, r.slide_rect));
                        image::open(&path)
                            .map_err(|e| Error::CorruptImage { path: path.clone(), reason: e.to_string() })?
                            .to_rgb8()
                    }
                    (None, None) => unreachable!("clap requires --input or --patches"),
                };
                let embedding = model.embed(&patch)?;
                Ok((r.slide_rect.x, r.slide_rect.y, embedding))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        Ok((Counts::from([("patches", rows.len())]), (slide_id, label, patient_id, rows)))
    });

    let mut store = EmbeddingStore::new(weights.config.dim, Vec::new());
    for (slide_id, label, patient_id, rows) in per_slide {
        let label = store.label_id(&label);
        for (x, y, e) in rows {
            store.push(
                &e,
                RowMeta {
                    slide_id: slide_id.clone(),
                    x,
                    y,
                    label,
                    patient_id: patient_id.clone(),
                },
            )?;
        }
    }
    store.save(&a.out)?;
    report.write(&a.out)?;
    log::info!("embed: {} rows from {} slides", store.len(), report.succeeded);
    Ok(report.exit_code())
}
