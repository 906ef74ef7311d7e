use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use histopatch::error::Error;
use histopatch::fps::{read_plan_jsonl, PlanRecord};
use histopatch::slide::{open_slide, patch_file_name, read_region, RegionRequest, SlideOptions, SlideSource};
use histopatch::Raster;

use crate::inputs::{list_plans, slide_index, stem, write_json};
use crate::report::{run_batch, Counts};

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    /// Slide file or directory of slides.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory of plan files written by `fps`.
    #[arg(long)]
    pub plans: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub(crate) fn read_plan(path: &Path) -> Result<Vec<PlanRecord>, Error> {
    read_plan_jsonl(BufReader::new(File::open(path)?))
}

/// Reads the planned rectangle at the plan's pyramid level.
pub(crate) fn read_patch(slide: &SlideSource, r: &PlanRecord) -> Result<Raster, Error> {
    let ds = slide
        .levels
        .get(r.level)
        .ok_or_else(|| Error::Invalid(format!("slide {} has no level {}", slide.slide_id, r.level)))?
        .downsample;
    let rect = r.slide_rect;
    read_region(
        slide,
        &RegionRequest {
            x: rect.x,
            y: rect.y,
            width: ((rect.w as f64 / ds).round() as u32).max(1),
            height: ((rect.h as f64 / ds).round() as u32).max(1),
            level: r.level,
        },
    )
}

pub(crate) fn open_planned_slide(
    index: &std::collections::BTreeMap<String, PathBuf>,
    slide_id: &str,
) -> Result<SlideSource, Error> {
    let path = index
        .get(slide_id)
        .ok_or_else(|| Error::Invalid(format!("no slide file for plan {slide_id}")))?;
    open_slide(path, &SlideOptions::default())
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    command: &'static str,
    input: &'a PathBuf,
    plans: &'a PathBuf,
}

pub fn run(a: ExtractArgs) -> anyhow::Result<ExitCode> {
    let plans = list_plans(&a.plans)?;
    let index = slide_index(&a.input)?;
    fs::create_dir_all(&a.out)?;
    write_json(
        &a.out.join("config.json"),
        &ResolvedConfig { command: "extract", input: &a.input, plans: &a.plans },
    )?;
    let (report, _) = run_batch("extract", &plans, |p| stem(p), |plan_path| {
        let records = read_plan(plan_path)?;
        let slide = open_planned_slide(&index, &stem(plan_path))?;
        let dir = a.out.join(&slide.slide_id);
        fs::create_dir_all(&dir)?;
        for r in &records {
            let patch = read_patch(&slide, r)?;
            let path = dir.join(patch_file_name(&slide.slide_id, r.slide_rect));
            patch
                .save(&path)
                .map_err(|e| Error::Invalid(format!("writing {}: {e}", path.display())))?;
        }
        Ok((Counts::from([("patches", records.len())]), ()))
    });
    report.write(&a.out).context("writing report")?;
    Ok(report.exit_code())
}
