use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use serde::Serialize;

use histopatch::fps::{run_fps, BandwidthRule, FpsConfig, SamplingMode};
use histopatch::slide::{open_slide, SlideOptions, DEFAULT_THUMB_SIZE};
use histopatch::tissue::{find_contours_with, make_mask, ThresholdMethod};

use super::Auto;
use crate::inputs::{list_images, stem, write_json};
use crate::report::{run_batch, Counts};

#[derive(Debug, Clone, Args)]
pub struct FpsArgs {
    /// Slide file or directory of slides.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for plan files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub n_patches: usize,
    /// Patch side in full-resolution pixels.
    #[arg(long, default_value_t = 512)]
    pub patch_size: u32,
    /// Minimum centre distance in thumbnail pixels.
    #[arg(long, default_value = "auto")]
    pub e_min: Auto<f64>,
    /// `scott` or a positive bandwidth in thumbnail pixels.
    #[arg(long, default_value = "scott", value_parser = parse_bandwidth)]
    pub bandwidth: BandwidthRule,
    /// Candidate grid stride in thumbnail pixels.
    #[arg(long, default_value = "auto")]
    pub stride: Auto<u32>,
    /// Minimum tissue fraction of a candidate patch.
    #[arg(long, default_value_t = 0.9)]
    pub coverage: f64,
    /// `otsu` or a fixed luma threshold.
    #[arg(long, default_value = "otsu", value_parser = parse_threshold)]
    pub threshold: ThresholdMethod,
    #[arg(long, value_enum, default_value_t = Replacement::Without)]
    pub replacement: Replacement,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_THUMB_SIZE)]
    pub thumb_size: u32,
    /// Also write tissue masks (PBM) and contour files.
    #[arg(long)]
    pub save_masks: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Replacement {
    Without,
    With,
}

fn parse_bandwidth(s: &str) -> Result<BandwidthRule, String> {
    if s.eq_ignore_ascii_case("scott") {
        return Ok(BandwidthRule::Scott);
    }
    s.parse::<f64>()
        .map(BandwidthRule::Fixed)
        .map_err(|_| format!("expected 'scott' or a number, got {s:?}"))
}

fn parse_threshold(s: &str) -> Result<ThresholdMethod, String> {
    if s.eq_ignore_ascii_case("otsu") {
        return Ok(ThresholdMethod::Otsu);
    }
    s.parse::<u8>()
        .map(ThresholdMethod::Fixed)
        .map_err(|_| format!("expected 'otsu' or 0-255, got {s:?}"))
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    command: &'static str,
    input: &'a PathBuf,
    slide: SlideOptions,
    fps: &'a FpsConfig,
}

pub fn run(a: FpsArgs) -> anyhow::Result<ExitCode> {
    let slides = list_images(&a.input)?;
    let config = FpsConfig {
        patch_size: a.patch_size,
        n_patches: a.n_patches,
        e_min: a.e_min.0,
        bandwidth: a.bandwidth,
        stride: a.stride.0,
        coverage_min: a.coverage,
        seed: a.seed,
        threshold: a.threshold,
        mode: match a.replacement {
            Replacement::Without => SamplingMode::WithoutReplacement,
            Replacement::With => SamplingMode::WithReplacement,
        },
        ..FpsConfig::default()
    };
    let opts = SlideOptions { thumb_size: a.thumb_size };
    fs::create_dir_all(&a.out)?;
    write_json(
        &a.out.join("config.json"),
        &ResolvedConfig { command: "fps", input: &a.input, slide: opts, fps: &config },
    )?;
    if a.save_masks {
        fs::create_dir_all(a.out.join("masks"))?;
    }

    let (report, _) = run_batch("fps", &slides, |p| stem(p), |path| {
        let slide = open_slide(path, &opts)?;
        if a.save_masks {
            let mask = make_mask(&slide.thumbnail()?, config.threshold)?;
            mask.write_pbm(BufWriter::new(File::create(a.out.join("masks").join(format!("{}.pbm", slide.slide_id)))?))?;
            let contours = find_contours_with(&mask, config.min_contour_area);
            contours.write_jsonl(
                &slide.slide_id,
                BufWriter::new(File::create(a.out.join("masks").join(format!("{}.contours.jsonl", slide.slide_id)))?),
            )?;
        }
        let outcome = run_fps(&slide, &config)?;
        if outcome.plan.short {
            log::warn!(
                "{}: only {} of {} patches placed",
                slide.slide_id,
                outcome.plan.len(),
                config.n_patches
            );
        }
        outcome
            .plan
            .write_jsonl(BufWriter::new(File::create(a.out.join(format!("{}.jsonl", slide.slide_id)))?))?;
        let s = &outcome.stats;
        let counts = Counts::from([
            ("contours", s.contours),
            ("candidates", s.candidates),
            ("selected", s.selected),
            ("short", s.short as usize),
        ]);
        Ok((counts, ()))
    });
    report.write(&a.out)?;
    log::info!("fps: {} of {} slides succeeded", report.succeeded, report.total);
    Ok(report.exit_code())
}
