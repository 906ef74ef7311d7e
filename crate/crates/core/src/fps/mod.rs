//! Density-proportional patch selection.
//!
//! Pipeline: tissue mask → outer contours → stride-grid candidates inside each
//! contour's bounding box → Gaussian KDE over the candidates → weighted
//! sampling under a minimum pairwise distance → mapping to slide coordinates.

mod candidates;
mod density;
mod sampling;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use candidates::{build_candidates, CandidateSet};
pub use density::{estimate_density, scott_bandwidth, BandwidthRule, DensityModel};
pub use sampling::{sample_plan, sample_plan_with, SamplingMode, DEFAULT_REJECTION_FACTOR};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::slide::{map_to_slide, SlideSource};
use crate::tissue::{find_contours_with, make_mask, ThresholdMethod, DEFAULT_MIN_CONTOUR_AREA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPatch {
    pub candidate: usize,
    pub mask_xy: Point,
    pub f: f64,
    pub p: f64,
    /// Filled once the plan is mapped to slide space.
    pub slide_rect: Option<Rect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchPlan {
    pub slide_id: String,
    pub patches: Vec<PlannedPatch>,
    pub n_s: usize,
    pub e_min: f64,
    pub seed: u64,
    /// Fewer than `n_s` patches could be placed.
    pub short: bool,
    pub mode: SamplingMode,
    pub level: usize,
    pub bandwidth: f64,
    pub patch_dims: (u32, u32),
}

/// One line of a plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub slide_id: String,
    pub mask_xy: [u32; 2],
    pub slide_rect: Rect,
    pub level: usize,
    pub seed: u64,
    pub f: f64,
    pub p: f64,
}

impl PatchPlan {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Maps every selected point to a `patch_size`-square rectangle in slide
    /// space, shifted inwards where rounding would cross the slide edge.
    pub fn map_to_slide(&mut self, slide: &SlideSource, patch_size: u32) {
        for p in &mut self.patches {
            let q = map_to_slide(p.mask_xy, slide);
            let x = q.x.min(slide.width.saturating_sub(patch_size));
            let y = q.y.min(slide.height.saturating_sub(patch_size));
            p.slide_rect = Some(Rect::new(x, y, patch_size, patch_size));
        }
    }

    pub fn records(&self) -> Vec<PlanRecord> {
        self.patches
            .iter()
            .map(|p| PlanRecord {
                slide_id: self.slide_id.clone(),
                mask_xy: [p.mask_xy.x, p.mask_xy.y],
                slide_rect: p.slide_rect.unwrap_or_default(),
                level: self.level,
                seed: self.seed,
                f: p.f,
                p: p.p,
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn read_plan_jsonl<R: BufRead>(r: R) -> Result<Vec<PlanRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpsConfig {
    /// Patch side in slide (level 0) pixels.
    pub patch_size: u32,
    pub n_patches: usize,
    /// Minimum distance in mask pixels; `None` means half the mask-space patch diagonal.
    pub e_min: Option<f64>,
    pub bandwidth: BandwidthRule,
    /// Candidate grid stride in mask pixels; `None` means a quarter of the patch width.
    pub stride: Option<u32>,
    pub coverage_min: f64,
    pub seed: u64,
    pub threshold: ThresholdMethod,
    pub min_contour_area: f64,
    pub mode: SamplingMode,
    pub rejection_factor: usize,
}

impl Default for FpsConfig {
    fn default() -> Self {
        Self {
            patch_size: 512,
            n_patches: 40,
            e_min: None,
            bandwidth: BandwidthRule::Scott,
            stride: None,
            coverage_min: 0.9,
            seed: 7,
            threshold: ThresholdMethod::Otsu,
            min_contour_area: DEFAULT_MIN_CONTOUR_AREA,
            mode: SamplingMode::WithoutReplacement,
            rejection_factor: DEFAULT_REJECTION_FACTOR,
        }
    }
}

impl FpsConfig {
    /// Patch dimensions in mask space for a slide.
    pub fn mask_patch_dims(&self, slide: &SlideSource) -> (u32, u32) {
        let (w, h) = slide.thumbnail_dims();
        let rw = (self.patch_size as f64 * w as f64 / slide.width as f64).round().max(1.0) as u32;
        let rh = (self.patch_size as f64 * h as f64 / slide.height as f64).round().max(1.0) as u32;
        (rw, rh)
    }

    pub fn resolved_e_min(&self, dims: (u32, u32)) -> f64 {
        self.e_min
            .unwrap_or_else(|| 0.5 * ((dims.0 as f64).powi(2) + (dims.1 as f64).powi(2)).sqrt())
    }

    pub fn resolved_stride(&self, dims: (u32, u32)) -> u32 {
        self.stride.unwrap_or((dims.0 / 4).max(1)).max(1)
    }
}

/// Intermediate counts recorded for the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpsStats {
    pub thumb_width: u32,
    pub thumb_height: u32,
    pub threshold: u8,
    pub tissue_pixels: u64,
    pub contours: usize,
    pub candidates: usize,
    pub selected: usize,
    pub short: bool,
    pub bandwidth: f64,
    pub e_min: f64,
    pub stride: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpsOutcome {
    pub plan: PatchPlan,
    pub stats: FpsStats,
}

/// Runs the whole selection for one slide.
pub fn run_fps(slide: &SlideSource, config: &FpsConfig) -> Result<FpsOutcome> {
    let thumb = slide.thumbnail()?;
    let mask = make_mask(&thumb, config.threshold)?;
    let contours = find_contours_with(&mask, config.min_contour_area);
    if contours.is_empty() {
        return Err(Error::NoTissue);
    }
    let dims = config.mask_patch_dims(slide);
    let stride = config.resolved_stride(dims);
    let e_min = config.resolved_e_min(dims);
    let candidates = build_candidates(&contours, dims, stride, &mask, config.coverage_min)?;
    let density = estimate_density(&candidates, config.bandwidth)?;
    let mut plan = sample_plan_with(&density, config.n_patches, e_min, config.seed, config.mode, config.rejection_factor)?;
    plan.slide_id = slide.slide_id.clone();
    plan.map_to_slide(slide, config.patch_size);
    let stats = FpsStats {
        thumb_width: mask.width,
        thumb_height: mask.height,
        threshold: mask.threshold_used,
        tissue_pixels: mask.tissue_pixels(),
        contours: contours.len(),
        candidates: candidates.len(),
        selected: plan.len(),
        short: plan.short,
        bandwidth: density.bandwidth,
        e_min,
        stride,
    };
    Ok(FpsOutcome { plan, stats })
}
