use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::inputs::write_json;

/// Per-slide counts reported by a stage, e.g. `candidates` or `patches`.
pub type Counts = BTreeMap<&'static str, usize>;

#[derive(Debug, Clone, Serialize)]
pub struct SlideReport {
    pub slide_id: String,
    pub seconds: f64,
    pub counts: Counts,
}

#[derive(Debug, Clone, Serialize)]
pub struct Missed {
    pub slide_id: String,
    pub kind: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub total: usize,
    pub succeeded: usize,
    pub missed: Vec<Missed>,
    pub slides: Vec<SlideReport>,
    pub wall_seconds: f64,
    /// Mean per-slide processing time of the succeeded slides.
    pub minutes_per_slide: f64,
}

impl RunReport {
    pub fn exit_code(&self) -> ExitCode {
        if self.missed.is_empty() {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(2)
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        write_json(&dir.join("report.json"), self)
    }
}

/// Runs `f` over every item on the worker pool. A failing item is recorded
/// as missed and never stops the others; outputs keep input order.
pub fn run_batch<T, R, F>(
    command: &'static str,
    items: &[T],
    id: impl Fn(&T) -> String + Sync,
    f: F,
) -> (RunReport, Vec<R>)
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<(Counts, R), histopatch::error::Error> + Sync,
{
    let start = Instant::now();
    let outcomes: Vec<_> = items
        .par_iter()
        .map(|item| {
            let slide_id = id(item);
            let t = Instant::now();
            let r = f(item);
            let seconds = t.elapsed().as_secs_f64();
            match &r {
                Ok(_) => log::info!("{command} {slide_id}: done in {seconds:.2}s"),
                Err(e) => log::warn!("{command} {slide_id}: missed ({})", e),
            }
            (slide_id, seconds, r)
        })
        .collect();
    let mut slides = Vec::new();
    let mut outputs = Vec::new();
    let mut missed = Vec::new();
    for (slide_id, seconds, r) in outcomes {
        match r {
            Ok((counts, out)) => {
                slides.push(SlideReport { slide_id, seconds, counts });
                outputs.push(out);
            }
            Err(e) => missed.push(Missed {
                slide_id,
                kind: e.kind().to_string(),
                reason: e.to_string(),
            }),
        }
    }
    let minutes_per_slide = if slides.is_empty() {
        0.0
    } else {
        slides.iter().map(|s| s.seconds).sum::<f64>() / slides.len() as f64 / 60.0
    };
    let report = RunReport {
        command,
        total: items.len(),
        succeeded: slides.len(),
        missed,
        slides,
        wall_seconds: start.elapsed().as_secs_f64(),
        minutes_per_slide,
    };
    (report, outputs)
}
