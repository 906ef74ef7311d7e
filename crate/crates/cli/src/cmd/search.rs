use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use serde::Serialize;

use histopatch::retrieval::{knn_leave_one_out, wsi_leave_one_out, EmbeddingStore, Exclusion};

use crate::inputs::write_json;

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_enum, default_value_t = Level::Patch)]
    pub level: Level,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Rows or slides a query may not retrieve. Defaults to `self` for
    /// patch search and `patient` for slide search.
    #[arg(long, value_enum)]
    pub exclude: Option<Exclude>,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Include every query's neighbours in the report.
    #[arg(long)]
    pub neighbors: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Patch,
    Wsi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclude {
    #[value(name = "self")]
    SelfOnly,
    Slide,
    Patient,
}

pub fn run(a: SearchArgs) -> anyhow::Result<ExitCode> {
    let store = EmbeddingStore::load(&a.store)?;
    let result = match a.level {
        Level::Patch => {
            let exclusion = match a.exclude.unwrap_or(Exclude::SelfOnly) {
                Exclude::SelfOnly => Exclusion::SelfOnly,
                Exclude::Slide => Exclusion::SameSlide,
                Exclude::Patient => Exclusion::SamePatient,
            };
            knn_leave_one_out(&store, a.k, exclusion)?
        }
        Level::Wsi => {
            let exclude_patient = match a.exclude.unwrap_or(Exclude::Patient) {
                Exclude::Patient => true,
                Exclude::SelfOnly => false,
                Exclude::Slide => anyhow::bail!("--exclude slide has no meaning for slide-level search"),
            };
            wsi_leave_one_out(&store, a.k, exclude_patient)?
        }
    };
    let mut report = result.report();
    report["config"] = serde_json::json!({
        "store": a.store,
        "level": a.level,
        "k": a.k,
        "exclude": a.exclude,
    });
    if a.neighbors {
        report["per_query"] = serde_json::to_value(&result.queries)?;
    }
    match &a.report {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    log::info!(
        "search: {} queries, top-1 accuracy {:.4}, macro-F1 {:.4}",
        result.queries.len(),
        result.top1.accuracy,
        result.top1.macro_f1
    );
    Ok(ExitCode::SUCCESS)
}
