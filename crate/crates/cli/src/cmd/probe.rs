use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;

use histopatch::retrieval::{linear_probe_cv, EmbeddingStore, ProbeConfig};

use crate::inputs::write_json;

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Train on raw features instead of z-scored ones.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn run(a: ProbeArgs) -> anyhow::Result<ExitCode> {
    let store = EmbeddingStore::load(&a.store)?;
    let cfg = ProbeConfig {
        folds: a.folds,
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed,
        standardize: !a.no_standardize,
    };
    let report = linear_probe_cv(&store, &cfg)?;
    let mut json = serde_json::to_value(&report)?;
    json["macro_f1"] = report.formatted_macro_f1().into();
    json["accuracy"] = report.formatted_accuracy().into();
    match &a.report {
        Some(path) => write_json(path, &json)?,
        None => println!("{}", serde_json::to_string_pretty(&json)?),
    }
    log::info!("probe: macro-F1 {} accuracy {}", report.formatted_macro_f1(), report.formatted_accuracy());
    Ok(ExitCode::SUCCESS)
}
