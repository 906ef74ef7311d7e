use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;

use histopatch::vit::{count_parameters, estimate_flops, save_weights, ModelConfig, WeightContainer};

#[derive(Debug, Clone, Args)]
pub struct InitWeightsArgs {
    /// Manifest path; the blob is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 224)]
    pub image_size: u32,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ParamsArgs {
    #[arg(long, default_values_t = [224, 512])]
    pub image_size: Vec<u32>,
}

pub fn init_weights(a: InitWeightsArgs) -> anyhow::Result<ExitCode> {
    let w = WeightContainer::random(ModelConfig::pathdino(a.image_size), a.seed)?;
    save_weights(&w, &a.out)?;
    log::info!("wrote {} tensors to {}", w.tensors().len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn params(a: ParamsArgs) -> anyhow::Result<ExitCode> {
    let rows: Vec<_> = a
        .image_size
        .iter()
        .map(|&side| {
            let c = ModelConfig::pathdino(side);
            c.validate()?;
            let p = count_parameters(&c);
            let f = estimate_flops(&c);
            Ok(serde_json::json!({
                "image_size": side,
                "tokens": c.tokens(),
                "parameters": p,
                "flops": f,
                "flops_with_attention": f.with_attention(),
            }))
        })
        .collect::<anyhow::Result<_>>()?;
    println!("{}", serde_json::to_string_pretty(&rows)?);
    Ok(ExitCode::SUCCESS)
}
