use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use image::{imageops, GrayImage, Luma};

use histopatch::vit::{cls_attention_maps, load_weights, PathDino};

use crate::inputs::write_json;

#[derive(Debug, Clone, Args)]
pub struct AttnArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Block to visualise; defaults to the last one.
    #[arg(long)]
    pub block: Option<usize>,
}

/// Min-max scaled grid, upsampled with nearest neighbour to `side`.
fn heatmap(values: &[f32], grid: u32, side: u32) -> GrayImage {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let small = GrayImage::from_fn(grid, grid, |x, y| {
        Luma([(((values[(y * grid + x) as usize] - lo) / span) * 255.0).round() as u8])
    });
    imageops::resize(&small, side, side, imageops::FilterType::Nearest)
}

pub fn run(a: AttnArgs) -> anyhow::Result<ExitCode> {
    let weights = load_weights(&a.weights).with_context(|| format!("loading {}", a.weights.display()))?;
    let model = PathDino::new(&weights)?;
    let cfg = *model.config();
    let img = image::open(&a.image)
        .with_context(|| format!("opening {}", a.image.display()))?
        .to_rgb8();
    let block = a.block.unwrap_or(cfg.depth - 1);
    anyhow::ensure!(block < cfg.depth, "block {block} out of range, model has {}", cfg.depth);
    let trace = model.forward(&model.preprocess(&img), true)?;
    let maps = cls_attention_maps(&trace, &cfg, block).context("attention was not captured")?;
    fs::create_dir_all(&a.out)?;
    let grid = cfg.grid() as u32;
    for (h, m) in maps.iter().enumerate() {
        heatmap(m, grid, cfg.image_size).save(a.out.join(format!("head_{h}.png")))?;
    }
    let mean: Vec<f32> = (0..maps[0].len())
        .map(|i| maps.iter().map(|m| m[i]).sum::<f32>() / maps.len() as f32)
        .collect();
    heatmap(&mean, grid, cfg.image_size).save(a.out.join("mean.png"))?;
    write_json(
        &a.out.join("config.json"),
        &serde_json::json!({
            "command": "attn",
            "weights": a.weights,
            "image": a.image,
            "block": block,
            "grid": grid,
        }),
    )?;
    write_json(&a.out.join("attention.json"), &maps)?;
    Ok(ExitCode::SUCCESS)
}
