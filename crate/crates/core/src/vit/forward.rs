use image::imageops::{self, FilterType};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::weights::{Normalization, WeightContainer};
use crate::error::{Error, Result};
use crate::Raster;

struct Block {
    norm1_w: Vec<f32>,
    norm1_b: Vec<f32>,
    qkv_w: Vec<f32>,
    qkv_b: Vec<f32>,
    proj_w: Vec<f32>,
    proj_b: Vec<f32>,
    norm2_w: Vec<f32>,
    norm2_b: Vec<f32>,
    fc1_w: Vec<f32>,
    fc1_b: Vec<f32>,
    fc2_w: Vec<f32>,
    fc2_b: Vec<f32>,
}

/// Inference-ready model. Read-only after construction; share freely across threads.
pub struct PathDino {
    config: ModelConfig,
    normalization: Normalization,
    cls_token: Vec<f32>,
    pos_embed: Vec<f32>,
    patch_w: Vec<f32>,
    patch_b: Vec<f32>,
    blocks: Vec<Block>,
    norm_w: Vec<f32>,
    norm_b: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    /// Class token after the final LayerNorm.
    pub embedding: Vec<f32>,
    /// Final-norm output for every token, row-major `tokens x dim`.
    pub tokens: Vec<f32>,
    /// Per block, `heads x tokens x tokens` row-stochastic matrices.
    pub attention: Option<Vec<Vec<f32>>>,
}

impl PathDino {
    pub fn new(w: &WeightContainer) -> Result<Self> {
        let t = |name: &str| -> Result<Vec<f32>> { Ok(w.get(name)?.data.clone()) };
        let blocks = (0..w.config.depth)
            .map(|i| {
                let b = |s: &str| t(&format!("blocks.{i}.{s}"));
                Ok(Block {
                    norm1_w: b("norm1.weight")?,
                    norm1_b: b("norm1.bias")?,
                    qkv_w: b("attn.qkv.weight")?,
                    qkv_b: b("attn.qkv.bias")?,
                    proj_w: b("attn.proj.weight")?,
                    proj_b: b("attn.proj.bias")?,
                    norm2_w: b("norm2.weight")?,
                    norm2_b: b("norm2.bias")?,
                    fc1_w: b("mlp.fc1.weight")?,
                    fc1_b: b("mlp.fc1.bias")?,
                    fc2_w: b("mlp.fc2.weight")?,
                    fc2_b: b("mlp.fc2.bias")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: w.config,
            normalization: w.normalization,
            cls_token: t("cls_token")?,
            pos_embed: t("pos_embed")?,
            patch_w: t("patch_embed.proj.weight")?,
            patch_b: t("patch_embed.proj.bias")?,
            blocks,
            norm_w: t("norm.weight")?,
            norm_b: t("norm.bias")?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Resizes (bilinear) to the model side and normalises into a CHW tensor.
    pub fn preprocess(&self, img: &Raster) -> Vec<f32> {
        preprocess(img, self.config.image_size, &self.normalization)
    }

    pub fn embed(&self, img: &Raster) -> Result<Vec<f32>> {
        Ok(self.forward(&self.preprocess(img), false)?.embedding)
    }

    /// Forward pass over a normalised CHW input of side `image_size`.
    pub fn forward(&self, input: &[f32], capture_attention: bool) -> Result<ForwardTrace> {
        let c = &self.config;
        let side = c.image_size as usize;
        if input.len() != 3 * side * side {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, expected 3x{side}x{side}",
                input.len()
            )));
        }
        let d = c.dim;
        let n = c.tokens();
        let patches = extract_patches(input, c);
        let embedded = linear(&patches, c.num_patches(), c.patch_len(), &self.patch_w, &self.patch_b, d);

        let mut x = vec![0f32; n * d];
        x[..d].copy_from_slice(&self.cls_token);
        x[d..].copy_from_slice(&embedded);
        for (v, p) in x.iter_mut().zip(&self.pos_embed) {
            *v += p;
        }

        let mut attention = capture_attention.then(Vec::new);
        for blk in &self.blocks {
            let h = layer_norm(&x, d, &blk.norm1_w, &blk.norm1_b, c.ln_eps);
            let qkv = linear(&h, n, d, &blk.qkv_w, &blk.qkv_b, 3 * d);
            let (ctx, attn) = self.attend(&qkv, capture_attention);
            let proj = linear(&ctx, n, d, &blk.proj_w, &blk.proj_b, d);
            for (v, p) in x.iter_mut().zip(&proj) {
                *v += p;
            }
            let h = layer_norm(&x, d, &blk.norm2_w, &blk.norm2_b, c.ln_eps);
            let mut hidden = linear(&h, n, d, &blk.fc1_w, &blk.fc1_b, c.hidden());
            hidden.par_iter_mut().for_each(|v| *v = gelu(*v));
            let out = linear(&hidden, n, c.hidden(), &blk.fc2_w, &blk.fc2_b, d);
            for (v, p) in x.iter_mut().zip(&out) {
                *v += p;
            }
            if let (Some(all), Some(a)) = (attention.as_mut(), attn) {
                all.push(a);
            }
        }
        let tokens = layer_norm(&x, d, &self.norm_w, &self.norm_b, c.ln_eps);
        if tokens.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOutput);
        }
        Ok(ForwardTrace {
            embedding: tokens[..d].to_vec(),
            tokens,
            attention,
        })
    }

    /// Multi-head scaled dot-product attention over a `tokens x 3*dim` qkv
    /// matrix laid out as `[q | k | v]`, each split into consecutive heads.
    fn attend(&self, qkv: &[f32], keep: bool) -> (Vec<f32>, Option<Vec<f32>>) {
        let c = &self.config;
        let (n, d, hd, heads) = (c.tokens(), c.dim, c.head_dim(), c.heads);
        let scale = (hd as f32).powf(-0.5);
        // Rows of every head: (head, query) -> (probabilities, context).
        let rows: Vec<(Vec<f32>, Vec<f32>)> = (0..heads * n)
            .into_par_iter()
            .map(|hi| {
                let (h, i) = (hi / n, hi % n);
                let q = &qkv[i * 3 * d + h * hd..i * 3 * d + (h + 1) * hd];
                let mut scores: Vec<f32> = (0..n)
                    .map(|j| {
                        let k = &qkv[j * 3 * d + d + h * hd..j * 3 * d + d + (h + 1) * hd];
                        dot(q, k) * scale
                    })
                    .collect();
                let max = scores.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let mut sum = 0f32;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                for s in scores.iter_mut() {
                    *s /= sum;
                }
                let mut ctx = vec![0f32; hd];
                for (j, &a) in scores.iter().enumerate() {
                    let v = &qkv[j * 3 * d + 2 * d + h * hd..j * 3 * d + 2 * d + (h + 1) * hd];
                    for (o, vv) in ctx.iter_mut().zip(v) {
                        *o += a * vv;
                    }
                }
                (scores, ctx)
            })
            .collect();
        let mut out = vec![0f32; n * d];
        for (hi, (_, ctx)) in rows.iter().enumerate() {
            let (h, i) = (hi / n, hi % n);
            out[i * d + h * hd..i * d + (h + 1) * hd].copy_from_slice(ctx);
        }
        let attn = keep.then(|| rows.into_iter().flat_map(|(p, _)| p).collect());
        (out, attn)
    }
}

pub fn preprocess(img: &Raster, side: u32, norm: &Normalization) -> Vec<f32> {
    let resized;
    let src = if img.dimensions() == (side, side) {
        img
    } else {
        resized = imageops::resize(img, side, side, FilterType::Triangle);
        &resized
    };
    let plane = (side * side) as usize;
    let mut out = vec![0f32; 3 * plane];
    for (i, p) in src.pixels().enumerate() {
        for ch in 0..3 {
            out[ch * plane + i] = (p.0[ch] as f32 / 255.0 - norm.mean[ch]) / norm.std[ch];
        }
    }
    out
}

/// Non-overlapping patches flattened in `(channel, row, col)` order, matching
/// a `[dim, 3, p, p]` convolution kernel.
fn extract_patches(input: &[f32], c: &ModelConfig) -> Vec<f32> {
    let side = c.image_size as usize;
    let p = c.patch_size as usize;
    let g = c.grid();
    let mut out = Vec::with_capacity(c.num_patches() * c.patch_len());
    for gy in 0..g {
        for gx in 0..g {
            for ch in 0..3 {
                for ky in 0..p {
                    let row = ch * side * side + (gy * p + ky) * side + gx * p;
                    out.extend_from_slice(&input[row..row + p]);
                }
            }
        }
    }
    out
}

#[inline]
fn lanes8(s: &[f32], k: usize) -> &[f32; 8] {
    s[k..k + 8].try_into().expect("8 lanes")
}

/// Dot product with eight partial sums; every caller sees the same summation order.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0f32; 8];
    let n8 = a.len() / 8 * 8;
    for k in (0..n8).step_by(8) {
        let (x, y) = (lanes8(a, k), lanes8(b, k));
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut s = 0f32;
    for i in n8..a.len() {
        s += a[i] * b[i];
    }
    lanes.iter().sum::<f32>() + s
}

/// Rows per parallel work item, independent of the thread count.
const ROW_BLOCK: usize = 32;

/// `y = x W^T + b` with `x: rows x inp`, `W: out x inp`.
fn linear(x: &[f32], rows: usize, inp: usize, w: &[f32], b: &[f32], out: usize) -> Vec<f32> {
    assert!(x.len() >= rows * inp && w.len() == out * inp && b.len() == out);
    let mut y = vec![0f32; rows * out];
    y.par_chunks_mut(ROW_BLOCK * out).enumerate().for_each(|(blk, yb)| {
        let r0 = blk * ROW_BLOCK;
        let m = yb.len() / out;
        for yr in yb.chunks_mut(out) {
            yr.copy_from_slice(b);
        }
        // SAFETY: x holds m rows of `inp` from r0, W is `out x inp` read
        // transposed, and yb is `m x out`; all strides are in elements.
        unsafe {
            matrixmultiply::sgemm(
                m,
                inp,
                out,
                1.0,
                x[r0 * inp..].as_ptr(),
                inp as isize,
                1,
                w.as_ptr(),
                1,
                inp as isize,
                1.0,
                yb.as_mut_ptr(),
                out as isize,
                1,
            );
        }
    });
    y
}

fn layer_norm(x: &[f32], d: usize, w: &[f32], b: &[f32], eps: f32) -> Vec<f32> {
    let mut out = vec![0f32; x.len()];
    for (row, o) in x.chunks(d).zip(out.chunks_mut(d)) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps as f64).sqrt();
        for i in 0..d {
            o[i] = ((row[i] as f64 - mean) * inv) as f32 * w[i] + b[i];
        }
    }
    out
}

#[inline]
fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2))
}

/// Class-token attention over the patch grid for each head of one block,
/// as `heads` grids of `grid x grid` values.
pub fn cls_attention_maps(trace: &ForwardTrace, config: &ModelConfig, block: usize) -> Option<Vec<Vec<f32>>> {
    let attn = trace.attention.as_ref()?.get(block)?;
    let n = config.tokens();
    Some(
        (0..config.heads)
            .map(|h| attn[h * n * n + 1..h * n * n + n].to_vec())
            .collect(),
    )
}
