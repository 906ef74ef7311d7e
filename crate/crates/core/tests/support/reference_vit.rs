//! Straight-line f64 vision transformer written from the tensor name schema,
//! one scalar loop per operation.

use histopatch::vit::WeightContainer;

pub struct RefOutput {
    pub embedding: Vec<f64>,
    /// Final-norm output of every token.
    pub tokens: Vec<Vec<f64>>,
    /// `[block][head][query][key]`.
    pub attention: Vec<Vec<Vec<Vec<f64>>>>,
}

fn t(w: &WeightContainer, name: &str) -> Vec<f64> {
    w.get(name).unwrap().data.iter().map(|&v| v as f64).collect()
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (0..x.len()).map(|i| (x[i] - mean) / (var + eps).sqrt() * g[i] + b[i]).collect()
}

/// `W` is `[out, in]`.
fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let inp = x.len();
    (0..b.len())
        .map(|o| {
            let mut s = b[o];
            for i in 0..inp {
                s += w[o * inp + i] * x[i];
            }
            s
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// `input` is a normalised CHW image of the model's side.
pub fn forward(w: &WeightContainer, input: &[f32]) -> RefOutput {
    let c = w.config;
    let (side, p, d, heads) = (c.image_size as usize, c.patch_size as usize, c.dim, c.heads);
    let hd = d / heads;
    let g = side / p;
    let eps = c.ln_eps as f64;

    let conv_w = t(w, "patch_embed.proj.weight");
    let conv_b = t(w, "patch_embed.proj.bias");
    let mut tokens: Vec<Vec<f64>> = vec![t(w, "cls_token")];
    for gy in 0..g {
        for gx in 0..g {
            let mut v = vec![0.0; d];
            for o in 0..d {
                let mut s = conv_b[o];
                for ch in 0..3 {
                    for ky in 0..p {
                        for kx in 0..p {
                            let wi = ((o * 3 + ch) * p + ky) * p + kx;
                            let xi = ch * side * side + (gy * p + ky) * side + gx * p + kx;
                            s += conv_w[wi] * input[xi] as f64;
                        }
                    }
                }
                v[o] = s;
            }
            tokens.push(v);
        }
    }
    let pos = t(w, "pos_embed");
    for (i, tok) in tokens.iter_mut().enumerate() {
        for j in 0..d {
            tok[j] += pos[i * d + j];
        }
    }

    let n = tokens.len();
    let mut attention = Vec::new();
    for blk in 0..c.depth {
        let name = |s: &str| format!("blocks.{blk}.{s}");
        let (g1, b1) = (t(w, &name("norm1.weight")), t(w, &name("norm1.bias")));
        let (qkv_w, qkv_b) = (t(w, &name("attn.qkv.weight")), t(w, &name("attn.qkv.bias")));
        let (proj_w, proj_b) = (t(w, &name("attn.proj.weight")), t(w, &name("attn.proj.bias")));
        let (g2, b2) = (t(w, &name("norm2.weight")), t(w, &name("norm2.bias")));
        let (fc1_w, fc1_b) = (t(w, &name("mlp.fc1.weight")), t(w, &name("mlp.fc1.bias")));
        let (fc2_w, fc2_b) = (t(w, &name("mlp.fc2.weight")), t(w, &name("mlp.fc2.bias")));

        let qkv: Vec<Vec<f64>> = tokens.iter().map(|x| affine(&layer_norm(x, &g1, &b1, eps), &qkv_w, &qkv_b)).collect();
        let mut ctx = vec![vec![0.0; d]; n];
        let mut block_attn = Vec::new();
        for h in 0..heads {
            let mut head_attn = Vec::new();
            for i in 0..n {
                let mut scores = vec![0.0; n];
                for j in 0..n {
                    let mut s = 0.0;
                    for e in 0..hd {
                        s += qkv[i][h * hd + e] * qkv[j][d + h * hd + e];
                    }
                    scores[j] = s / (hd as f64).sqrt();
                }
                let m = scores.iter().cloned().fold(f64::MIN, f64::max);
                let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
                let probs: Vec<f64> = scores.iter().map(|s| (s - m).exp() / z).collect();
                for e in 0..hd {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += probs[j] * qkv[j][2 * d + h * hd + e];
                    }
                    ctx[i][h * hd + e] = s;
                }
                head_attn.push(probs);
            }
            block_attn.push(head_attn);
        }
        attention.push(block_attn);
        for i in 0..n {
            let a = affine(&ctx[i], &proj_w, &proj_b);
            for j in 0..d {
                tokens[i][j] += a[j];
            }
            let hidden: Vec<f64> = affine(&layer_norm(&tokens[i], &g2, &b2, eps), &fc1_w, &fc1_b)
                .into_iter()
                .map(gelu)
                .collect();
            let m = affine(&hidden, &fc2_w, &fc2_b);
            for j in 0..d {
                tokens[i][j] += m[j];
            }
        }
    }
    let (gf, bf) = (t(w, "norm.weight"), t(w, "norm.bias"));
    let tokens: Vec<Vec<f64>> = tokens.iter().map(|x| layer_norm(x, &gf, &bf, eps)).collect();
    RefOutput {
        embedding: tokens[0].clone(),
        tokens,
        attention,
    }
}

/// `max |a - b| / max |b|`.
pub fn relative_error(a: &[f32], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    num / den.max(1e-12)
}
