use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyper-parameters of the compact vision transformer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: u32,
    pub patch_size: u32,
    pub in_chans: u32,
    pub depth: usize,
    pub dim: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub ln_eps: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::pathdino(224)
    }
}

impl ModelConfig {
    /// 5 blocks, width 384, 6 heads, 16-px patches.
    pub const fn pathdino(image_size: u32) -> Self {
        Self {
            image_size,
            patch_size: 16,
            in_chans: 3,
            depth: 5,
            dim: 384,
            heads: 6,
            mlp_ratio: 4,
            ln_eps: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(Error::ShapeMismatch(format!(
                "image size {} is not a multiple of patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::ShapeMismatch(format!("dim {} not divisible by {} heads", self.dim, self.heads)));
        }
        if self.in_chans != 3 {
            return Err(Error::ShapeMismatch("only 3-channel input is supported".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        (self.image_size / self.patch_size) as usize
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Patch tokens plus the class token.
    pub fn tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn hidden(&self) -> usize {
        self.dim * self.mlp_ratio
    }

    pub fn patch_len(&self) -> usize {
        (self.in_chans * self.patch_size * self.patch_size) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    fn new(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Positional embedding and class token are not counted as weights.
    pub fn is_embedding_param(&self) -> bool {
        self.name == "cls_token" || self.name == "pos_embed"
    }
}

/// Every tensor of the model, in storage order. Linear weights are
/// `[out_features, in_features]`.
pub fn tensor_specs(c: &ModelConfig) -> Vec<TensorSpec> {
    let d = c.dim;
    let p = c.patch_size as usize;
    let mut v = vec![
        TensorSpec::new("cls_token", &[1, 1, d]),
        TensorSpec::new("pos_embed", &[1, c.tokens(), d]),
        TensorSpec::new("patch_embed.proj.weight", &[d, c.in_chans as usize, p, p]),
        TensorSpec::new("patch_embed.proj.bias", &[d]),
    ];
    for i in 0..c.depth {
        let b = format!("blocks.{i}");
        v.push(TensorSpec::new(format!("{b}.norm1.weight"), &[d]));
        v.push(TensorSpec::new(format!("{b}.norm1.bias"), &[d]));
        v.push(TensorSpec::new(format!("{b}.attn.qkv.weight"), &[3 * d, d]));
        v.push(TensorSpec::new(format!("{b}.attn.qkv.bias"), &[3 * d]));
        v.push(TensorSpec::new(format!("{b}.attn.proj.weight"), &[d, d]));
        v.push(TensorSpec::new(format!("{b}.attn.proj.bias"), &[d]));
        v.push(TensorSpec::new(format!("{b}.norm2.weight"), &[d]));
        v.push(TensorSpec::new(format!("{b}.norm2.bias"), &[d]));
        v.push(TensorSpec::new(format!("{b}.mlp.fc1.weight"), &[c.hidden(), d]));
        v.push(TensorSpec::new(format!("{b}.mlp.fc1.bias"), &[c.hidden()]));
        v.push(TensorSpec::new(format!("{b}.mlp.fc2.weight"), &[d, c.hidden()]));
        v.push(TensorSpec::new(format!("{b}.mlp.fc2.bias"), &[d]));
    }
    v.push(TensorSpec::new("norm.weight", &[d]));
    v.push(TensorSpec::new("norm.bias", &[d]));
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    /// Excludes the positional embedding and the class token.
    pub weights_only: u64,
    pub total: u64,
}

pub fn count_parameters(c: &ModelConfig) -> ParamCount {
    let specs = tensor_specs(c);
    let total: u64 = specs.iter().map(|s| s.numel() as u64).sum();
    let weights_only = specs.iter().filter(|s| !s.is_embedding_param()).map(|s| s.numel() as u64).sum();
    ParamCount { weights_only, total }
}

/// Operation counts for one forward pass.
///
/// Convolutions and linear layers count one operation per multiply-accumulate;
/// each LayerNorm counts 4 operations per normalised element. The
/// query-key product and the attention-weighted sum are reported in
/// `attention_matmul` but left out of `total`, which follows the counting
/// convention of common PyTorch FLOP counters for ViTs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCount {
    pub patch_embed: u64,
    pub linear: u64,
    pub layer_norm: u64,
    pub attention_matmul: u64,
    pub total: u64,
}

impl FlopCount {
    pub fn with_attention(&self) -> u64 {
        self.total + self.attention_matmul
    }
}

pub fn estimate_flops(c: &ModelConfig) -> FlopCount {
    let n = c.tokens() as u64;
    let d = c.dim as u64;
    let hidden = c.hidden() as u64;
    let depth = c.depth as u64;
    let patch_embed = c.num_patches() as u64 * c.patch_len() as u64 * d;
    let per_token_linear = d * 3 * d + d * d + d * hidden + hidden * d;
    let linear = depth * n * per_token_linear;
    let layer_norm = (2 * depth + 1) * n * d * 4;
    let attention_matmul = depth * 2 * n * n * d;
    FlopCount {
        patch_embed,
        linear,
        layer_norm,
        attention_matmul,
        total: patch_embed + linear + layer_norm,
    }
}
