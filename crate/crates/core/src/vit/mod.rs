//! Compact vision transformer: 5 pre-norm blocks of width 384 with 6 heads
//! over 16x16 patches, class-token output.

mod config;
mod forward;
mod weights;

pub use config::{count_parameters, estimate_flops, tensor_specs, FlopCount, ModelConfig, ParamCount, TensorSpec};
pub use forward::{cls_attention_maps, preprocess, ForwardTrace, PathDino};
pub use weights::{load_weights, save_weights, Manifest, ManifestEntry, Normalization, Tensor, WeightContainer, FORMAT_TAG};
