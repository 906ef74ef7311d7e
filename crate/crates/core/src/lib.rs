//! Whole-slide image analysis toolkit.
//!
//! The crate is organised along the pipeline:
//!
//! * [`slide`]: raster and pyramid-TIFF slide access, thumbnails, coordinate mapping.
//! * [`tissue`]: tissue masking (Otsu / fixed threshold) and outer-border contour tracing.
//! * [`fps`]: density-proportional patch selection with a minimum-distance constraint.
//! * [`rotate`]: rotation-agnostic multi-crop augmentation.
//! * [`vit`]: the compact 5-block vision transformer (forward pass, weights, accounting).
//! * [`retrieval`]: embedding store, leave-one-out search, WSI matching, metrics, linear probe.

pub mod error;
pub mod fps;
pub mod geometry;
pub mod retrieval;
pub mod rotate;
pub mod slide;
pub mod tissue;
pub mod vit;

pub use error::{Error, Result};
pub use fps::{
    build_candidates, estimate_density, run_fps, sample_plan, BandwidthRule, CandidateSet,
    DensityModel, FpsConfig, FpsOutcome, PatchPlan, SamplingMode,
};
pub use geometry::{Point, Rect};
pub use retrieval::{
    knn_leave_one_out, linear_probe_cv, macro_f1, wsi_distance, wsi_leave_one_out,
    EmbeddingStore, Exclusion, RetrievalResult, RowMeta,
};
pub use rotate::{make_crop_set, rotate_continuous, rotate_exact, CropSet, ExactAngle};
pub use slide::{map_to_slide, open_slide, read_region, RegionRequest, SlideOptions, SlideSource};
pub use tissue::{find_contours, make_mask, tissue_ratio, ContourSet, ThresholdMethod, TissueMask};
pub use vit::{count_parameters, estimate_flops, ModelConfig, PathDino, WeightContainer};

/// 8-bit RGB raster used throughout the pipeline.
pub type Raster = image::RgbImage;
