mod knn;
mod metrics;
mod probe;
mod store;
mod wsi;

pub use knn::{
    knn_leave_one_out, majority_vote, Exclusion, MetricSummary, QueryResult, RetrievalResult, SearchLevel,
};
pub use metrics::{accuracy, macro_f1, mean_std};
pub use probe::{
    format_pm, linear_probe_cv, stratified_folds, FoldResult, Gradient, ProbeConfig, ProbeReport, SoftmaxRegression,
};
pub use store::{euclidean, EmbeddingStore, RowMeta, STORE_BLOB, STORE_SIDECAR};
pub use wsi::{group_by_slide, median, wsi_distance, wsi_leave_one_out, SlideGroup};
