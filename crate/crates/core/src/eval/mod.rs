//! Slide-level aggregation, accuracy reporting, paired significance testing
//! and probability heatmaps.

mod heatmap;
mod report;
mod stats;

pub use heatmap::{colormap, render_heatmap, slide_thumbnail, smooth_grid, Heatmap, DEFAULT_SIGMA};
pub use report::{compare, evaluate, predict_slides, Comparison, EvalReport, ResultsTable, SlideLine};
pub use stats::{confusion, mcnemar, mcnemar_p_value, vote_slide, ConfusionMatrix, McNemarResult, SlidePrediction, Vote};
