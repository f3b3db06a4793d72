//! Both training stages and patch-level inference.

mod adapt;
mod config;
mod data;
mod pairs;
mod predict;
mod probe;
mod source;

pub use adapt::{adapt_target, AdaptMode, Adapter, IterationTrace, Phase, PhaseHashes};
pub use config::{ArchPreset, TrainConfig};
pub use data::PatchRef;
pub use pairs::{sample_pair_batch, PairBatch};
pub use predict::{predict_patches, MapperChoice};
pub use probe::domain_probe_accuracy;
pub use source::{train_source, SourceRun};
