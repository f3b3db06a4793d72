//! Unsupervised adversarial domain adaptation for slide-level binary grade
//! classification of tiled histology images.
//!
//! Stage one trains a source network (feature mapper + classifier) with
//! labels. Stage two copies the source mapper into a target mapper and adapts
//! it on unlabeled target slides with a domain discriminator and a Siamese
//! same-slide regularizer. Slides are graded by majority vote over patches.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod losses;
pub mod networks;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
