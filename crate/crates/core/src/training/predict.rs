use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::{InputMode, InputSpec, Slide};
use crate::networks::ModelBundle;
use crate::nn::Mode;

use super::data::{input_batch, PatchRef};

/// Patches per inference batch.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapperChoice {
    Source,
    Target,
}

impl FromStr for MapperChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(MapperChoice::Source),
            "target" => Ok(MapperChoice::Target),
            _ => Err(Error::InvalidInput(format!("unknown mapper `{s}` (expected source|target)"))),
        }
    }
}

impl fmt::Display for MapperChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapperChoice::Source => "source",
            MapperChoice::Target => "target",
        })
    }
}

/// High-grade probability of every patch, grouped per slide in input order.
/// Runs in eval mode, so repeated calls give identical results.
pub fn predict_patches(
    bundle: &ModelBundle,
    which: MapperChoice,
    slides: &[Slide],
    spec: &InputSpec,
) -> Result<Vec<Vec<f64>>> {
    let mapper = match which {
        MapperChoice::Source => &bundle.source.mapper,
        MapperChoice::Target => bundle
            .target
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("checkpoint has no target mapper".into()))?,
    };
    let classifier = &bundle.source.classifier;
    let mut out = Vec::with_capacity(slides.len());
    for (s, slide) in slides.iter().enumerate() {
        let refs: Vec<PatchRef> = (0..slide.patches.len()).map(|p| PatchRef { slide: s, patch: p }).collect();
        let mut probs = Vec::with_capacity(refs.len());
        for chunk in refs.chunks(EVAL_CHUNK) {
            let x = input_batch(slides, chunk, spec, InputMode::Eval, |_| 0)?;
            let (feats, _) = mapper.forward(&x, Mode::Eval)?;
            probs.extend(classifier.high_probabilities(&feats)?);
        }
        out.push(probs);
    }
    Ok(out)
}
