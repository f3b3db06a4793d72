use rand::seq::index;

use crate::error::{Error, Result};
use crate::ingest::{prepare_input, GradeLabel, InputMode, InputSpec, Slide};
use crate::nn::{Matrix, Tensor};
use crate::rng::Rng;

/// Address of one patch inside a slide list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchRef {
    pub slide: usize,
    pub patch: usize,
}

pub(crate) fn all_patches(slides: &[Slide]) -> Vec<PatchRef> {
    slides
        .iter()
        .enumerate()
        .flat_map(|(s, slide)| (0..slide.patches.len()).map(move |p| PatchRef { slide: s, patch: p }))
        .collect()
}

/// Network input for a list of patches. `seed_of(i)` gives the augmentation
/// seed of the i-th sample in train mode.
pub(crate) fn input_batch(
    slides: &[Slide],
    refs: &[PatchRef],
    spec: &InputSpec,
    mode: InputMode,
    seed_of: impl Fn(usize) -> u64,
) -> Result<Tensor> {
    let samples = refs
        .iter()
        .enumerate()
        .map(|(i, r)| prepare_input(&slides[r.slide].patches[r.patch], spec, mode, seed_of(i)))
        .collect::<Result<Vec<_>>>()?;
    let c = spec.crop as usize;
    Tensor::from_samples(&samples, 3, c, c)
}

pub(crate) fn grade_of(slide: &Slide) -> Result<GradeLabel> {
    slide
        .grade
        .ok_or_else(|| Error::InvalidInput(format!("slide {} has no grade label", slide.slide_id)))
}

pub(crate) fn one_hot_labels(slides: &[Slide], refs: &[PatchRef]) -> Result<Matrix> {
    let rows = refs
        .iter()
        .map(|r| grade_of(&slides[r.slide]).map(|g| g.one_hot().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// `size` distinct patches drawn uniformly (all of them if fewer exist).
pub(crate) fn sample_refs(pool: &[PatchRef], size: usize, rng: &mut Rng) -> Vec<PatchRef> {
    let n = size.min(pool.len());
    index::sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect()
}
