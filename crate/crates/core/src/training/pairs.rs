use rand::Rng as _;

use crate::error::{Error, Result};
use crate::ingest::{InputMode, InputSpec, Slide};
use crate::nn::Tensor;
use crate::rng::{derive_seed, rng_for, TAG_PAIRS};

use super::data::{input_batch, PatchRef};

/// Patch pairs with same-slide labels (1.0 = same slide, 0.0 = different).
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub first: Vec<PatchRef>,
    pub second: Vec<PatchRef>,
    pub same_slide: Vec<f64>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.same_slide.len()
    }

    pub fn is_empty(&self) -> bool {
        self.same_slide.is_empty()
    }

    /// Train-mode network inputs for both sides of every pair.
    pub fn inputs(&self, slides: &[Slide], spec: &InputSpec, seed: u64) -> Result<(Tensor, Tensor)> {
        let a = input_batch(slides, &self.first, spec, InputMode::Train, |i| derive_seed(seed, &[0, i as u64]))?;
        let b = input_batch(slides, &self.second, spec, InputMode::Train, |i| derive_seed(seed, &[1, i as u64]))?;
        Ok((a, b))
    }
}

/// `ceil(size * positive_fraction)` positive pairs (two distinct patches of
/// one slide) followed by negative pairs (patches of two distinct slides).
pub fn sample_pair_batch(slides: &[Slide], size: usize, positive_fraction: f64, seed: u64) -> Result<PairBatch> {
    if size == 0 {
        return Err(Error::InvalidInput("pair batch size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&positive_fraction) {
        return Err(Error::InvalidInput(format!("positive fraction {positive_fraction} outside [0, 1]")));
    }
    let n_pos = ((size as f64 * positive_fraction).ceil() as usize).min(size);
    let n_neg = size - n_pos;
    let multi: Vec<usize> = (0..slides.len()).filter(|&s| slides[s].patches.len() >= 2).collect();
    let nonempty: Vec<usize> = (0..slides.len()).filter(|&s| !slides[s].patches.is_empty()).collect();
    if n_pos > 0 && multi.is_empty() {
        return Err(Error::Sampling("no slide has two patches for a positive pair".into()));
    }
    if n_neg > 0 && nonempty.len() < 2 {
        return Err(Error::Sampling("need two slides with patches for a negative pair".into()));
    }

    let mut rng = rng_for(seed, &[TAG_PAIRS]);
    let mut batch = PairBatch {
        first: Vec::with_capacity(size),
        second: Vec::with_capacity(size),
        same_slide: Vec::with_capacity(size),
    };
    for _ in 0..n_pos {
        let s = multi[rng.random_range(0..multi.len())];
        let n = slides[s].patches.len();
        let p = rng.random_range(0..n);
        let q = (p + rng.random_range(1..n)) % n;
        batch.first.push(PatchRef { slide: s, patch: p });
        batch.second.push(PatchRef { slide: s, patch: q });
        batch.same_slide.push(1.0);
    }
    for _ in 0..n_neg {
        let i = rng.random_range(0..nonempty.len());
        let j = (i + rng.random_range(1..nonempty.len())) % nonempty.len();
        let (s, t) = (nonempty[i], nonempty[j]);
        batch.first.push(PatchRef { slide: s, patch: rng.random_range(0..slides[s].patches.len()) });
        batch.second.push(PatchRef { slide: t, patch: rng.random_range(0..slides[t].patches.len()) });
        batch.same_slide.push(0.0);
    }
    Ok(batch)
}
