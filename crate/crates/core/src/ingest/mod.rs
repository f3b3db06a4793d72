//! Slide and patch data model, tissue filtering, grid tiling, patient-disjoint
//! splitting and network-input preparation.

pub mod layout;

use std::collections::BTreeMap;
use std::fmt;

use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, TAG_AUGMENT, TAG_SPLIT};

pub use layout::{
    read_dataset, read_slide_dir, read_split_manifest, slide_dir_name, write_dataset, write_split_manifest,
    SplitAssignment, MANIFEST_FILE,
};

/// Grayscale intensity (0-255 scale) below which a pixel counts as tissue.
pub const TISSUE_LUMA_THRESHOLD: f64 = 220.0;
/// Minimum tissue fraction for a tile to be kept.
pub const DEFAULT_MIN_TISSUE: f64 = 0.5;
pub const DEFAULT_PATCH_SIZE: u32 = 2048;

/// Binary grade: Gleason 6-7 is Low, 8-10 is High.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GradeLabel {
    Low,
    High,
}

impl GradeLabel {
    pub fn index(self) -> usize {
        match self {
            GradeLabel::Low => 0,
            GradeLabel::High => 1,
        }
    }

    pub fn one_hot(self) -> [f64; 2] {
        match self {
            GradeLabel::Low => [1.0, 0.0],
            GradeLabel::High => [0.0, 1.0],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Low" | "low" | "L" => Some(GradeLabel::Low),
            "High" | "high" | "H" => Some(GradeLabel::High),
            _ => None,
        }
    }
}

impl fmt::Display for GradeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradeLabel::Low => "Low",
            GradeLabel::High => "High",
        })
    }
}

pub fn gleason_to_grade(score: u8) -> Result<GradeLabel> {
    match score {
        6 | 7 => Ok(GradeLabel::Low),
        8..=10 => Ok(GradeLabel::High),
        _ => Err(Error::InvalidInput(format!("Gleason score {score} outside 6..=10"))),
    }
}

/// One tile of a slide.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: RgbImage,
    /// (row, col) in the slide's tile grid.
    pub grid_pos: (u32, u32),
    pub tissue_fraction: f64,
    pub slide_id: String,
}

impl Patch {
    pub fn new(pixels: RgbImage, grid_pos: (u32, u32), slide_id: impl Into<String>) -> Result<Self> {
        let tissue_fraction = tissue_fraction(&pixels)?;
        Ok(Patch {
            pixels,
            grid_pos,
            tissue_fraction,
            slide_id: slide_id.into(),
        })
    }
}

/// A bag of patches sharing one grade label and one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct Slide {
    pub slide_id: String,
    pub patient_id: String,
    pub gleason_score: Option<u8>,
    pub grade: Option<GradeLabel>,
    pub patches: Vec<Patch>,
}

impl Slide {
    /// Builds a slide, deriving the grade from the score and checking that
    /// every patch belongs to this slide.
    pub fn new(
        slide_id: impl Into<String>,
        patient_id: impl Into<String>,
        gleason_score: Option<u8>,
        patches: Vec<Patch>,
    ) -> Result<Self> {
        let slide_id = slide_id.into();
        let grade = gleason_score.map(gleason_to_grade).transpose()?;
        if let Some(p) = patches.iter().find(|p| p.slide_id != slide_id) {
            return Err(Error::InvalidInput(format!(
                "patch tagged `{}` placed in slide `{slide_id}`",
                p.slide_id
            )));
        }
        Ok(Slide {
            slide_id,
            patient_id: patient_id.into(),
            gleason_score,
            grade,
            patches,
        })
    }

    /// The same slide with its label withheld.
    pub fn unlabeled(&self) -> Slide {
        Slide {
            gleason_score: None,
            grade: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Slide>,
    pub test: Vec<Slide>,
    pub ratio: f64,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn assignments(&self) -> Vec<SplitAssignment> {
        let mut out: Vec<SplitAssignment> = self
            .train
            .iter()
            .map(|s| SplitAssignment::new(&s.slide_id, true))
            .chain(self.test.iter().map(|s| SplitAssignment::new(&s.slide_id, false)))
            .collect();
        out.sort_by(|a, b| a.slide_id.cmp(&b.slide_id));
        out
    }
}

fn luma(p: &image::Rgb<u8>) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

/// Fraction of pixels whose luma is below [`TISSUE_LUMA_THRESHOLD`].
pub fn tissue_fraction(pixels: &RgbImage) -> Result<f64> {
    let total = pixels.width() as usize * pixels.height() as usize;
    if total == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let tissue = pixels.pixels().filter(|p| luma(p) < TISSUE_LUMA_THRESHOLD).count();
    Ok(tissue as f64 / total as f64)
}

/// Non-overlapping tiling from the top-left corner. Partial tiles at the
/// right and bottom borders are dropped; tiles below `min_tissue` are
/// filtered out.
pub fn extract_patches(slide_image: &RgbImage, patch_size: u32, min_tissue: f64, slide_id: &str) -> Result<Vec<Patch>> {
    if patch_size == 0 {
        return Err(Error::InvalidInput("patch_size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&min_tissue) {
        return Err(Error::InvalidInput(format!("min_tissue {min_tissue} outside [0, 1]")));
    }
    let rows = slide_image.height() / patch_size;
    let cols = slide_image.width() / patch_size;
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let tile = imageops::crop_imm(slide_image, c * patch_size, r * patch_size, patch_size, patch_size).to_image();
            let patch = Patch::new(tile, (r, c), slide_id)?;
            if patch.tissue_fraction >= min_tissue {
                out.push(patch);
            }
        }
    }
    Ok(out)
}

/// Patients are shuffled with the seeded stream and then assigned one by one
/// to the training side whenever that moves the training slide count closer
/// to `ratio * total`; everything else lands in the test side.
pub fn split_patient_disjoint(slides: Vec<Slide>, ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if slides.is_empty() {
        return Err(Error::InvalidInput("no slides to split".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!("split ratio {ratio} outside (0, 1)")));
    }
    let total = slides.len();
    let mut by_patient: BTreeMap<String, Vec<Slide>> = BTreeMap::new();
    for s in slides {
        by_patient.entry(s.patient_id.clone()).or_default().push(s);
    }
    if by_patient.len() < 2 {
        return Err(Error::DegenerateSplit(format!(
            "all {total} slides belong to one patient"
        )));
    }
    let mut groups: Vec<Vec<Slide>> = by_patient.into_values().collect();
    groups.shuffle(&mut rng_for(seed, &[TAG_SPLIT]));

    let goal = ratio * total as f64;
    let mut train_groups = Vec::new();
    let mut test_groups = Vec::new();
    let mut count = 0usize;
    for g in groups {
        let now = (count as f64 - goal).abs();
        let next = ((count + g.len()) as f64 - goal).abs();
        if next < now {
            count += g.len();
            train_groups.push(g);
        } else {
            test_groups.push(g);
        }
    }
    if test_groups.is_empty() && train_groups.len() > 1 {
        let g = train_groups.pop().expect("non-empty");
        test_groups.push(g);
    }
    if train_groups.is_empty() || test_groups.is_empty() {
        return Err(Error::DegenerateSplit(format!(
            "cannot place {total} slides on both sides at ratio {ratio}"
        )));
    }
    Ok(DatasetSplit {
        train: train_groups.into_iter().flatten().collect(),
        test: test_groups.into_iter().flatten().collect(),
        ratio,
        seed,
    })
}

/// Resize-then-crop geometry of the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub resize: u32,
    pub crop: u32,
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec { resize: 256, crop: 224 }
    }
}

impl InputSpec {
    /// 64-pixel patches cropped to 56, preserving the 256:224 proportion.
    pub fn desk() -> Self {
        InputSpec { resize: 64, crop: 56 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop == 0 || self.crop > self.resize {
            return Err(Error::config("crop", format!("must be in 1..={}", self.resize)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    Train,
    Eval,
}

pub const CHANNEL_MEAN: f64 = 0.5;
pub const CHANNEL_STD: f64 = 0.5;

/// Crop offset (y, x) and flip flag used for a given mode and seed.
pub fn crop_geometry(spec: &InputSpec, mode: InputMode, seed: u64) -> (u32, u32, bool) {
    let slack = spec.resize - spec.crop;
    match mode {
        InputMode::Eval => (slack / 2, slack / 2, false),
        InputMode::Train => {
            let mut rng = rng_for(seed, &[TAG_AUGMENT]);
            let y = rng.random_range(0..=slack);
            let x = rng.random_range(0..=slack);
            (y, x, rng.random_bool(0.5))
        }
    }
}

/// Resize to `spec.resize`, crop `spec.crop` (random + horizontal flip in
/// train mode, centered in eval mode) and standardize each channel. Output is
/// channel-planar `[3, crop, crop]`.
pub fn prepare_input(patch: &Patch, spec: &InputSpec, mode: InputMode, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let img = &patch.pixels;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidInput("empty patch image".into()));
    }
    let resized;
    let src = if img.width() == spec.resize && img.height() == spec.resize {
        img
    } else {
        resized = imageops::resize(img, spec.resize, spec.resize, FilterType::Triangle);
        &resized
    };
    let (oy, ox, flip) = crop_geometry(spec, mode, seed);
    let c = spec.crop as usize;
    let mut out = vec![0.0; 3 * c * c];
    for y in 0..c {
        for x in 0..c {
            let sx = if flip { c - 1 - x } else { x };
            let p = src.get_pixel(ox + sx as u32, oy + y as u32);
            for ch in 0..3 {
                out[(ch * c + y) * c + x] = (p[ch] as f64 / 255.0 - CHANNEL_MEAN) / CHANNEL_STD;
            }
        }
    }
    Ok(out)
}
