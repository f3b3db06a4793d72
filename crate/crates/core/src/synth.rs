//! Deterministic synthetic slides with a controllable appearance shift.
//!
//! Low-grade slides are rendered with sparse large nuclei-like blobs,
//! high-grade slides with dense small ones, on a pink stroma background. The
//! target domain is the same renderer followed by a pixel-wise stain/scanner
//! shift.

use image::{Rgb, RgbImage};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{GradeLabel, Patch, Slide};
use crate::rng::{rng_for, Rng, TAG_SYNTH_SHIFT, TAG_SYNTH_SLIDE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    /// Expected blob count per 64x64 pixel area.
    pub blob_density: f64,
    pub radius_min: f64,
    pub radius_max: f64,
}

/// Appearance change applied to every target-domain pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainShift {
    pub hue_rotation: f64,
    pub brightness_scale: f64,
    pub blur_sigma: f64,
    /// Standard deviation on the unit intensity scale (multiplied by 255).
    pub noise_std: f64,
}

impl DomainShift {
    pub const IDENTITY: DomainShift = DomainShift {
        hue_rotation: 0.0,
        brightness_scale: 1.0,
        blur_sigma: 0.0,
        noise_std: 0.0,
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn validate(&self) -> Result<()> {
        if !self.hue_rotation.is_finite() {
            return Err(Error::config("hue_rotation", "must be finite"));
        }
        if !(self.brightness_scale.is_finite() && self.brightness_scale > 0.0) {
            return Err(Error::config("brightness_scale", "must be positive"));
        }
        if !(self.blur_sigma.is_finite() && self.blur_sigma >= 0.0) {
            return Err(Error::config("blur_sigma", "must be non-negative"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("noise_std", "must be non-negative"));
        }
        Ok(())
    }
}

impl Default for DomainShift {
    fn default() -> Self {
        DomainShift {
            hue_rotation: 40.0,
            brightness_scale: 0.8,
            blur_sigma: 1.0,
            noise_std: 4.0 / 255.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_slides_per_class: usize,
    pub patches_per_slide_min: usize,
    pub patches_per_slide_max: usize,
    pub patch_size: u32,
    pub texture_low: Texture,
    pub texture_high: Texture,
    pub shift: DomainShift,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_slides_per_class: 20,
            patches_per_slide_min: 8,
            patches_per_slide_max: 12,
            patch_size: 64,
            texture_low: Texture {
                blob_density: 4.0,
                radius_min: 6.0,
                radius_max: 9.0,
            },
            texture_high: Texture {
                blob_density: 16.0,
                radius_min: 2.5,
                radius_max: 4.0,
            },
            shift: DomainShift::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_slides_per_class == 0 {
            return Err(Error::config("n_slides_per_class", "must be positive"));
        }
        if self.patches_per_slide_min == 0 {
            return Err(Error::config("patches_per_slide_min", "must be positive"));
        }
        if self.patches_per_slide_max < self.patches_per_slide_min {
            return Err(Error::config("patches_per_slide_max", "must be >= patches_per_slide_min"));
        }
        if self.patch_size < 32 {
            return Err(Error::config("patch_size", "must be at least 32"));
        }
        for (name, t) in [("texture_low", &self.texture_low), ("texture_high", &self.texture_high)] {
            if !(t.blob_density > 0.0 && t.radius_min > 0.0 && t.radius_max >= t.radius_min) {
                return Err(Error::config(name, "density and radii must be positive with min <= max"));
            }
        }
        self.shift.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

const BACKGROUND: [f64; 3] = [228.0, 176.0, 202.0];
const NUCLEUS: [f64; 3] = [104.0, 46.0, 132.0];

fn render_patch(size: u32, texture: &Texture, tint: [f64; 3], density_scale: f64, rng: &mut Rng) -> RgbImage {
    let n = size as usize;
    let mut buf = vec![[0.0f64; 3]; n * n];
    for px in buf.iter_mut() {
        let jitter = rng.random_range(-5.0..5.0);
        for c in 0..3 {
            px[c] = BACKGROUND[c] + tint[c] + jitter;
        }
    }
    let area_scale = (n * n) as f64 / 4096.0;
    let expected = texture.blob_density * density_scale * area_scale;
    let count = rng.random_range((0.75 * expected).round() as usize..=(1.25 * expected).round() as usize);
    for _ in 0..count {
        let cx = rng.random_range(0.0..n as f64);
        let cy = rng.random_range(0.0..n as f64);
        let r = rng.random_range(texture.radius_min..=texture.radius_max);
        let shade = rng.random_range(-12.0..12.0);
        let color = [NUCLEUS[0] + shade, NUCLEUS[1] + shade, NUCLEUS[2] + shade];
        let (y0, y1) = ((cy - r - 1.0).max(0.0) as usize, ((cy + r + 1.0) as usize).min(n - 1));
        let (x0, x1) = ((cx - r - 1.0).max(0.0) as usize, ((cx + r + 1.0) as usize).min(n - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
                let alpha = (r - d + 0.5).clamp(0.0, 1.0);
                if alpha > 0.0 {
                    let px = &mut buf[y * n + x];
                    for c in 0..3 {
                        px[c] = (1.0 - alpha) * px[c] + alpha * (color[c] + tint[c]);
                    }
                }
            }
        }
    }
    let mut img = RgbImage::new(size, size);
    for (i, px) in buf.iter().enumerate() {
        let to_u8 = |v: f64| v.round().clamp(0.0, 255.0) as u8;
        img.put_pixel((i % n) as u32, (i / n) as u32, Rgb([to_u8(px[0]), to_u8(px[1]), to_u8(px[2])]));
    }
    img
}

/// Render the slides of one domain. Slide `k` (Low slides first) is drawn from
/// its own stream derived from `(seed, k)`, so the domain only changes the
/// post-rendering shift.
pub fn generate_dataset(config: &SynthConfig, domain: Domain) -> Result<Vec<Slide>> {
    config.validate()?;
    let mut slides = Vec::with_capacity(2 * config.n_slides_per_class);
    for (class_idx, grade) in [GradeLabel::Low, GradeLabel::High].into_iter().enumerate() {
        let texture = match grade {
            GradeLabel::Low => &config.texture_low,
            GradeLabel::High => &config.texture_high,
        };
        for i in 0..config.n_slides_per_class {
            let k = class_idx * config.n_slides_per_class + i;
            let mut rng = rng_for(config.seed, &[TAG_SYNTH_SLIDE, k as u64]);
            let score: u8 = match grade {
                GradeLabel::Low => rng.random_range(6..=7),
                GradeLabel::High => rng.random_range(8..=10),
            };
            let tint = [
                rng.random_range(-6.0..6.0),
                rng.random_range(-6.0..6.0),
                rng.random_range(-6.0..6.0),
            ];
            let density_scale = rng.random_range(0.85..1.15);
            let n_patches = rng.random_range(config.patches_per_slide_min..=config.patches_per_slide_max);
            let cols = (n_patches as f64).sqrt().ceil() as u32;
            let slide_id = format!("S{k:03}");
            let patient_id = format!("P{}{:03}", if class_idx == 0 { 'L' } else { 'H' }, i / 2);
            let mut patches = Vec::with_capacity(n_patches);
            for j in 0..n_patches {
                let mut img = render_patch(config.patch_size, texture, tint, density_scale, &mut rng);
                if domain == Domain::Target {
                    let shift_seed = crate::rng::derive_seed(config.seed, &[TAG_SYNTH_SHIFT, k as u64, j as u64]);
                    img = apply_shift(&img, &config.shift, shift_seed);
                }
                let pos = (j as u32 / cols, j as u32 % cols);
                patches.push(Patch::new(img, pos, slide_id.as_str())?);
            }
            slides.push(Slide::new(slide_id, patient_id, Some(score), patches)?);
        }
    }
    Ok(slides)
}

fn rgb_to_hsv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h, s, max]
}

fn hsv_to_rgb(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

fn blur_plane(plane: &mut [f64], w: usize, h: usize, kernel: &[f64]) {
    let r = (kernel.len() / 2) as i64;
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * plane[y * w + clamp(x as i64 + i as i64 - r, w)])
                .sum();
        }
    }
    for y in 0..h {
        for x in 0..w {
            plane[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[clamp(y as i64 + i as i64 - r, h) * w + x])
                .sum();
        }
    }
}

/// Hue rotation (HSV), brightness scaling, Gaussian blur and additive
/// Gaussian noise, in that order. Intensities are clamped to [0, 255] after
/// every stage; identity stages are skipped.
pub fn apply_shift(pixels: &RgbImage, shift: &DomainShift, seed: u64) -> RgbImage {
    if shift.is_identity() {
        return pixels.clone();
    }
    let (w, h) = (pixels.width() as usize, pixels.height() as usize);
    let mut planes = vec![vec![0.0; w * h]; 3];
    for (i, p) in pixels.pixels().enumerate() {
        for c in 0..3 {
            planes[c][i] = p[c] as f64;
        }
    }
    if shift.hue_rotation != 0.0 {
        for i in 0..w * h {
            let mut hsv = rgb_to_hsv([planes[0][i], planes[1][i], planes[2][i]]);
            hsv[0] += shift.hue_rotation;
            let rgb = hsv_to_rgb(hsv);
            for c in 0..3 {
                planes[c][i] = rgb[c].clamp(0.0, 255.0);
            }
        }
    }
    if shift.brightness_scale != 1.0 {
        for plane in planes.iter_mut() {
            plane.iter_mut().for_each(|v| *v = (*v * shift.brightness_scale).clamp(0.0, 255.0));
        }
    }
    if shift.blur_sigma > 0.0 {
        let kernel = gaussian_kernel(shift.blur_sigma);
        for plane in planes.iter_mut() {
            blur_plane(plane, w, h, &kernel);
        }
    }
    if shift.noise_std > 0.0 {
        let mut rng = rng_for(seed, &[TAG_SYNTH_SHIFT]);
        let normal = Normal::new(0.0, shift.noise_std * 255.0).expect("validated std");
        for i in 0..w * h {
            for plane in planes.iter_mut() {
                plane[i] = (plane[i] + normal.sample(&mut rng)).clamp(0.0, 255.0);
            }
        }
    }
    let mut out = RgbImage::new(w as u32, h as u32);
    for (i, p) in out.pixels_mut().enumerate() {
        *p = Rgb([0, 1, 2].map(|c| planes[c][i].round() as u8));
    }
    out
}


impl crate::config::KeyValueConfig for SynthConfig {
    const KEYS: &'static [&'static str] = &[
        "n_slides_per_class",
        "patches_per_slide_min",
        "patches_per_slide_max",
        "patch_size",
        "low_blob_density",
        "low_radius_min",
        "low_radius_max",
        "high_blob_density",
        "high_radius_min",
        "high_radius_max",
        "hue_rotation",
        "brightness_scale",
        "blur_sigma",
        "noise_std",
        "seed",
    ];

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        use crate::config::parse_value as p;
        match key {
            "n_slides_per_class" => self.n_slides_per_class = p(key, value)?,
            "patches_per_slide_min" => self.patches_per_slide_min = p(key, value)?,
            "patches_per_slide_max" => self.patches_per_slide_max = p(key, value)?,
            "patch_size" => self.patch_size = p(key, value)?,
            "low_blob_density" => self.texture_low.blob_density = p(key, value)?,
            "low_radius_min" => self.texture_low.radius_min = p(key, value)?,
            "low_radius_max" => self.texture_low.radius_max = p(key, value)?,
            "high_blob_density" => self.texture_high.blob_density = p(key, value)?,
            "high_radius_min" => self.texture_high.radius_min = p(key, value)?,
            "high_radius_max" => self.texture_high.radius_max = p(key, value)?,
            "hue_rotation" => self.shift.hue_rotation = p(key, value)?,
            "brightness_scale" => self.shift.brightness_scale = p(key, value)?,
            "blur_sigma" => self.shift.blur_sigma = p(key, value)?,
            "noise_std" => self.shift.noise_std = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        use crate::config::fmt_f64 as f;
        match key {
            "n_slides_per_class" => self.n_slides_per_class.to_string(),
            "patches_per_slide_min" => self.patches_per_slide_min.to_string(),
            "patches_per_slide_max" => self.patches_per_slide_max.to_string(),
            "patch_size" => self.patch_size.to_string(),
            "low_blob_density" => f(self.texture_low.blob_density),
            "low_radius_min" => f(self.texture_low.radius_min),
            "low_radius_max" => f(self.texture_low.radius_max),
            "high_blob_density" => f(self.texture_high.blob_density),
            "high_radius_min" => f(self.texture_high.radius_min),
            "high_radius_max" => f(self.texture_high.radius_max),
            "hue_rotation" => f(self.shift.hue_rotation),
            "brightness_scale" => f(self.shift.brightness_scale),
            "blur_sigma" => f(self.shift.blur_sigma),
            "noise_std" => f(self.shift.noise_std),
            "seed" => self.seed.to_string(),
            _ => String::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        SynthConfig::validate(self)
    }
}
