use image::{imageops, Rgb, RgbImage, Rgba, RgbaImage};

use crate::error::{Error, Result};
use crate::ingest::Slide;

use super::stats::SlidePrediction;

/// Smoothing bandwidth in grid cells.
pub const DEFAULT_SIGMA: f64 = 1.0;
/// Value given to grid cells without a patch.
const MISSING_VALUE: f64 = 0.5;
const OVERLAY_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major probabilities; `None` where no patch was kept.
    pub grid: Vec<Option<f64>>,
    pub smoothed: Vec<f64>,
    /// Colormapped overlay at thumbnail size (alpha 0 over missing cells).
    pub overlay: RgbaImage,
    /// Thumbnail with the overlay composited on top.
    pub rendered: RgbaImage,
}

/// Blue at 0, red at 1, linear in between.
pub fn colormap(v: f64) -> Rgb<u8> {
    let v = v.clamp(0.0, 1.0);
    Rgb([(255.0 * v).round() as u8, 0, (255.0 * (1.0 - v)).round() as u8])
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Index of `i` after half-sample symmetric reflection into `0..n`.
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn convolve_axis(data: &[f64], rows: usize, cols: usize, kernel: &[f64], along_rows: bool) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                let off = t as i64 - radius;
                let (rr, cc) = if along_rows {
                    (reflect(r as i64 + off, rows), c)
                } else {
                    (r, reflect(c as i64 + off, cols))
                };
                acc += k * data[rr * cols + cc];
            }
            out[r * cols + c] = acc;
        }
    }
    out
}

/// Mask-normalized Gaussian smoothing with a reflecting boundary.
///
/// Missing cells carry zero weight. On a complete grid the filter matrix is
/// symmetric and doubly stochastic, so constants, the value range and the
/// grid mean are preserved. `sigma = 0` returns the input with missing cells
/// set to 0.5.
pub fn smooth_grid(grid: &[Option<f64>], rows: usize, cols: usize, sigma: f64) -> Result<Vec<f64>> {
    if grid.len() != rows * cols || grid.is_empty() {
        return Err(Error::Shape(format!("grid of {} cells for {rows}x{cols}", grid.len())));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    let filled: Vec<f64> = grid.iter().map(|v| v.unwrap_or(MISSING_VALUE)).collect();
    if sigma == 0.0 {
        return Ok(filled);
    }
    let kernel = gaussian_kernel(sigma);
    let weights: Vec<f64> = grid.iter().map(|v| if v.is_some() { 1.0 } else { 0.0 }).collect();
    let weighted: Vec<f64> = grid.iter().map(|v| v.unwrap_or(0.0)).collect();
    let smooth = |d: &[f64]| {
        let a = convolve_axis(d, rows, cols, &kernel, true);
        convolve_axis(&a, rows, cols, &kernel, false)
    };
    let num = smooth(&weighted);
    let den = smooth(&weights);
    Ok(num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| if d > 1e-12 { (n / d).clamp(0.0, 1.0) } else { MISSING_VALUE })
        .collect())
}

/// Place patch probabilities on their grid, smooth, colormap, upscale to the
/// thumbnail size and composite at half opacity.
pub fn render_heatmap(pred: &SlidePrediction, thumbnail: &RgbImage, sigma: f64) -> Result<Heatmap> {
    if pred.grid_pos.is_empty() {
        return Err(Error::NoPatches(pred.slide_id.clone()));
    }
    if thumbnail.width() == 0 || thumbnail.height() == 0 {
        return Err(Error::InvalidInput("empty thumbnail".into()));
    }
    let rows = pred.grid_pos.iter().map(|p| p.0).max().expect("non-empty") as usize + 1;
    let cols = pred.grid_pos.iter().map(|p| p.1).max().expect("non-empty") as usize + 1;
    let mut grid = vec![None; rows * cols];
    for (&(r, c), &p) in pred.grid_pos.iter().zip(&pred.patch_probs) {
        grid[r as usize * cols + c as usize] = Some(p);
    }
    let smoothed = smooth_grid(&grid, rows, cols, sigma)?;

    let (w, h) = thumbnail.dimensions();
    let mut overlay = RgbaImage::new(w, h);
    let mut rendered = RgbaImage::new(w, h);
    for y in 0..h {
        let r = (y as usize * rows) / h as usize;
        for x in 0..w {
            let c = (x as usize * cols) / w as usize;
            let cell = r * cols + c;
            let base = thumbnail.get_pixel(x, y);
            if grid[cell].is_some() {
                let col = colormap(smoothed[cell]);
                overlay.put_pixel(x, y, Rgba([col[0], col[1], col[2], (255.0 * OVERLAY_ALPHA).round() as u8]));
                let mix = |a: u8, b: u8| (OVERLAY_ALPHA * a as f64 + (1.0 - OVERLAY_ALPHA) * b as f64).round() as u8;
                rendered.put_pixel(x, y, Rgba([mix(col[0], base[0]), mix(col[1], base[1]), mix(col[2], base[2]), 255]));
            } else {
                overlay.put_pixel(x, y, Rgba([0, 0, 0, 0]));
                rendered.put_pixel(x, y, Rgba([base[0], base[1], base[2], 255]));
            }
        }
    }
    Ok(Heatmap {
        rows,
        cols,
        grid,
        smoothed,
        overlay,
        rendered,
    })
}

/// Mosaic of downscaled patches at their grid positions; gaps are white.
pub fn slide_thumbnail(slide: &Slide, cell_px: u32) -> Result<RgbImage> {
    if slide.patches.is_empty() {
        return Err(Error::NoPatches(slide.slide_id.clone()));
    }
    if cell_px == 0 {
        return Err(Error::InvalidInput("thumbnail cell size must be positive".into()));
    }
    let rows = slide.patches.iter().map(|p| p.grid_pos.0).max().expect("non-empty") + 1;
    let cols = slide.patches.iter().map(|p| p.grid_pos.1).max().expect("non-empty") + 1;
    let mut out = RgbImage::from_pixel(cols * cell_px, rows * cell_px, Rgb([255, 255, 255]));
    for p in &slide.patches {
        let small = imageops::resize(&p.pixels, cell_px, cell_px, imageops::FilterType::Triangle);
        imageops::replace(&mut out, &small, (p.grid_pos.1 * cell_px) as i64, (p.grid_pos.0 * cell_px) as i64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(cells: &[((u32, u32), f64)]) -> SlidePrediction {
        SlidePrediction::new("s", cells.iter().map(|c| c.0).collect(), cells.iter().map(|c| c.1).collect()).unwrap()
    }

    #[test]
    fn uniform_one_stays_one_and_renders_red() {
        let cells: Vec<_> = (0..3).flat_map(|r| (0..4).map(move |c| ((r, c), 1.0))).collect();
        let thumb = RgbImage::from_pixel(40, 30, Rgb([255, 255, 255]));
        let h = render_heatmap(&pred(&cells), &thumb, 1.7).unwrap();
        assert!(h.smoothed.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(h.overlay.pixels().all(|p| p.0 == [255, 0, 0, 128]));
        assert_eq!(h.rendered.dimensions(), (40, 30));
    }

    #[test]
    fn zero_sigma_is_identity() {
        let cells = [((0, 0), 0.1), ((0, 1), 0.7), ((1, 0), 0.4), ((1, 1), 0.95)];
        let h = render_heatmap(&pred(&cells), &RgbImage::new(8, 8), 0.0).unwrap();
        assert_eq!(h.smoothed, vec![0.1, 0.7, 0.4, 0.95]);
    }

    #[test]
    fn single_zero_cell_is_blue() {
        let h = render_heatmap(&pred(&[((0, 0), 0.0)]), &RgbImage::new(4, 4), 1.0).unwrap();
        assert!(h.overlay.pixels().all(|p| p.0 == [0, 0, 255, 128]));
    }

    #[test]
    fn missing_cells_are_transparent_and_do_not_pull() {
        let h = render_heatmap(&pred(&[((0, 0), 1.0), ((1, 1), 1.0)]), &RgbImage::new(2, 2), 1.0).unwrap();
        assert_eq!(h.overlay.get_pixel(1, 0).0[3], 0);
        assert!((h.smoothed[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 3)).collect();
        assert_eq!(got, vec![2, 2, 1, 0, 0, 1, 2, 2, 1, 0, 0, 1]);
    }
}
