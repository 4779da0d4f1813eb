//! Texture and color diversity statistics for rendered batches.
//!
//! The edge ratio is the fraction of pixels whose Sobel gradient magnitude
//! on Rec.709 luma exceeds a threshold. Kernels are normalized by 1/8 so a
//! unit-slope ramp has magnitude 1; a unit step therefore responds with 0.5
//! on the two pixels straddling it. Borders use mirror padding without edge
//! repetition (`x[-1] = x[1]`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;

pub const DEFAULT_THRESHOLD: f64 = 0.1;
pub const DEFAULT_BAND: (f64, f64) = (0.08, 0.45);
const LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];
const HIST_BINS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub edge_ratios: Vec<f64>,
    pub color_entropies: Vec<f64>,
    pub mean_edge_ratio: f64,
    pub std_edge_ratio: f64,
    pub mean_color_entropy: f64,
    pub threshold: f64,
    pub band: (f64, f64),
    pub accepted: bool,
}

pub fn luma(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| LUMA[0] * f64::from(p[0]) + LUMA[1] * f64::from(p[1]) + LUMA[2] * f64::from(p[2]))
        .collect()
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

/// Per-pixel normalized Sobel magnitude on luma.
pub fn sobel_magnitude(img: &RgbImage) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let y = luma(img);
    let at = |r: isize, c: isize| y[reflect(r, h) * w + reflect(c, w)];
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        let r = r as isize;
        for (c, o) in row.iter_mut().enumerate() {
            let c = c as isize;
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            *o = (gx * gx + gy * gy).sqrt() / 8.0;
        }
    });
    out
}

pub fn edge_ratio(img: &RgbImage, threshold: f64) -> f64 {
    let mags = sobel_magnitude(img);
    mags.iter().filter(|&&m| m > threshold).count() as f64 / mags.len() as f64
}

/// Shannon entropy (bits) of the 8×8×8 joint RGB histogram.
pub fn color_entropy(img: &RgbImage) -> f64 {
    let mut hist = [0usize; HIST_BINS * HIST_BINS * HIST_BINS];
    let bin = |v: f32| ((f64::from(v).clamp(0.0, 1.0) * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
    for p in img.pixels() {
        hist[(bin(p[0]) * HIST_BINS + bin(p[1])) * HIST_BINS + bin(p[2])] += 1;
    }
    let n = (img.width() * img.height()) as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

pub fn validate_batch(imgs: &[RgbImage], band: (f64, f64), threshold: f64) -> Result<DiversityReport> {
    if imgs.is_empty() {
        return Err(Error::config("empty image batch"));
    }
    if !(band.0 < band.1) {
        return Err(Error::config(format!("invalid band [{}, {}]", band.0, band.1)));
    }
    if !(threshold > 0.0) {
        return Err(Error::config(format!("threshold {threshold} must be positive")));
    }
    let (edge_ratios, color_entropies): (Vec<f64>, Vec<f64>) = imgs
        .par_iter()
        .map(|img| (edge_ratio(img, threshold), color_entropy(img)))
        .unzip();
    let n = imgs.len() as f64;
    let mean = edge_ratios.iter().sum::<f64>() / n;
    let std = (edge_ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mean_entropy = color_entropies.iter().sum::<f64>() / n;
    Ok(DiversityReport {
        accepted: mean >= band.0 && mean <= band.1,
        edge_ratios,
        color_entropies,
        mean_edge_ratio: mean,
        std_edge_ratio: std,
        mean_color_entropy: mean_entropy,
        threshold,
        band,
    })
}
