//! Full-reference quality metrics.
//!
//! Metrics run on any [`Plane`]: a Bayer mosaic as one channel, or an RGB
//! frame as three interleaved channels (scores are averaged across
//! channels). Pipeline evaluation defaults to the RAW domain.

mod eval;

pub use eval::{evaluate_set, EvalPair, EvalRecord, EvalTable, Frame, LabelRow, LuxRow, LUX_LEVELS};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BayerImage, RgbImage};

pub trait Sample: Copy + Into<f64> + Send + Sync {}
impl Sample for f32 {}
impl Sample for f64 {}

/// Borrowed view of interleaved samples.
#[derive(Clone, Copy, Debug)]
pub struct Plane<'a, T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: &'a [T],
}

impl<'a, T: Sample> Plane<'a, T> {
    pub fn new(width: usize, height: usize, channels: usize, data: &'a [T]) -> Result<Self> {
        if data.len() != width * height * channels || channels == 0 {
            return Err(Error::Geometry(format!(
                "{} samples for {width}x{height}x{channels} plane",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    #[inline]
    fn at(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[(r * self.width + c) * self.channels + ch].into()
    }
}

impl<'a> From<&'a BayerImage> for Plane<'a, f32> {
    fn from(img: &'a BayerImage) -> Self {
        Plane {
            width: img.width(),
            height: img.height(),
            channels: 1,
            data: img.data(),
        }
    }
}

impl<'a> From<&'a RgbImage> for Plane<'a, f32> {
    fn from(img: &'a RgbImage) -> Self {
        Plane {
            width: img.width(),
            height: img.height(),
            channels: 3,
            data: img.data(),
        }
    }
}

fn check_same<T: Sample>(a: &Plane<'_, T>, b: &Plane<'_, T>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::GeometryMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    Ok(())
}

pub fn mse<T: Sample>(a: Plane<'_, T>, b: Plane<'_, T>) -> Result<f64> {
    check_same(&a, &b)?;
    let sum: f64 = a
        .data
        .par_iter()
        .zip(b.data.par_iter())
        .map(|(&x, &y)| {
            let d = x.into() - y.into();
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// `10·log10(peak² / MSE)`; identical inputs give `f64::INFINITY`.
pub fn psnr<T: Sample>(a: Plane<'_, T>, b: Plane<'_, T>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::config(format!("peak {peak} must be positive")));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// Text form used in reports: `inf` for lossless pairs.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SsimWindow {
    /// Sliding Gaussian window over every fully-contained position.
    Gaussian { size: usize, sigma: f64 },
    /// Non-overlapping uniform blocks.
    Block { size: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: SsimWindow,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: SsimWindow::Gaussian { size: 11, sigma: 1.5 },
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

impl SsimParams {
    pub fn block8() -> Self {
        Self {
            window: SsimWindow::Block { size: 8 },
            ..Self::default()
        }
    }

    fn size(&self) -> usize {
        match self.window {
            SsimWindow::Gaussian { size, .. } | SsimWindow::Block { size } => size,
        }
    }

    fn constants(&self) -> (f64, f64) {
        ((self.k1 * self.peak).powi(2), (self.k2 * self.peak).powi(2))
    }
}

pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

#[inline]
fn ssim_from_moments(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64, c1: f64, c2: f64) -> f64 {
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Separable 1-D "valid" filter along rows then columns of a single channel.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut horiz = vec![0.0; ow * h];
    horiz.par_chunks_mut(ow).enumerate().for_each(|(r, row)| {
        let s = &src[r * w..(r + 1) * w];
        for (c, o) in row.iter_mut().enumerate() {
            *o = k.iter().zip(&s[c..c + n]).map(|(a, b)| a * b).sum();
        }
    });
    let mut out = vec![0.0; ow * oh];
    out.par_chunks_mut(ow).enumerate().for_each(|(r, row)| {
        for (c, o) in row.iter_mut().enumerate() {
            *o = k.iter().enumerate().map(|(i, kv)| kv * horiz[(r + i) * ow + c]).sum();
        }
    });
    (out, ow, oh)
}

fn ssim_channel_gaussian(a: &[f64], b: &[f64], w: usize, h: usize, kernel: &[f64], c1: f64, c2: f64) -> f64 {
    let prod = |f: &dyn Fn(f64, f64) -> f64| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<f64>>();
    let (mu_a, ow, oh) = filter_valid(a, w, h, kernel);
    let (mu_b, ..) = filter_valid(b, w, h, kernel);
    let (aa, ..) = filter_valid(&prod(&|x, _| x * x), w, h, kernel);
    let (bb, ..) = filter_valid(&prod(&|_, y| y * y), w, h, kernel);
    let (ab, ..) = filter_valid(&prod(&|x, y| x * y), w, h, kernel);
    let total: f64 = (0..ow * oh)
        .into_par_iter()
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            ssim_from_moments(ma, mb, aa[i] - ma * ma, bb[i] - mb * mb, ab[i] - ma * mb, c1, c2)
        })
        .sum();
    total / (ow * oh) as f64
}

fn ssim_channel_block(a: &[f64], b: &[f64], w: usize, h: usize, size: usize, c1: f64, c2: f64) -> f64 {
    let (bw, bh) = (w / size, h / size);
    let n = (size * size) as f64;
    let total: f64 = (0..bw * bh)
        .into_par_iter()
        .map(|blk| {
            let (r0, c0) = ((blk / bw) * size, (blk % bw) * size);
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + size {
                for c in c0..c0 + size {
                    let (x, y) = (a[r * w + c], b[r * w + c]);
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            ssim_from_moments(ma, mb, saa / n - ma * ma, sbb / n - mb * mb, sab / n - ma * mb, c1, c2)
        })
        .sum();
    total / (bw * bh) as f64
}

/// Mean SSIM, averaged over channels.
pub fn ssim<T: Sample>(a: Plane<'_, T>, b: Plane<'_, T>, params: &SsimParams) -> Result<f64> {
    check_same(&a, &b)?;
    let size = params.size();
    if size == 0 || a.width < size || a.height < size {
        return Err(Error::Geometry(format!(
            "{}x{} image is smaller than the {size}x{size} SSIM window",
            a.width, a.height
        )));
    }
    let (c1, c2) = params.constants();
    let (w, h) = (a.width, a.height);
    let mut acc = 0.0;
    for ch in 0..a.channels {
        let ca: Vec<f64> = (0..w * h).map(|i| a.at(i / w, i % w, ch)).collect();
        let cb: Vec<f64> = (0..w * h).map(|i| b.at(i / w, i % w, ch)).collect();
        acc += match params.window {
            SsimWindow::Gaussian { size, sigma } => {
                ssim_channel_gaussian(&ca, &cb, w, h, &gaussian_kernel(size, sigma), c1, c2)
            }
            SsimWindow::Block { size } => ssim_channel_block(&ca, &cb, w, h, size, c1, c2),
        };
    }
    Ok(acc / a.channels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn plane(w: usize, h: usize, d: &[f64]) -> Plane<'_, f64> {
        Plane::new(w, h, 1, d).unwrap()
    }

    /// Per-window two-pass evaluation straight from the SSIM definition.
    fn naive_ssim(a: &[f64], b: &[f64], w: usize, h: usize, p: &SsimParams) -> f64 {
        let (c1, c2) = p.constants();
        let (size, weights): (usize, Vec<f64>) = match p.window {
            SsimWindow::Gaussian { size, sigma } => {
                let g = gaussian_kernel(size, sigma);
                (size, (0..size * size).map(|i| g[i / size] * g[i % size]).collect())
            }
            SsimWindow::Block { size } => (size, vec![1.0 / (size * size) as f64; size * size]),
        };
        let step = if matches!(p.window, SsimWindow::Block { .. }) { size } else { 1 };
        let mut sum = 0.0;
        let mut count = 0;
        let mut r0 = 0;
        while r0 + size <= h {
            let mut c0 = 0;
            while c0 + size <= w {
                let idx = |i: usize| (r0 + i / size) * w + c0 + i % size;
                let ma: f64 = (0..size * size).map(|i| weights[i] * a[idx(i)]).sum();
                let mb: f64 = (0..size * size).map(|i| weights[i] * b[idx(i)]).sum();
                let va: f64 = (0..size * size).map(|i| weights[i] * (a[idx(i)] - ma).powi(2)).sum();
                let vb: f64 = (0..size * size).map(|i| weights[i] * (b[idx(i)] - mb).powi(2)).sum();
                let cov: f64 = (0..size * size).map(|i| weights[i] * (a[idx(i)] - ma) * (b[idx(i)] - mb)).sum();
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
                c0 += step;
            }
            r0 += step;
        }
        sum / count as f64
    }

    #[test]
    fn psnr_closed_forms() {
        let a = vec![0.0; 64];
        let b1 = vec![0.1; 64];
        let b5 = vec![0.5; 64];
        assert_eq!(psnr(plane(8, 8, &a), plane(8, 8, &a), 1.0).unwrap(), f64::INFINITY);
        assert!((psnr(plane(8, 8, &a), plane(8, 8, &b1), 1.0).unwrap() - 20.0).abs() < 1e-9);
        let expected = 10.0 * 4f64.log10();
        assert!((expected - 6.0206).abs() < 1e-4);
        assert!((psnr(plane(8, 8, &a), plane(8, 8, &b5), 1.0).unwrap() - expected).abs() < 1e-9);
        assert_eq!(format_db(f64::INFINITY), "inf");
    }

    #[test]
    fn psnr_errors() {
        let a = vec![0.0; 64];
        assert!(psnr(plane(8, 8, &a), plane(4, 16, &a), 1.0).is_err());
        assert!(psnr(plane(8, 8, &a), plane(8, 8, &a), 0.0).is_err());
    }

    #[test]
    fn ssim_self_is_one() {
        let mut rng = Rng::from_seed(1);
        let a: Vec<f64> = (0..32 * 32).map(|_| rng.next_f64()).collect();
        for p in [SsimParams::default(), SsimParams::block8()] {
            assert!((ssim(plane(32, 32, &a), plane(32, 32, &a), &p).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_constant_offset_only_luminance() {
        let a = vec![0.1; 256];
        let b = vec![0.9; 256];
        let s = ssim(plane(16, 16, &a), plane(16, 16, &b), &SsimParams::default()).unwrap();
        let c1 = 0.01f64.powi(2);
        let lum = (2.0 * 0.1 * 0.9 + c1) / (0.01 + 0.81 + c1);
        assert!((s - lum).abs() < 1e-9);
        assert!(s < 1.0);
    }

    #[test]
    fn ssim_matches_naive_oracle() {
        let mut rng = Rng::from_seed(77);
        for _ in 0..3 {
            let a: Vec<f64> = (0..64 * 64).map(|_| rng.next_f64()).collect();
            let b: Vec<f64> = a.iter().map(|v| (v + 0.2 * (rng.next_f64() - 0.5)).clamp(0.0, 1.0)).collect();
            for p in [SsimParams::default(), SsimParams::block8()] {
                let fast = ssim(plane(64, 64, &a), plane(64, 64, &b), &p).unwrap();
                let slow = naive_ssim(&a, &b, 64, 64, &p);
                assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
            }
        }
    }

    #[test]
    fn ssim_window_too_large() {
        let a = vec![0.0; 100];
        assert!(ssim(plane(10, 10, &a), plane(10, 10, &a), &SsimParams::default()).is_err());
        assert!(ssim(plane(10, 10, &a), plane(10, 10, &a), &SsimParams::block8()).is_ok());
    }

    #[test]
    fn rgb_ssim_averages_channels() {
        let a = RgbImage::from_fn(16, 16, |r, c| [r as f32 / 16.0, c as f32 / 16.0, 0.5]);
        let b = RgbImage::from_fn(16, 16, |r, c| [r as f32 / 16.0, c as f32 / 16.0, 0.7]);
        let s = ssim((&a).into(), (&b).into(), &SsimParams::default()).unwrap();
        let c1 = 0.01f64.powi(2);
        let blue = (2.0 * 0.5 * 0.7f32 as f64 + c1) / (0.25 + (0.7f32 as f64).powi(2) + c1);
        assert!((s - (2.0 + blue) / 3.0).abs() < 1e-6);
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(0.0f64..1.0, 16 * 16),
            proptest::collection::vec(0.0f64..1.0, 16 * 16),
        )
    }

    proptest! {
        #[test]
        fn symmetric((a, b) in arb_pair()) {
            let p = SsimParams::default();
            prop_assert_eq!(psnr(plane(16, 16, &a), plane(16, 16, &b), 1.0).unwrap(),
                            psnr(plane(16, 16, &b), plane(16, 16, &a), 1.0).unwrap());
            let s1 = ssim(plane(16, 16, &a), plane(16, 16, &b), &p).unwrap();
            let s2 = ssim(plane(16, 16, &b), plane(16, 16, &a), &p).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-12);
            prop_assert!(s1 <= 1.0 + 1e-12);
        }

        #[test]
        fn psnr_decreases_with_error(d1 in 0.001f64..0.3, extra in 0.001f64..0.3) {
            let a = vec![0.2; 64];
            let b1: Vec<f64> = a.iter().map(|v| v + d1).collect();
            let b2: Vec<f64> = a.iter().map(|v| v + d1 + extra).collect();
            prop_assert!(psnr(plane(8, 8, &a), plane(8, 8, &b1), 1.0).unwrap()
                       > psnr(plane(8, 8, &a), plane(8, 8, &b2), 1.0).unwrap());
        }

        #[test]
        fn ssim_block_aligned_shift_invariant(
            a in proptest::collection::vec(0.0f64..1.0, 32 * 32),
            b in proptest::collection::vec(0.0f64..1.0, 32 * 32),
            by in 0usize..4,
            bx in 0usize..4,
        ) {
            // Rolling both images together by whole blocks permutes the set
            // of 8x8 windows without changing any of them.
            let (dy, dx) = (by * 8, bx * 8);
            let roll = |src: &[f64]| {
                let mut out = vec![0.0; 32 * 32];
                for r in 0..32 {
                    for c in 0..32 {
                        out[((r + dy) % 32) * 32 + (c + dx) % 32] = src[r * 32 + c];
                    }
                }
                out
            };
            let (ra, rb) = (roll(&a), roll(&b));
            let p = SsimParams::block8();
            let s0 = ssim(plane(32, 32, &a), plane(32, 32, &b), &p).unwrap();
            let s1 = ssim(plane(32, 32, &ra), plane(32, 32, &rb), &p).unwrap();
            prop_assert!((s0 - s1).abs() < 1e-12);
        }
    }
}
