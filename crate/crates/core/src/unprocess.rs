//! Inverse ISP: maps renderer RGB back to camera-space Bayer RAW.
//!
//! Stage order is tone-inverse, gamma-inverse, CCM-inverse, WB-inverse,
//! clamp, mosaic. The renderer already emits linear light, so the tone and
//! gamma inverses are skipped unless `assume_linear_input` is false.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BayerImage, CfaPattern, RgbImage};
use crate::rng::Rng;

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Upper bound on the ∞-norm condition number of an accepted CCM.
pub const MAX_CCM_CONDITION: f64 = 100.0;
pub const WB_GAIN_RANGE: (f64, f64) = (0.5, 4.0);

/// Synthetic camera-to-sRGB matrices (rows sum to one). These are
/// illustrative fixtures, not measurements of any particular device.
pub const FIXTURE_CCMS: [Mat3; 4] = [
    [[1.78, -0.62, -0.16], [-0.20, 1.55, -0.35], [0.02, -0.55, 1.53]],
    [[1.62, -0.48, -0.14], [-0.28, 1.61, -0.33], [0.05, -0.68, 1.63]],
    [[1.95, -0.81, -0.14], [-0.18, 1.46, -0.28], [-0.02, -0.42, 1.44]],
    [[1.70, -0.55, -0.15], [-0.24, 1.72, -0.48], [0.03, -0.60, 1.57]],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IspParams {
    /// Camera RGB to sRGB primaries.
    pub ccm: Mat3,
    /// `(g_R, g_G, g_B)`; `g_G` is 1.
    pub wb_gains: [f64; 3],
    #[serde(default = "default_true")]
    pub assume_linear_input: bool,
}

fn default_true() -> bool {
    true
}

impl Default for IspParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl IspParams {
    pub fn identity() -> Self {
        Self {
            ccm: IDENTITY,
            wb_gains: [1.0, 1.0, 1.0],
            assume_linear_input: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.ccm.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::config(format!("ccm row {i} sums to {sum}, expected 1")));
            }
        }
        let cond = condition_number(&self.ccm);
        if !(cond < MAX_CCM_CONDITION) {
            return Err(Error::SingularMatrix { condition: cond });
        }
        if (self.wb_gains[1] - 1.0).abs() > 1e-12 {
            return Err(Error::config("green white-balance gain must be 1"));
        }
        for g in self.wb_gains {
            if !(WB_GAIN_RANGE.0..=WB_GAIN_RANGE.1).contains(&g) {
                return Err(Error::config(format!("white-balance gain {g} outside [0.5, 4]")));
            }
        }
        Ok(())
    }
}

/// Randomization of ISP parameters per dataset pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IspRandomization {
    /// Log-uniform range for both `g_R` and `g_B`.
    pub wb_range: (f64, f64),
    /// CCMs mixed by random convex weights.
    pub ccm_basis: Vec<Mat3>,
    pub assume_linear_input: bool,
}

impl Default for IspRandomization {
    fn default() -> Self {
        Self {
            wb_range: (0.6, 2.4),
            ccm_basis: FIXTURE_CCMS.to_vec(),
            assume_linear_input: true,
        }
    }
}

impl IspRandomization {
    pub fn sample(&self, rng: &mut Rng) -> Result<IspParams> {
        if self.ccm_basis.is_empty() {
            return Err(Error::config("empty CCM basis"));
        }
        let weights: Vec<f64> = self
            .ccm_basis
            .iter()
            .map(|_| -(1.0 - rng.next_f64()).ln())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut ccm = [[0.0; 3]; 3];
        for (m, w) in self.ccm_basis.iter().zip(&weights) {
            for i in 0..3 {
                for j in 0..3 {
                    ccm[i][j] += m[i][j] * w / total;
                }
            }
        }
        let (lo, hi) = self.wb_range;
        let params = IspParams {
            ccm,
            wb_gains: [rng.log_uniform(lo, hi), 1.0, rng.log_uniform(lo, hi)],
            assume_linear_input: self.assume_linear_input,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Inverse of `s(x) = 3x² − 2x³` on `[0, 1]`.
pub fn invert_tone_map(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    0.5 - ((1.0 - 2.0 * v).asin() / 3.0).sin()
}

/// sRGB EOTF.
pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB inverse EOTF.
pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn determinant(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn invert3(m: &Mat3) -> Result<Mat3> {
    let det = determinant(m);
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if det.abs() <= 1e-12 * scale.powi(3).max(f64::MIN_POSITIVE) {
        return Err(Error::SingularMatrix {
            condition: f64::INFINITY,
        });
    }
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    Ok(adj.map(|row| row.map(|v| v / det)))
}

fn inf_norm(m: &Mat3) -> f64 {
    m.iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// ∞-norm condition number; infinite for singular matrices.
pub fn condition_number(m: &Mat3) -> f64 {
    match invert3(m) {
        Ok(inv) => inf_norm(m) * inf_norm(&inv),
        Err(_) => f64::INFINITY,
    }
}

#[inline]
pub fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

pub fn invert_ccm(rgb: [f64; 3], ccm: &Mat3) -> Result<[f64; 3]> {
    Ok(mat_vec(&invert3(ccm)?, rgb))
}

pub fn invert_wb(rgb: [f64; 3], gains: [f64; 3]) -> [f64; 3] {
    [rgb[0] / gains[0], rgb[1] / gains[1], rgb[2] / gains[2]]
}

pub fn mosaic(rgb: &RgbImage, pattern: CfaPattern) -> Result<BayerImage> {
    let w = rgb.width();
    BayerImage::from_fn(w, rgb.height(), pattern, |r, c| {
        rgb.data()[(r * w + c) * 3 + pattern.channel(r, c).index()]
    })
}

/// Precomputed inverse chain for repeated per-pixel use.
#[derive(Clone, Debug)]
pub struct Unprocessor {
    ccm_inv: Mat3,
    wb: [f64; 3],
    display_referred: bool,
}

impl Unprocessor {
    pub fn new(params: &IspParams) -> Result<Self> {
        for g in params.wb_gains {
            if !(g > 0.0) {
                return Err(Error::config(format!("white-balance gain {g} must be positive")));
            }
        }
        Ok(Self {
            ccm_inv: invert3(&params.ccm)?,
            wb: params.wb_gains,
            display_referred: !params.assume_linear_input,
        })
    }

    /// Pixel through every inverse stage, before the final clamp.
    #[inline]
    pub fn pixel_unclamped(&self, rgb: [f64; 3]) -> [f64; 3] {
        let lin = if self.display_referred {
            rgb.map(|v| srgb_to_linear(invert_tone_map(v)))
        } else {
            rgb
        };
        invert_wb(mat_vec(&self.ccm_inv, lin), self.wb)
    }

    /// Camera-space RGB, clamped, before mosaicking.
    pub fn camera_rgb(&self, rgb: &RgbImage) -> RgbImage {
        let data: Vec<f32> = rgb
            .data()
            .par_chunks_exact(3)
            .flat_map_iter(|p| {
                self.pixel_unclamped([p[0], p[1], p[2]].map(f64::from))
                    .map(|v| v.clamp(0.0, 1.0) as f32)
            })
            .collect();
        RgbImage::new(rgb.width(), rgb.height(), data).expect("same geometry")
    }
}

pub fn unprocess(rgb: &RgbImage, params: &IspParams, pattern: CfaPattern) -> Result<BayerImage> {
    if rgb.width() % 2 != 0 || rgb.height() % 2 != 0 {
        return Err(Error::Geometry(format!(
            "cannot mosaic odd {}x{} frame",
            rgb.width(),
            rgb.height()
        )));
    }
    let chain = Unprocessor::new(params)?;
    mosaic(&chain.camera_rgb(rgb), pattern)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoothstep(x: f64) -> f64 {
        3.0 * x * x - 2.0 * x * x * x
    }

    #[test]
    fn tone_inverse_values() {
        assert!(invert_tone_map(0.0).abs() < 1e-12);
        assert!((invert_tone_map(1.0) - 1.0).abs() < 1e-12);
        assert!((invert_tone_map(0.5) - 0.5).abs() < 1e-12);
        let v = smoothstep(0.8);
        assert!((v - 0.896).abs() < 1e-12);
        assert!((invert_tone_map(0.896) - 0.8).abs() < 1e-9);
    }

    #[test]
    fn srgb_values() {
        assert_eq!(srgb_to_linear(0.0), 0.0);
        assert!((srgb_to_linear(1.0) - 1.0).abs() < 1e-12);
        let lo = 0.04045f64 / 12.92;
        let hi = ((0.04045f64 + 0.055) / 1.055).powf(2.4);
        assert!((lo - 0.0031308).abs() < 1e-7);
        assert!((hi - lo).abs() < 1e-7);
        // ((0.5 + 0.055) / 1.055)^2.4 evaluated independently
        let direct = (0.555f64 / 1.055).ln() * 2.4;
        assert!((srgb_to_linear(0.5) - direct.exp()).abs() < 1e-12);
        assert!((srgb_to_linear(0.5) - 0.2140).abs() < 1e-4);
    }

    #[test]
    fn scalar_stages_strictly_monotone() {
        let xs: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        for w in xs.windows(2) {
            assert!(invert_tone_map(w[1]) > invert_tone_map(w[0]));
            assert!(srgb_to_linear(w[1]) > srgb_to_linear(w[0]));
        }
    }

    #[test]
    fn ccm_inverse_cases() {
        assert_eq!(invert_ccm([0.3, 0.6, 0.9], &IDENTITY).unwrap(), [0.3, 0.6, 0.9]);
        let diag = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(invert_ccm([1.0, 0.5, 0.25], &diag).unwrap(), [0.5, 0.5, 0.25]);
        let singular = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]];
        assert!(matches!(invert_ccm([1.0; 3], &singular), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn ccm_round_trip_on_random_matrices() {
        let mut rng = Rng::from_seed(11);
        let rand = IspRandomization::default();
        for _ in 0..50 {
            let p = rand.sample(&mut rng).unwrap();
            let px = [rng.next_f64(), rng.next_f64(), rng.next_f64()];
            let back = mat_vec(&p.ccm, invert_ccm(px, &p.ccm).unwrap());
            for i in 0..3 {
                assert!((back[i] - px[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn wb_inverse_cases() {
        assert_eq!(invert_wb([0.2, 0.4, 0.6], [1.0; 3]), [0.2, 0.4, 0.6]);
        assert_eq!(invert_wb([1.0; 3], [2.0, 1.0, 1.0]), [0.5, 1.0, 1.0]);
        let g = [1.7, 1.0, 0.8];
        let px = [0.3, 0.5, 0.7];
        let back = invert_wb(px, g);
        for i in 0..3 {
            assert!((back[i] * g[i] - px[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn mosaic_cases() {
        let gray = RgbImage::filled(4, 4, [0.5; 3]);
        assert!(mosaic(&gray, CfaPattern::Rggb).unwrap().data().iter().all(|&v| v == 0.5));

        let red = RgbImage::filled(4, 4, [0.8, 0.0, 0.0]);
        let m = mosaic(&red, CfaPattern::Rggb).unwrap();
        assert_eq!(m.get(0, 0), 0.8);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.get(1, 1), 0.0);

        assert!(mosaic(&RgbImage::filled(3, 4, [0.0; 3]), CfaPattern::Rggb).is_err());
    }

    #[test]
    fn masked_channel_means_match() {
        let rgb = [0.2f32, 0.45, 0.9];
        for p in CfaPattern::ALL {
            let m = mosaic(&RgbImage::filled(6, 4, rgb), p).unwrap();
            let mut sums = [0.0f64; 3];
            let mut counts = [0usize; 3];
            for r in 0..4 {
                for c in 0..6 {
                    let ch = m.channel_at(r, c).unwrap().index();
                    sums[ch] += f64::from(m.get(r, c));
                    counts[ch] += 1;
                }
            }
            for ch in 0..3 {
                assert!((sums[ch] / counts[ch] as f64 - f64::from(rgb[ch])).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn identity_chain_is_plain_mosaic() {
        let rgb = RgbImage::from_fn(8, 6, |r, c| [r as f32 / 6.0, c as f32 / 8.0, 0.3]);
        let out = unprocess(&rgb, &IspParams::identity(), CfaPattern::Gbrg).unwrap();
        assert_eq!(out, mosaic(&rgb, CfaPattern::Gbrg).unwrap());
    }

    #[test]
    fn output_always_in_unit_range() {
        let rgb = RgbImage::from_fn(8, 8, |r, c| [1.0, (r * c) as f32 / 49.0, 0.0]);
        let params = IspParams {
            ccm: FIXTURE_CCMS[2],
            wb_gains: [0.6, 1.0, 0.6],
            assume_linear_input: false,
        };
        let out = unprocess(&rgb, &params, CfaPattern::Rggb).unwrap();
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn validation_rules() {
        assert!(IspParams::identity().validate().is_ok());
        for m in FIXTURE_CCMS {
            let p = IspParams { ccm: m, ..IspParams::identity() };
            assert!(p.validate().is_ok());
        }
        let bad_gain = IspParams {
            wb_gains: [5.0, 1.0, 1.0],
            ..IspParams::identity()
        };
        assert!(bad_gain.validate().is_err());
        let bad_row = IspParams {
            ccm: [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            ..IspParams::identity()
        };
        assert!(bad_row.validate().is_err());
    }

    #[test]
    fn sampled_gains_in_range() {
        let mut rng = Rng::from_seed(2);
        let rand = IspRandomization::default();
        for _ in 0..500 {
            let p = rand.sample(&mut rng).unwrap();
            assert!((0.6..=2.4).contains(&p.wb_gains[0]));
            assert!((0.6..=2.4).contains(&p.wb_gains[2]));
            assert_eq!(p.wb_gains[1], 1.0);
        }
    }
}
