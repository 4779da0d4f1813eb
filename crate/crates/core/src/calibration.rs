//! Noise-profile calibration from burst stacks.
//!
//! Each pixel site's temporal mean `x*` and unbiased temporal variance are
//! collected per Bayer channel; the cloud is reduced to 64 equal-width
//! intensity bins and a straight line `var = k·x* + σ²` is fit by ordinary
//! least squares over the bin aggregates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BayerImage, CfaPattern, Channel};

pub const BIN_COUNT: usize = 64;
pub const MIN_BINS: usize = 10;
pub const MIN_BIN_SAMPLES: usize = 100;
/// Sites whose temporal mean lies within this distance of black (0) or
/// white (1) are dropped to avoid clipping bias.
pub const CLIP_MARGIN: f64 = 0.02;
pub const PROFILE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub k: f64,
    pub sigma2: f64,
}

impl ChannelParams {
    pub const ZERO: ChannelParams = ChannelParams { k: 0.0, sigma2: 0.0 };

    #[inline]
    pub fn variance(&self, x: f64) -> f64 {
        self.k * x + self.sigma2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelDiagnostics {
    pub r2: f64,
    /// Pixel sites that survived clipping exclusion.
    pub samples: usize,
    pub residual_rms: f64,
    /// Bins that met the occupancy threshold and entered the fit.
    pub bins: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerChannel<T> {
    #[serde(rename = "R")]
    pub r: T,
    #[serde(rename = "G")]
    pub g: T,
    #[serde(rename = "B")]
    pub b: T,
}

impl<T> PerChannel<T> {
    pub fn splat(v: T) -> Self
    where
        T: Clone,
    {
        Self {
            r: v.clone(),
            g: v.clone(),
            b: v,
        }
    }

    pub fn get(&self, ch: Channel) -> &T {
        match ch {
            Channel::R => &self.r,
            Channel::G => &self.g,
            Channel::B => &self.b,
        }
    }

    pub fn get_mut(&mut self, ch: Channel) -> &mut T {
        match ch {
            Channel::R => &mut self.r,
            Channel::G => &mut self.g,
            Channel::B => &mut self.b,
        }
    }

    pub fn try_map<U, E>(self, mut f: impl FnMut(Channel, T) -> Result<U, E>) -> Result<PerChannel<U>, E> {
        Ok(PerChannel {
            r: f(Channel::R, self.r)?,
            g: f(Channel::G, self.g)?,
            b: f(Channel::B, self.b)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub camera: String,
    pub gain: String,
    pub channels: PerChannel<ChannelParams>,
    #[serde(default)]
    pub diagnostics: Option<PerChannel<ChannelDiagnostics>>,
    pub normalization: String,
    #[serde(rename = "format-version")]
    pub format_version: u32,
}

impl NoiseProfile {
    /// Same `(k, σ²)` on every channel, without fit diagnostics.
    pub fn uniform(camera: &str, gain: &str, k: f64, sigma2: f64) -> Self {
        Self {
            camera: camera.into(),
            gain: gain.into(),
            channels: PerChannel::splat(ChannelParams { k, sigma2 }),
            diagnostics: None,
            normalization: "0-1".into(),
            format_version: PROFILE_FORMAT_VERSION,
        }
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.camera, self.gain)
    }

    pub fn is_zero(&self) -> bool {
        Channel::ALL
            .iter()
            .all(|&c| *self.channels.get(c) == ChannelParams::ZERO)
    }

    pub fn validate(&self) -> Result<()> {
        if self.normalization != "0-1" {
            return Err(Error::config(format!(
                "unsupported profile normalization {:?}",
                self.normalization
            )));
        }
        for ch in Channel::ALL {
            let p = self.channels.get(ch);
            if !(p.k >= 0.0 && p.sigma2 >= 0.0 && p.k.is_finite() && p.sigma2.is_finite()) {
                return Err(Error::config(format!(
                    "channel {ch:?} has invalid k={} sigma2={}",
                    p.k, p.sigma2
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: NoiseProfile = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}

/// Frames of a static scene captured at one camera/gain setting.
#[derive(Clone, Debug)]
pub struct BurstStack {
    pub frames: Vec<BayerImage>,
    pub camera: String,
    pub gain: String,
}

impl BurstStack {
    pub fn new(frames: Vec<BayerImage>, camera: &str, gain: &str) -> Result<Self> {
        if let Some(first) = frames.first() {
            if let Some(bad) = frames.iter().find(|f| !f.same_geometry(first)) {
                return Err(geometry_mismatch(first, bad));
            }
        }
        Ok(Self {
            frames,
            camera: camera.into(),
            gain: gain.into(),
        })
    }
}

fn geometry_mismatch(a: &BayerImage, b: &BayerImage) -> Error {
    Error::GeometryMismatch {
        left: (a.width(), a.height(), a.pattern().code() as usize),
        right: (b.width(), b.height(), b.pattern().code() as usize),
    }
}

/// `(temporal mean, temporal variance)` per surviving pixel site.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeanVarianceSamples {
    pub points: PerChannel<Vec<(f64, f64)>>,
}

impl Default for PerChannel<Vec<(f64, f64)>> {
    fn default() -> Self {
        Self {
            r: Vec::new(),
            g: Vec::new(),
            b: Vec::new(),
        }
    }
}

/// Streaming per-pixel Welford accumulator, so thousand-frame bursts never
/// need to be resident at once.
#[derive(Clone, Debug)]
pub struct BurstAccumulator {
    width: usize,
    height: usize,
    pattern: CfaPattern,
    frames: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl BurstAccumulator {
    pub fn new(width: usize, height: usize, pattern: CfaPattern) -> Self {
        Self {
            width,
            height,
            pattern,
            frames: 0,
            mean: vec![0.0; width * height],
            m2: vec![0.0; width * height],
        }
    }

    pub fn for_frame(frame: &BayerImage) -> Self {
        Self::new(frame.width(), frame.height(), frame.pattern())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn push(&mut self, frame: &BayerImage) -> Result<()> {
        if frame.width() != self.width || frame.height() != self.height || frame.pattern() != self.pattern {
            return Err(Error::GeometryMismatch {
                left: (self.width, self.height, self.pattern.code() as usize),
                right: (frame.width(), frame.height(), frame.pattern().code() as usize),
            });
        }
        self.frames += 1;
        let n = self.frames as f64;
        let w = self.width;
        self.mean
            .par_chunks_mut(w)
            .zip(self.m2.par_chunks_mut(w))
            .zip(frame.data().par_chunks(w))
            .for_each(|((mean, m2), row)| {
                for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
                    let x = f64::from(x);
                    let d = x - *m;
                    *m += d / n;
                    *s += d * (x - *m);
                }
            });
        Ok(())
    }

    pub fn samples(&self) -> Result<MeanVarianceSamples> {
        if self.frames < 2 {
            return Err(Error::config(format!(
                "need at least 2 frames for temporal variance, have {}",
                self.frames
            )));
        }
        let denom = (self.frames - 1) as f64;
        let mut out = MeanVarianceSamples::default();
        for r in 0..self.height {
            for c in 0..self.width {
                let i = r * self.width + c;
                let mean = self.mean[i];
                if !(CLIP_MARGIN..=1.0 - CLIP_MARGIN).contains(&mean) {
                    continue;
                }
                out.points
                    .get_mut(self.pattern.channel(r, c))
                    .push((mean, self.m2[i] / denom));
            }
        }
        Ok(out)
    }
}

pub fn mean_variance_samples(stack: &BurstStack) -> Result<MeanVarianceSamples> {
    let first = stack
        .frames
        .first()
        .ok_or_else(|| Error::config("empty burst stack"))?;
    let mut acc = BurstAccumulator::for_frame(first);
    for f in &stack.frames {
        acc.push(f)?;
    }
    acc.samples()
}

#[derive(Clone, Copy, Default)]
struct Bin {
    n: usize,
    sum_x: f64,
    sum_v: f64,
}

fn fit_channel(channel: Channel, points: &[(f64, f64)]) -> Result<(ChannelParams, ChannelDiagnostics)> {
    let mut bins = [Bin::default(); BIN_COUNT];
    for &(x, v) in points {
        let b = ((x * BIN_COUNT as f64) as usize).min(BIN_COUNT - 1);
        bins[b].n += 1;
        bins[b].sum_x += x;
        bins[b].sum_v += v;
    }
    let usable: Vec<(f64, f64)> = bins
        .iter()
        .filter(|b| b.n >= MIN_BIN_SAMPLES)
        .map(|b| (b.sum_x / b.n as f64, b.sum_v / b.n as f64))
        .collect();
    if usable.len() < MIN_BINS {
        return Err(Error::InsufficientBins {
            channel,
            usable: usable.len(),
            required: MIN_BINS,
            occupancy: bins.iter().map(|b| b.n).collect(),
        });
    }

    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxv: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - mv)).sum();
    let svv: f64 = usable.iter().map(|p| (p.1 - mv).powi(2)).sum();
    let (mut k, mut sigma2) = if sxx > 0.0 {
        let k = sxv / sxx;
        (k, mv - k * mx)
    } else {
        (0.0, mv)
    };

    let sse: f64 = usable.iter().map(|p| (p.1 - (k * p.0 + sigma2)).powi(2)).sum();
    let r2 = if svv > 0.0 { 1.0 - sse / svv } else if sse == 0.0 { 1.0 } else { 0.0 };

    if k < 0.0 {
        log::warn!("channel {channel:?}: regression slope {k} < 0, clamped to 0");
        k = 0.0;
    }
    if sigma2 < 0.0 {
        log::warn!("channel {channel:?}: regression intercept {sigma2} < 0, clamped to 0");
        sigma2 = 0.0;
    }

    Ok((
        ChannelParams { k, sigma2 },
        ChannelDiagnostics {
            r2,
            samples: points.len(),
            residual_rms: (sse / n).sqrt(),
            bins: usable.len(),
        },
    ))
}

pub fn fit_noise_profile(samples: &MeanVarianceSamples, camera: &str, gain: &str) -> Result<NoiseProfile> {
    let fitted = samples
        .points
        .clone()
        .try_map(|ch, pts| fit_channel(ch, &pts))?;
    Ok(NoiseProfile {
        camera: camera.into(),
        gain: gain.into(),
        channels: PerChannel {
            r: fitted.r.0,
            g: fitted.g.0,
            b: fitted.b.0,
        },
        diagnostics: Some(PerChannel {
            r: fitted.r.1,
            g: fitted.g.1,
            b: fitted.b.1,
        }),
        normalization: "0-1".into(),
        format_version: PROFILE_FORMAT_VERSION,
    })
}

pub fn calibrate(stack: &BurstStack) -> Result<NoiseProfile> {
    fit_noise_profile(&mean_variance_samples(stack)?, &stack.camera, &stack.gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line_samples(k: f64, s2: f64, per_channel: usize) -> MeanVarianceSamples {
        let pts: Vec<(f64, f64)> = (0..per_channel)
            .map(|i| {
                let x = 0.05 + 0.9 * i as f64 / per_channel as f64;
                (x, k * x + s2)
            })
            .collect();
        MeanVarianceSamples {
            points: PerChannel::splat(pts),
        }
    }

    #[test]
    fn identical_frames_have_zero_variance() {
        let f = BayerImage::from_fn(8, 8, CfaPattern::Rggb, |r, c| 0.1 + 0.01 * (r * 8 + c) as f32).unwrap();
        let stack = BurstStack::new(vec![f.clone(), f.clone(), f], "cam", "iso").unwrap();
        let s = mean_variance_samples(&stack).unwrap();
        for ch in Channel::ALL {
            assert!(!s.points.get(ch).is_empty());
            assert!(s.points.get(ch).iter().all(|&(_, v)| v == 0.0));
        }
    }

    #[test]
    fn two_frame_hand_arithmetic() {
        let a = BayerImage::filled(2, 2, CfaPattern::Rggb, 0.4).unwrap();
        let b = BayerImage::filled(2, 2, CfaPattern::Rggb, 0.6).unwrap();
        let s = mean_variance_samples(&BurstStack::new(vec![a, b], "c", "g").unwrap()).unwrap();
        let (m, v) = s.points.r[0];
        assert!((m - 0.5).abs() < 1e-7);
        assert!((v - 0.02).abs() < 1e-7);
        assert_eq!(s.points.g.len(), 2);
    }

    #[test]
    fn single_frame_rejected() {
        let a = BayerImage::filled(2, 2, CfaPattern::Rggb, 0.4).unwrap();
        assert!(mean_variance_samples(&BurstStack::new(vec![a], "c", "g").unwrap()).is_err());
    }

    #[test]
    fn mismatched_frames_rejected() {
        let a = BayerImage::filled(2, 2, CfaPattern::Rggb, 0.4).unwrap();
        let b = BayerImage::filled(4, 2, CfaPattern::Rggb, 0.4).unwrap();
        let c = BayerImage::filled(2, 2, CfaPattern::Bggr, 0.4).unwrap();
        assert!(matches!(
            BurstStack::new(vec![a.clone(), b], "c", "g"),
            Err(Error::GeometryMismatch { .. })
        ));
        assert!(BurstStack::new(vec![a, c], "c", "g").is_err());
    }

    #[test]
    fn clipped_sites_excluded_unclipped_ramp_kept() {
        let ramp = BayerImage::from_fn(100, 2, CfaPattern::Rggb, |_, c| 0.05 + 0.9 * c as f32 / 99.0).unwrap();
        let s = mean_variance_samples(&BurstStack::new(vec![ramp.clone(), ramp], "c", "g").unwrap()).unwrap();
        let total = s.points.r.len() + s.points.g.len() + s.points.b.len();
        assert_eq!(total, 200);

        let edges = BayerImage::from_fn(4, 2, CfaPattern::Rggb, |_, c| [0.0, 0.01, 0.5, 0.99][c]).unwrap();
        let s = mean_variance_samples(&BurstStack::new(vec![edges.clone(), edges], "c", "g").unwrap()).unwrap();
        let total = s.points.r.len() + s.points.g.len() + s.points.b.len();
        assert_eq!(total, 2);
    }

    #[test]
    fn exact_line_recovered() {
        let p = fit_noise_profile(&line_samples(0.02, 0.001, 20_000), "c", "g").unwrap();
        for ch in Channel::ALL {
            let c = p.channels.get(ch);
            assert!((c.k - 0.02).abs() < 1e-9, "{c:?}");
            assert!((c.sigma2 - 0.001).abs() < 1e-9, "{c:?}");
            let d = p.diagnostics.unwrap();
            assert!(d.get(ch).r2 > 0.999_999);
        }
    }

    #[test]
    fn zero_variance_fits_zero() {
        let p = fit_noise_profile(&line_samples(0.0, 0.0, 20_000), "c", "g").unwrap();
        assert_eq!(p.channels.r, ChannelParams::ZERO);
        assert!(p.is_zero());
    }

    #[test]
    fn insufficient_bins_reports_occupancy() {
        // every sample in a single bin
        let pts = vec![(0.5, 0.01); 5000];
        let s = MeanVarianceSamples {
            points: PerChannel::splat(pts),
        };
        match fit_noise_profile(&s, "c", "g") {
            Err(Error::InsufficientBins { occupancy, usable, .. }) => {
                assert_eq!(usable, 1);
                assert_eq!(occupancy.len(), BIN_COUNT);
                assert_eq!(occupancy[32], 5000);
            }
            other => panic!("expected InsufficientBins, got {other:?}"),
        }
    }

    #[test]
    fn negative_intercept_clamped() {
        let p = fit_noise_profile(&line_samples(0.01, -0.002, 20_000), "c", "g").unwrap();
        assert_eq!(p.channels.g.sigma2, 0.0);
        assert!((p.channels.g.k - 0.01).abs() < 1e-9);
    }

    #[test]
    fn profile_json_schema() {
        let p = fit_noise_profile(&line_samples(0.02, 0.001, 20_000), "pixel6", "iso1600").unwrap();
        let v: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        assert_eq!(v["camera"], "pixel6");
        assert_eq!(v["gain"], "iso1600");
        assert_eq!(v["normalization"], "0-1");
        assert_eq!(v["format-version"], 1);
        assert!(v["channels"]["R"]["k"].is_number());
        assert!(v["channels"]["B"]["sigma2"].is_number());
        assert!(v["diagnostics"]["G"]["r2"].is_number());
        let back = NoiseProfile::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn invalid_profile_rejected() {
        let mut p = NoiseProfile::uniform("c", "g", 0.01, 0.0);
        p.channels.b.k = -1.0;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn scale_consistency(k in 0.001f64..0.05, s2 in 0.0f64..0.002, g in 0.3f64..1.0) {
            let base = line_samples(k, s2, 20_000);
            let scaled = MeanVarianceSamples {
                points: PerChannel::splat(
                    base.points.r.iter().map(|&(x, v)| (x * g, v * g * g)).collect(),
                ),
            };
            let p0 = fit_noise_profile(&base, "c", "g").unwrap();
            let p1 = fit_noise_profile(&scaled, "c", "g").unwrap();
            prop_assert!((p1.channels.r.k - g * p0.channels.r.k).abs() < 1e-9);
            prop_assert!((p1.channels.r.sigma2 - g * g * p0.channels.r.sigma2).abs() < 1e-9);
        }
    }
}
