//! Heteroscedastic Gaussian noise synthesis on clean Bayer frames.
//!
//! A pixel with clean value `x` on channel `c` receives
//! `ε ~ N(0, s·(k_c·x + σ²_c))`, where the gain scale `s` is drawn once per
//! image, log-uniform in the configured range. Rows draw from their own
//! derived streams, so row-parallel execution is bit-reproducible.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::NoiseProfile;
use crate::error::{Error, Result};
use crate::image::{BayerImage, Channel};
use crate::rng::Rng;

pub const DEFAULT_GAIN_RANGE: (f64, f64) = (0.25, 4.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClampPolicy {
    /// Clamp noisy samples into `[0, 1]`.
    #[default]
    Clamp,
    /// Leave noisy samples unbounded (in-memory analysis only; RAW files
    /// cannot represent values outside `[0, 1]`).
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub profile: NoiseProfile,
    pub gain_range: (f64, f64),
    #[serde(default)]
    pub clamp: ClampPolicy,
    pub seed: u64,
}

impl InjectionConfig {
    pub fn new(profile: NoiseProfile, seed: u64) -> Self {
        Self {
            profile,
            gain_range: DEFAULT_GAIN_RANGE,
            clamp: ClampPolicy::Clamp,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_gain_range(self.gain_range)
    }
}

pub fn validate_gain_range((lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::config(format!("invalid gain-scale range [{lo}, {hi}]")));
    }
    Ok(())
}

pub fn sample_gain_scale(rng: &mut Rng, range: (f64, f64)) -> f64 {
    rng.log_uniform(range.0, range.1)
}

/// Noisy frame together with the gain scale that produced it.
#[derive(Clone, Debug)]
pub struct Injected {
    pub image: BayerImage,
    pub gain_scale: f64,
}

pub fn inject(clean: &BayerImage, cfg: &InjectionConfig, rng: &Rng) -> Result<Injected> {
    cfg.validate()?;
    let s = sample_gain_scale(&mut rng.derive("gain-scale"), cfg.gain_range);
    let image = inject_with_scale(clean, &cfg.profile, s, cfg.clamp, rng)?;
    Ok(Injected { image, gain_scale: s })
}

/// Injection with an explicit gain scale.
pub fn inject_with_scale(
    clean: &BayerImage,
    profile: &NoiseProfile,
    gain_scale: f64,
    clamp: ClampPolicy,
    rng: &Rng,
) -> Result<BayerImage> {
    let mut params = [(0.0, 0.0); 3];
    for ch in Channel::ALL {
        let p = profile.channels.get(ch);
        let (k, s2) = (gain_scale * p.k, gain_scale * p.sigma2);
        // The line is monotone in x, so its extremes on [0, 1] sit at the ends.
        for var in [s2, k + s2] {
            if var < 0.0 || var.is_nan() {
                return Err(Error::NegativeVariance { channel: ch, variance: var });
            }
        }
        params[ch.index()] = (k, s2);
    }

    let w = clean.width();
    let pattern = clean.pattern();
    let rows = rng.derive("rows");
    let mut data = clean.data().to_vec();
    data.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        let mut row_rng = rows.derive_index(r as u64);
        for (c, v) in row.iter_mut().enumerate() {
            let (k, s2) = params[pattern.channel(r, c).index()];
            let x = f64::from(*v);
            let var = (k * x + s2).max(0.0);
            let z: f64 = StandardNormal.sample(&mut row_rng);
            let noisy = (x + var.sqrt() * z) as f32;
            *v = match clamp {
                ClampPolicy::Clamp => noisy.clamp(0.0, 1.0),
                ClampPolicy::None => noisy,
            };
        }
    });
    BayerImage::new(w, clean.height(), pattern, data)
}
