//! Procedural 2-D textures evaluated in texel coordinates.

use super::{Material, TextureKind};
use crate::rng::mix64;

#[inline]
fn hash2(seed: u64, x: i64, y: i64) -> u64 {
    mix64(seed ^ mix64((x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)))
}

#[inline]
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, u: f64, v: f64) -> f64 {
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (smooth(u - x0), smooth(v - y0));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let c = |dx: i64, dy: i64| unit(hash2(seed, ix + dx, iy + dy));
    let top = c(0, 0) + (c(1, 0) - c(0, 0)) * fx;
    let bottom = c(0, 1) + (c(1, 1) - c(0, 1)) * fx;
    top + (bottom - top) * fy
}

fn fbm(seed: u64, u: f64, v: f64) -> f64 {
    let (mut sum, mut amp, mut freq, mut norm) = (0.0, 1.0, 1.0, 0.0);
    for octave in 0..4u64 {
        sum += amp * value_noise(seed.wrapping_add(octave), u * freq, v * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}

/// Hash of the nearest jittered feature point.
fn voronoi_cell(seed: u64, u: f64, v: f64) -> u64 {
    let (cx, cy) = (u.floor() as i64, v.floor() as i64);
    let mut best = (f64::INFINITY, 0u64);
    for dy in -1..=1 {
        for dx in -1..=1 {
            let h = hash2(seed, cx + dx, cy + dy);
            let px = (cx + dx) as f64 + unit(h);
            let py = (cy + dy) as f64 + unit(mix64(h));
            let d = (px - u).powi(2) + (py - v).powi(2);
            if d < best.0 {
                best = (d, h);
            }
        }
    }
    best.1
}

/// Value noise clusters around 0.5; spread it back over the palette.
fn stretch(t: f64) -> f64 {
    ((t - 0.5) * 2.5 + 0.5).clamp(0.0, 1.0)
}

fn ramp(palette: &[[f64; 3]], t: f64) -> [f64; 3] {
    if palette.len() == 1 {
        return palette[0];
    }
    let x = t.clamp(0.0, 1.0) * (palette.len() - 1) as f64;
    let i = (x.floor() as usize).min(palette.len() - 2);
    let f = x - i as f64;
    let (a, b) = (palette[i], palette[i + 1]);
    [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * f)
}

impl Material {
    /// Albedo at surface coordinates measured in world units.
    pub fn albedo(&self, u: f64, v: f64) -> [f64; 3] {
        let p = &self.palette;
        let (sa, ca) = self.angle_deg.to_radians().sin_cos();
        let (u, v) = ((u * ca - v * sa) * self.spatial_scale, (u * sa + v * ca) * self.spatial_scale);
        let pick = |i: i64| p[i.rem_euclid(p.len() as i64) as usize];
        match self.texture {
            TextureKind::Solid => p[0],
            TextureKind::Checker => pick(u.floor() as i64 + v.floor() as i64),
            TextureKind::Stripes => pick(u.floor() as i64),
            TextureKind::ValueNoise => ramp(p, stretch(value_noise(self.pattern_seed, u, v))),
            TextureKind::MultiOctaveNoise => ramp(p, stretch(fbm(self.pattern_seed, u, v))),
            TextureKind::VoronoiCells => {
                let h = voronoi_cell(self.pattern_seed, u, v);
                p[(h % p.len() as u64) as usize]
            }
            TextureKind::LinearGradient => {
                let t = (u * 0.25).rem_euclid(1.0);
                ramp(p, 1.0 - (2.0 * t - 1.0).abs())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn material(texture: TextureKind) -> Material {
        Material {
            texture,
            palette: vec![[0.1, 0.2, 0.3], [0.9, 0.8, 0.7], [0.5, 0.0, 0.5]],
            spatial_scale: 2.0,
            roughness: 0.5,
            angle_deg: 0.0,
            pattern_seed: 17,
        }
    }

    #[test]
    fn solid_is_constant() {
        let m = material(TextureKind::Solid);
        assert_eq!(m.albedo(0.3, 7.1), m.albedo(-4.0, 2.2));
    }

    #[test]
    fn checker_alternates() {
        let m = material(TextureKind::Checker);
        assert_ne!(m.albedo(0.1, 0.1), m.albedo(0.6, 0.1));
    }

    #[test]
    fn all_kinds_stay_in_palette_hull() {
        for kind in TextureKind::ALL {
            let m = material(kind);
            for i in 0..500 {
                let a = m.albedo(i as f64 * 0.173 - 20.0, i as f64 * 0.311 - 40.0);
                assert!(a.iter().all(|v| (0.0..=0.9).contains(v)), "{kind:?} {a:?}");
            }
        }
    }

    #[test]
    fn noise_is_continuous_and_bounded() {
        for i in 0..1000 {
            let u = i as f64 * 0.0137;
            let a = value_noise(3, u, 0.5);
            let b = value_noise(3, u + 1e-6, 0.5);
            assert!((0.0..=1.0).contains(&a));
            assert!((a - b).abs() < 1e-4);
            assert!((0.0..=1.0).contains(&fbm(3, u, -u)));
        }
    }
}
