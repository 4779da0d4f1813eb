//! Image containers and color-filter-array patterns.
//!
//! Intensities are `f32` in linear light; quantization to 16 bits happens
//! only in [`crate::rawio`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    pub fn index(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

/// 2x2 Bayer layout, named by the top-left 2x2 block in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CfaPattern {
    #[default]
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl CfaPattern {
    pub const ALL: [CfaPattern; 4] = [
        CfaPattern::Rggb,
        CfaPattern::Bggr,
        CfaPattern::Grbg,
        CfaPattern::Gbrg,
    ];

    /// File-format code.
    pub fn code(self) -> u8 {
        match self {
            CfaPattern::Rggb => 0,
            CfaPattern::Bggr => 1,
            CfaPattern::Grbg => 2,
            CfaPattern::Gbrg => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.code() == code)
    }

    fn layout(self) -> [Channel; 4] {
        use Channel::*;
        match self {
            CfaPattern::Rggb => [R, G, G, B],
            CfaPattern::Bggr => [B, G, G, R],
            CfaPattern::Grbg => [G, R, B, G],
            CfaPattern::Gbrg => [G, B, R, G],
        }
    }

    #[inline]
    pub fn channel(self, row: usize, col: usize) -> Channel {
        self.layout()[(row & 1) * 2 + (col & 1)]
    }
}

impl std::str::FromStr for CfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGGB" => Ok(CfaPattern::Rggb),
            "BGGR" => Ok(CfaPattern::Bggr),
            "GRBG" => Ok(CfaPattern::Grbg),
            "GBRG" => Ok(CfaPattern::Gbrg),
            other => Err(Error::config(format!("unknown CFA pattern {other:?}"))),
        }
    }
}

impl std::fmt::Display for CfaPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CfaPattern::Rggb => "RGGB",
            CfaPattern::Bggr => "BGGR",
            CfaPattern::Grbg => "GRBG",
            CfaPattern::Gbrg => "GBRG",
        };
        f.write_str(s)
    }
}

/// Interleaved linear RGB frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Geometry(format!("empty {width}x{height} frame")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Geometry(format!(
                "{} samples for {width}x{height} RGB",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = std::iter::repeat(rgb)
            .take(width * height)
            .flatten()
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for r in 0..height {
            for c in 0..width {
                data.extend_from_slice(&f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Clamp every sample into `[0, 1]`; NaN becomes 0.
    pub fn clamped(mut self) -> Self {
        for v in &mut self.data {
            *v = clamp_unit(*v);
        }
        self
    }
}

/// Single-plane mosaicked frame.
#[derive(Clone, Debug, PartialEq)]
pub struct BayerImage {
    width: usize,
    height: usize,
    pattern: CfaPattern,
    data: Vec<f32>,
}

impl BayerImage {
    pub fn new(width: usize, height: usize, pattern: CfaPattern, data: Vec<f32>) -> Result<Self> {
        check_even(width, height)?;
        if data.len() != width * height {
            return Err(Error::Geometry(format!(
                "{} samples for {width}x{height} Bayer",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pattern,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, pattern: CfaPattern, value: f32) -> Result<Self> {
        Self::new(width, height, pattern, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        pattern: CfaPattern,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        check_even(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(width, height, pattern, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn channel_at(&self, row: usize, col: usize) -> Result<Channel> {
        if row >= self.height || col >= self.width {
            return Err(Error::OutOfBounds {
                row,
                col,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.pattern.channel(row, col))
    }

    pub fn same_geometry(&self, other: &BayerImage) -> bool {
        self.width == other.width && self.height == other.height && self.pattern == other.pattern
    }
}

fn check_even(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        return Err(Error::Geometry(format!(
            "Bayer frames need positive even dimensions, got {width}x{height}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_lookup() {
        let rggb = BayerImage::filled(4, 4, CfaPattern::Rggb, 0.0).unwrap();
        assert_eq!(rggb.channel_at(0, 0).unwrap(), Channel::R);
        assert_eq!(rggb.channel_at(0, 1).unwrap(), Channel::G);
        let bggr = BayerImage::filled(4, 4, CfaPattern::Bggr, 0.0).unwrap();
        assert_eq!(bggr.channel_at(1, 1).unwrap(), Channel::R);
    }

    #[test]
    fn channel_out_of_bounds() {
        let img = BayerImage::filled(4, 2, CfaPattern::Rggb, 0.0).unwrap();
        assert!(matches!(img.channel_at(2, 0), Err(Error::OutOfBounds { .. })));
        assert!(matches!(img.channel_at(0, 4), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn every_pattern_has_one_r_two_g_one_b() {
        for p in CfaPattern::ALL {
            let mut counts = [0; 3];
            for r in 0..2 {
                for c in 0..2 {
                    counts[p.channel(r, c).index()] += 1;
                }
            }
            assert_eq!(counts, [1, 2, 1], "{p}");
            assert_eq!(CfaPattern::from_code(p.code()), Some(p));
            assert_eq!(p.to_string().parse::<CfaPattern>().unwrap(), p);
        }
    }

    #[test]
    fn channel_depends_only_on_parity() {
        for p in CfaPattern::ALL {
            for r in 0..8 {
                for c in 0..8 {
                    assert_eq!(p.channel(r, c), p.channel(r % 2, c % 2));
                }
            }
        }
    }

    #[test]
    fn odd_bayer_rejected() {
        assert!(BayerImage::filled(3, 4, CfaPattern::Rggb, 0.0).is_err());
        assert!(BayerImage::new(4, 4, CfaPattern::Rggb, vec![0.0; 15]).is_err());
    }

    #[test]
    fn rgb_length_checked() {
        assert!(RgbImage::new(2, 2, vec![0.0; 11]).is_err());
        assert!(RgbImage::new(2, 2, vec![0.0; 12]).is_ok());
    }
}
