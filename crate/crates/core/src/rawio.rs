//! 16-bit RAW container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                     |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `FSIDRAW1`                          |
//! | 8      | 4    | width (u32)                               |
//! | 12     | 4    | height (u32)                              |
//! | 16     | 1    | pattern code (0..=3 CFA, 255 = RGB)       |
//! | 17     | 1    | bit depth, always 16                      |
//! | 18     | 2    | black level (u16)                         |
//! | 20     | 2    | white level (u16)                         |
//! | 22     | 10   | zero                                      |
//!
//! followed by u16 samples, row-major. RGB files store three full planes
//! (R, then G, then B). A stored sample is
//! `round(intensity * (white - black)) + black`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{clamp_unit, BayerImage, CfaPattern, RgbImage};
use crate::unprocess::{linear_to_srgb, srgb_to_linear};

pub const MAGIC: &[u8; 8] = b"FSIDRAW1";
pub const HEADER_LEN: usize = 32;
pub const RGB_PATTERN_CODE: u8 = 255;
const BIT_DEPTH: u8 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawLevels {
    pub black: u16,
    pub white: u16,
}

impl Default for RawLevels {
    fn default() -> Self {
        Self {
            black: 0,
            white: u16::MAX,
        }
    }
}

impl RawLevels {
    pub fn validate(&self) -> Result<()> {
        if self.white <= self.black {
            return Err(Error::config(format!(
                "white level {} must exceed black level {}",
                self.white, self.black
            )));
        }
        Ok(())
    }

    #[inline]
    fn range(&self) -> f32 {
        f32::from(self.white - self.black)
    }

    #[inline]
    pub fn encode(&self, v: f32) -> u16 {
        (clamp_unit(v) * self.range()).round() as u16 + self.black
    }

    #[inline]
    pub fn decode(&self, s: u16) -> f32 {
        clamp_unit((f32::from(s) - f32::from(self.black)) / self.range())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawHeader {
    pub width: u32,
    pub height: u32,
    /// `None` for three-plane RGB files.
    pub pattern: Option<CfaPattern>,
    pub levels: RawLevels,
}

impl RawHeader {
    fn planes(&self) -> usize {
        if self.pattern.is_some() {
            1
        } else {
            3
        }
    }

    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..8].copy_from_slice(MAGIC);
        h[8..12].copy_from_slice(&self.width.to_le_bytes());
        h[12..16].copy_from_slice(&self.height.to_le_bytes());
        h[16] = self.pattern.map_or(RGB_PATTERN_CODE, CfaPattern::code);
        h[17] = BIT_DEPTH;
        h[18..20].copy_from_slice(&self.levels.black.to_le_bytes());
        h[20..22].copy_from_slice(&self.levels.white.to_le_bytes());
        h
    }

    pub fn parse(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err(format!("{} bytes is shorter than the header", bytes.len()));
        }
        if &bytes[..8] != MAGIC {
            return Err("bad magic".into());
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let u16_at = |i: usize| u16::from_le_bytes(bytes[i..i + 2].try_into().unwrap());
        let pattern = match bytes[16] {
            RGB_PATTERN_CODE => None,
            code => Some(CfaPattern::from_code(code).ok_or(format!("unknown pattern code {code}"))?),
        };
        if bytes[17] != BIT_DEPTH {
            return Err(format!("unsupported bit depth {}", bytes[17]));
        }
        let header = RawHeader {
            width: u32_at(8),
            height: u32_at(12),
            pattern,
            levels: RawLevels {
                black: u16_at(18),
                white: u16_at(20),
            },
        };
        header.levels.validate().map_err(|e| e.to_string())?;
        let expected = HEADER_LEN + header.width as usize * header.height as usize * header.planes() * 2;
        if bytes.len() != expected {
            return Err(format!("expected {expected} bytes, found {}", bytes.len()));
        }
        Ok(header)
    }
}

fn encode_samples(header: RawHeader, samples: impl Iterator<Item = f32>, n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + n * 2);
    out.extend_from_slice(&header.to_bytes());
    for v in samples {
        out.extend_from_slice(&header.levels.encode(v).to_le_bytes());
    }
    out
}

fn decode_samples(header: &RawHeader, bytes: &[u8]) -> Vec<f32> {
    bytes[HEADER_LEN..]
        .chunks_exact(2)
        .map(|b| header.levels.decode(u16::from_le_bytes([b[0], b[1]])))
        .collect()
}

pub fn encode_bayer(img: &BayerImage, levels: RawLevels) -> Vec<u8> {
    let header = RawHeader {
        width: img.width() as u32,
        height: img.height() as u32,
        pattern: Some(img.pattern()),
        levels,
    };
    encode_samples(header, img.data().iter().copied(), img.data().len())
}

pub fn decode_bayer(bytes: &[u8]) -> std::result::Result<(BayerImage, RawHeader), String> {
    let header = RawHeader::parse(bytes)?;
    let pattern = header.pattern.ok_or("file holds RGB planes, not a Bayer mosaic")?;
    let data = decode_samples(&header, bytes);
    let img = BayerImage::new(header.width as usize, header.height as usize, pattern, data)
        .map_err(|e| e.to_string())?;
    Ok((img, header))
}

pub fn encode_rgb(img: &RgbImage, levels: RawLevels) -> Vec<u8> {
    let header = RawHeader {
        width: img.width() as u32,
        height: img.height() as u32,
        pattern: None,
        levels,
    };
    let planar = (0..3).flat_map(|ch| img.data().iter().skip(ch).step_by(3).copied());
    encode_samples(header, planar, img.data().len())
}

pub fn decode_rgb(bytes: &[u8]) -> std::result::Result<(RgbImage, RawHeader), String> {
    let header = RawHeader::parse(bytes)?;
    if header.pattern.is_some() {
        return Err("file holds a Bayer mosaic, not RGB planes".into());
    }
    let planar = decode_samples(&header, bytes);
    let n = header.width as usize * header.height as usize;
    let mut data = vec![0.0; n * 3];
    for (ch, plane) in planar.chunks_exact(n).enumerate() {
        for (i, &v) in plane.iter().enumerate() {
            data[i * 3 + ch] = v;
        }
    }
    let img = RgbImage::new(header.width as usize, header.height as usize, data).map_err(|e| e.to_string())?;
    Ok((img, header))
}

fn format_err(path: &Path, reason: String) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason,
    }
}

pub fn read_bayer(path: &Path) -> Result<(BayerImage, RawHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_bayer(&bytes).map_err(|r| format_err(path, r))
}

pub fn read_rgb(path: &Path) -> Result<(RgbImage, RawHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_rgb(&bytes).map_err(|r| format_err(path, r))
}

/// Either kind of frame, going by the header's pattern code.
pub enum AnyFrame {
    Bayer(BayerImage),
    Rgb(RgbImage),
}

pub fn read_any(path: &Path) -> Result<(AnyFrame, RawHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let header = RawHeader::parse(&bytes).map_err(|r| format_err(path, r))?;
    let frame = if header.pattern.is_some() {
        AnyFrame::Bayer(decode_bayer(&bytes).map_err(|r| format_err(path, r))?.0)
    } else {
        AnyFrame::Rgb(decode_rgb(&bytes).map_err(|r| format_err(path, r))?.0)
    };
    Ok((frame, header))
}

pub fn write_bayer(path: &Path, img: &BayerImage, levels: RawLevels) -> Result<()> {
    write_atomic(path, &encode_bayer(img, levels))
}

pub fn write_rgb(path: &Path, img: &RgbImage, levels: RawLevels) -> Result<()> {
    write_atomic(path, &encode_rgb(img, levels))
}

/// Writes to `<path>.tmp` and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let ctx = || format!("writing {}", path.display());
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(ctx(), e))?;
    f.write_all(bytes).map_err(|e| Error::io(ctx(), e))?;
    f.sync_all().map_err(|e| Error::io(ctx(), e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(ctx(), e))
}

/// 8-bit sRGB-encoded preview. Never read back into the pipeline.
pub fn write_png_preview(path: &Path, img: &RgbImage) -> Result<()> {
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (linear_to_srgb(f64::from(clamp_unit(v))) * 255.0).round() as u8)
        .collect();
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, img.width() as u32, img.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_source_srgb(png::SrgbRenderingIntent::Perceptual);
        let mut w = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        w.write_image_data(&bytes).map_err(|e| Error::Png(e.to_string()))?;
    }
    write_atomic(path, &buf)
}

/// Decodes an 8- or 16-bit PNG and converts it to linear light.
pub fn read_png_linear(path: &Path) -> Result<RgbImage> {
    let file = fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
    let bytes = &buf[..info.buffer_size()];
    let lut: Vec<f32> = (0..256).map(|i| srgb_to_linear(i as f64 / 255.0) as f32).collect();
    let (w, h) = (info.width as usize, info.height as usize);
    let data: Vec<f32> = match info.color_type {
        png::ColorType::Rgb => bytes.iter().map(|&b| lut[b as usize]).collect(),
        png::ColorType::Rgba => bytes
            .chunks_exact(4)
            .flat_map(|p| [lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]])
            .collect(),
        png::ColorType::Grayscale => bytes.iter().flat_map(|&b| [lut[b as usize]; 3]).collect(),
        png::ColorType::GrayscaleAlpha => bytes
            .chunks_exact(2)
            .flat_map(|p| [lut[p[0] as usize]; 3])
            .collect(),
        png::ColorType::Indexed => {
            return Err(Error::Png("palette PNG was not expanded".into()));
        }
    };
    RgbImage::new(w, h, data)
}
