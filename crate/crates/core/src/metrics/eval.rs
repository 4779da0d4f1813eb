use std::collections::BTreeMap;
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{format_db, psnr, ssim, Plane, SsimParams};
use crate::error::{Error, Result};
use crate::image::{BayerImage, RgbImage};

/// Capture illuminance levels of the evaluation table, in lux.
pub const LUX_LEVELS: [f64; 4] = [0.5, 1.0, 2.0, 5.0];

#[derive(Clone, Debug, PartialEq)]
pub enum Frame {
    Bayer(BayerImage),
    Rgb(RgbImage),
}

impl Frame {
    pub fn read(path: &std::path::Path) -> Result<Self> {
        Ok(match crate::rawio::read_any(path)?.0 {
            crate::rawio::AnyFrame::Bayer(b) => Frame::Bayer(b),
            crate::rawio::AnyFrame::Rgb(r) => Frame::Rgb(r),
        })
    }

    pub fn plane(&self) -> Plane<'_, f32> {
        match self {
            Frame::Bayer(b) => b.into(),
            Frame::Rgb(r) => r.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalPair {
    pub pair_id: String,
    pub output: Frame,
    pub ground_truth: Frame,
    pub label: String,
    pub lux: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pair_id: String,
    pub label: String,
    pub lux: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LuxRow {
    pub lux: f64,
    pub count: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub label: String,
    /// One cell per entry of [`LUX_LEVELS`].
    pub cells: Vec<Option<LuxRow>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub records: Vec<EvalRecord>,
    /// Ascending lux; only levels that occur.
    pub by_lux: Vec<LuxRow>,
    /// Sorted by label.
    pub by_label: Vec<LabelRow>,
}

fn lux_index(lux: f64) -> Option<usize> {
    LUX_LEVELS.iter().position(|&l| (l - lux).abs() < 1e-9)
}

fn aggregate(lux: f64, recs: &[&EvalRecord]) -> LuxRow {
    let n = recs.len() as f64;
    LuxRow {
        lux,
        count: recs.len(),
        psnr: recs.iter().map(|r| r.psnr).sum::<f64>() / n,
        ssim: recs.iter().map(|r| r.ssim).sum::<f64>() / n,
    }
}

fn group(records: &[&EvalRecord]) -> Vec<Option<LuxRow>> {
    LUX_LEVELS
        .iter()
        .map(|&lux| {
            let sel: Vec<&EvalRecord> = records
                .iter()
                .copied()
                .filter(|r| lux_index(r.lux) == lux_index(lux))
                .collect();
            (!sel.is_empty()).then(|| aggregate(lux, &sel))
        })
        .collect()
}

pub fn evaluate_set(pairs: &[EvalPair], params: &SsimParams) -> Result<EvalTable> {
    if pairs.is_empty() {
        return Err(Error::config("no pairs to evaluate"));
    }
    if let Some(p) = pairs.iter().find(|p| lux_index(p.lux).is_none()) {
        return Err(Error::config(format!(
            "pair {} has lux {}; expected one of {LUX_LEVELS:?}",
            p.pair_id, p.lux
        )));
    }
    let records = pairs
        .par_iter()
        .map(|p| {
            let (out, gt) = (p.output.plane(), p.ground_truth.plane());
            Ok(EvalRecord {
                pair_id: p.pair_id.clone(),
                label: p.label.clone(),
                lux: p.lux,
                psnr: psnr(out, gt, params.peak)?,
                ssim: ssim(out, gt, params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let all: Vec<&EvalRecord> = records.iter().collect();
    let by_lux = group(&all).into_iter().flatten().collect();

    let mut labels: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in &records {
        labels.entry(r.label.as_str()).or_default().push(r);
    }
    let by_label = labels
        .into_iter()
        .map(|(label, recs)| LabelRow {
            label: label.to_string(),
            cells: group(&recs),
        })
        .collect();

    Ok(EvalTable {
        records,
        by_lux,
        by_label,
    })
}

impl EvalTable {
    /// CSV with one row per label (plus an `all` row) and a PSNR/SSIM
    /// column pair per lux level; absent cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for lux in LUX_LEVELS {
            write!(out, ",{lux} lux PSNR,{lux} lux SSIM").unwrap();
        }
        out.push('\n');
        let all_cells: Vec<Option<LuxRow>> = LUX_LEVELS
            .iter()
            .map(|&l| self.by_lux.iter().copied().find(|r| lux_index(r.lux) == lux_index(l)))
            .collect();
        let rows = std::iter::once(("all", &all_cells)).chain(self.by_label.iter().map(|r| (r.label.as_str(), &r.cells)));
        for (label, cells) in rows {
            out.push_str(&csv_field(label));
            for cell in cells {
                match cell {
                    Some(c) => write!(out, ",{},{:.6}", format_db(c.psnr), c.ssim).unwrap(),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::CfaPattern;

    fn bayer(v: f32) -> Frame {
        Frame::Bayer(BayerImage::filled(16, 16, CfaPattern::Rggb, v).unwrap())
    }

    fn pair(id: &str, out: f32, gt: f32, label: &str, lux: f64) -> EvalPair {
        EvalPair {
            pair_id: id.into(),
            output: bayer(out),
            ground_truth: bayer(gt),
            label: label.into(),
            lux,
        }
    }

    #[test]
    fn identical_pair_reports_inf_and_one() {
        let t = evaluate_set(&[pair("a", 0.5, 0.5, "text", 1.0)], &SsimParams::default()).unwrap();
        assert_eq!(t.by_lux.len(), 1);
        assert_eq!(t.by_lux[0].psnr, f64::INFINITY);
        assert_eq!(t.by_lux[0].ssim, 1.0);
        let csv = t.to_csv();
        assert!(csv.lines().nth(1).unwrap().starts_with("all,,,inf,1.000000,,,,"));
    }

    #[test]
    fn grouped_means() {
        // uniform errors 0.1 and 0.5 -> 20 dB and 10*log10(4) dB
        let pairs = [
            pair("a", 0.2, 0.3, "chart", 0.5),
            pair("b", 0.2, 0.7, "text", 0.5),
            pair("c", 0.2, 0.3, "chart", 5.0),
        ];
        let t = evaluate_set(&pairs, &SsimParams::default()).unwrap();
        assert_eq!(t.by_lux.len(), 2);
        assert_eq!(t.by_lux[0].lux, 0.5);
        assert_eq!(t.by_lux[0].count, 2);
        let p20 = t.records[0].psnr;
        let p6 = t.records[1].psnr;
        assert!((p20 - 20.0).abs() < 1e-4);
        assert!((p6 - 6.0206).abs() < 1e-4);
        assert!((t.by_lux[0].psnr - (p20 + p6) / 2.0).abs() < 1e-12);
        assert_eq!(t.by_lux[1].lux, 5.0);
        assert_eq!(t.by_label.len(), 2);
        assert_eq!(t.by_label[0].label, "chart");
        assert!(t.by_label[0].cells[1].is_none());
        assert_eq!(t.to_csv().lines().count(), 4);
    }

    #[test]
    fn errors() {
        assert!(evaluate_set(&[], &SsimParams::default()).is_err());
        assert!(evaluate_set(&[pair("a", 0.1, 0.1, "x", 3.0)], &SsimParams::default()).is_err());
        let mut bad = pair("a", 0.1, 0.1, "x", 1.0);
        bad.output = Frame::Bayer(BayerImage::filled(16, 18, CfaPattern::Rggb, 0.1).unwrap());
        assert!(evaluate_set(&[bad], &SsimParams::default()).is_err());
    }

    #[test]
    fn csv_header_mirrors_lux_columns() {
        let t = evaluate_set(&[pair("a", 0.5, 0.4, "a,b", 2.0)], &SsimParams::default()).unwrap();
        let csv = t.to_csv();
        let header = csv.lines().next().unwrap();
        assert_eq!(
            header,
            "label,0.5 lux PSNR,0.5 lux SSIM,1 lux PSNR,1 lux SSIM,2 lux PSNR,2 lux SSIM,5 lux PSNR,5 lux SSIM"
        );
        assert!(csv.contains("\"a,b\""));
    }
}
