//! Depth-map error metrics and reference-table comparison.
//!
//! Every statistic is taken over pixels valid in both maps.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::DepthMap;

/// Sum with pairwise (cascade) summation; fixed order for a given length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    pub rel: f64,
    /// Percent of pixels with `max(p/t, t/p) < 1.25`.
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub pixel_count: usize,
}

fn paired(truth: &DepthMap, prediction: &DepthMap) -> Result<Vec<(f64, f64)>> {
    truth.check_same_dims(prediction)?;
    let pairs: Vec<(f64, f64)> = (0..truth.len())
        .filter(|&i| truth.validity()[i] && prediction.validity()[i])
        .map(|i| (truth.values()[i], prediction.values()[i]))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(pairs)
}

pub fn evaluate(truth: &DepthMap, prediction: &DepthMap) -> Result<MetricsReport> {
    let pairs = paired(truth, prediction)?;
    let n = pairs.len() as f64;
    let abs: Vec<f64> = pairs.iter().map(|(t, p)| (t - p).abs()).collect();
    let sq: Vec<f64> = abs.iter().map(|e| e * e).collect();
    let rel: Vec<f64> = pairs.iter().zip(&abs).map(|((t, _), e)| e / t).collect();
    let ratio: Vec<f64> = pairs.iter().map(|(t, p)| (p / t).max(t / p)).collect();
    let delta = |k: i32| {
        let th = 1.25f64.powi(k);
        100.0 * ratio.iter().filter(|&&r| r < th).count() as f64 / n
    };
    Ok(MetricsReport {
        rmse: (pairwise_sum(&sq) / n).sqrt(),
        mae: pairwise_sum(&abs) / n,
        rel: pairwise_sum(&rel) / n,
        delta1: delta(1),
        delta2: delta(2),
        delta3: delta(3),
        pixel_count: pairs.len(),
    })
}

/// Per-field mean of several reports; `pixel_count` is the total.
pub fn mean_report(reports: &[MetricsReport]) -> Option<MetricsReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| pairwise_sum(&reports.iter().map(f).collect::<Vec<_>>()) / n;
    Some(MetricsReport {
        rmse: avg(|r| r.rmse),
        mae: avg(|r| r.mae),
        rel: avg(|r| r.rel),
        delta1: avg(|r| r.delta1),
        delta2: avg(|r| r.delta2),
        delta3: avg(|r| r.delta3),
        pixel_count: reports.iter().map(|r| r.pixel_count).sum(),
    })
}

/// Sorted absolute errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCdf {
    errors: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub threshold: f64,
    pub fraction: f64,
}

impl ErrorCdf {
    pub fn new(truth: &DepthMap, prediction: &DepthMap) -> Result<Self> {
        let mut errors: Vec<f64> = paired(truth, prediction)?
            .into_iter()
            .map(|(t, p)| (t - p).abs())
            .collect();
        errors.sort_unstable_by(f64::total_cmp);
        Ok(Self { errors })
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    /// Fraction of errors `<= threshold`.
    pub fn fraction_at(&self, threshold: f64) -> f64 {
        let k = self.errors.partition_point(|&e| e <= threshold);
        k as f64 / self.errors.len() as f64
    }

    pub fn evaluate(&self, thresholds: &[f64]) -> Vec<CdfPoint> {
        thresholds
            .iter()
            .map(|&t| CdfPoint {
                threshold: t,
                fraction: self.fraction_at(t),
            })
            .collect()
    }
}

pub fn cdf(truth: &DepthMap, prediction: &DepthMap, thresholds: &[f64]) -> Result<Vec<CdfPoint>> {
    Ok(ErrorCdf::new(truth, prediction)?.evaluate(thresholds))
}

/// `count` evenly spaced thresholds from 0 to `max`, inclusive.
pub fn linear_thresholds(max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![max],
        _ => (0..count).map(|i| max * i as f64 / (count - 1) as f64).collect(),
    }
}

pub fn cdf_csv(points: &[CdfPoint]) -> String {
    let mut s = String::from("threshold,fraction\n");
    for p in points {
        let _ = writeln!(s, "{},{}", p.threshold, p.fraction);
    }
    s
}

/// One row of published results to compare against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub method: String,
    #[serde(default)]
    pub samples: Option<u32>,
    pub mae: f64,
    pub rmse: f64,
    pub rel: f64,
}

/// Parses CSV with header `method,samples,mae,rmse,rel` (`samples` may be empty).
pub fn parse_reference_table(text: &str) -> Result<Vec<ReferenceRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<ReferenceRow>().enumerate() {
        let row = rec.map_err(|e| Error::InvalidData(format!("reference row {}: {e}", i + 1)))?;
        if ![row.mae, row.rmse, row.rel].iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidData(format!("reference row {}: metrics must be non-negative", i + 1)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData("reference table has no rows".into()));
    }
    Ok(rows)
}

pub fn load_reference_table(path: &Path) -> Result<Vec<ReferenceRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_reference_table(&text).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub source: String,
    pub mae: f64,
    pub rmse: f64,
    pub rel: f64,
    /// Measured minus reference MAE for the reference row this is compared to.
    pub mae_diff: Option<f64>,
    pub rmse_diff: Option<f64>,
    pub rel_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Reference rows followed by measured rows. A measured row whose name
/// matches a reference method (case-insensitive) carries differences
/// against it.
pub fn compare_with_reference(reference: &[ReferenceRow], measured: &[(String, MetricsReport)]) -> ComparisonTable {
    let mut rows: Vec<ComparisonRow> = reference
        .iter()
        .map(|r| ComparisonRow {
            method: r.method.clone(),
            source: "reference".into(),
            mae: r.mae,
            rmse: r.rmse,
            rel: r.rel,
            mae_diff: None,
            rmse_diff: None,
            rel_diff: None,
        })
        .collect();
    for (name, m) in measured {
        let matched = reference.iter().find(|r| r.method.eq_ignore_ascii_case(name));
        rows.push(ComparisonRow {
            method: name.clone(),
            source: "measured".into(),
            mae: m.mae,
            rmse: m.rmse,
            rel: m.rel,
            mae_diff: matched.map(|r| m.mae - r.mae),
            rmse_diff: matched.map(|r| m.rmse - r.rmse),
            rel_diff: matched.map(|r| m.rel - r.rel),
        });
    }
    ComparisonTable { rows }
}

impl ComparisonTable {
    /// Fixed-width text rendering.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:<9}  {:>7}  {:>7}  {:>7}  {:>8}  {:>8}  {:>8}",
            "method", "source", "mae", "rmse", "rel", "d_mae", "d_rmse", "d_rel"
        );
        let diff = |d: Option<f64>| d.map_or_else(|| "-".to_string(), |v| format!("{v:+.3}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:<9}  {:>7.3}  {:>7.3}  {:>7.3}  {:>8}  {:>8}  {:>8}",
                r.method,
                r.source,
                r.mae,
                r.rmse,
                r.rel,
                diff(r.mae_diff),
                diff(r.rmse_diff),
                diff(r.rel_diff)
            );
        }
        s
    }
}
