//! Semantic edges from label maps and the edge-weighted L1 loss.
//!
//! Semantic edges are object boundaries taken from a segmentation label map,
//! not texture edges in the color image. Each object's binary mask is run
//! through Canny and the results are unioned. The loss multiplies the
//! absolute depth error on edge pixels by `alpha`:
//!
//! ```text
//! L = (1/N) * sum_p [ (1 - E(p)) |D(p) - D'(p)| + alpha * E(p) |D(p) - D'(p)| ]
//! ```
//!
//! The whole sum is normalized by `N`, the number of pixels valid in both
//! maps, which matches the plain L1 form and makes `alpha = 1` collapse to it.

mod canny;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use canny::{canny, CannyParams};

use crate::error::{Error, Result};
use crate::types::{check_dims, DepthMap, LabelMap};

/// Default edge weight.
pub const DEFAULT_ALPHA: f64 = 100.0;

/// Per-pixel boundary flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    edge: Vec<bool>,
}

impl EdgeMap {
    pub fn from_raw(width: usize, height: usize, edge: Vec<bool>) -> Self {
        assert_eq!(edge.len(), width * height);
        Self {
            width,
            height,
            edge,
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::from_raw(width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.edge[v * self.width + u]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.edge
    }

    pub fn count(&self) -> usize {
        self.edge.iter().filter(|e| **e).count()
    }

    fn union_with(&mut self, other: &EdgeMap) {
        for (a, b) in self.edge.iter_mut().zip(&other.edge) {
            *a |= *b;
        }
    }

    fn intersect_with(&mut self, other: &EdgeMap) {
        for (a, b) in self.edge.iter_mut().zip(&other.edge) {
            *a &= *b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMethod {
    #[default]
    Canny,
    /// A pixel is an edge iff one of its 8 neighbors carries another label.
    Discontinuity,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeParams {
    pub method: EdgeMethod,
    #[serde(flatten)]
    pub canny: CannyParams,
}

/// Pixels whose 8-neighborhood holds at least two distinct labels.
pub fn label_discontinuities(labels: &LabelMap) -> EdgeMap {
    let (w, h) = labels.dims();
    let mut edge = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            let l = labels.get(u, v);
            'nb: for dv in -1i64..=1 {
                for du in -1i64..=1 {
                    let (nu, nv) = (u as i64 + du, v as i64 + dv);
                    if nu < 0 || nv < 0 || nu >= w as i64 || nv >= h as i64 {
                        continue;
                    }
                    if labels.get(nu as usize, nv as usize) != l {
                        edge[v * w + u] = true;
                        break 'nb;
                    }
                }
            }
        }
    }
    EdgeMap::from_raw(w, h, edge)
}

/// Object boundaries from a label map.
///
/// In Canny mode every distinct id's binary mask is run through [`canny`],
/// the per-object maps are unioned in ascending id order, and the result is
/// restricted to label-discontinuity pixels.
pub fn semantic_edges(labels: &LabelMap, params: &EdgeParams) -> Result<EdgeMap> {
    let (w, h) = labels.dims();
    if w == 0 || h == 0 {
        return Err(Error::InvalidData("label map is empty".into()));
    }
    let discontinuities = label_discontinuities(labels);
    if params.method == EdgeMethod::Discontinuity {
        return Ok(discontinuities);
    }
    params.canny.validate()?;
    let ids = labels.distinct();
    if ids.len() < 2 {
        // Canny still enforces its size precondition on a uniform map.
        let k = 2 * params.canny.kernel_radius() + 1;
        if w < k || h < k {
            return Err(Error::InputTooSmall {
                width: w,
                height: h,
                kernel: k,
            });
        }
        return Ok(EdgeMap::empty(w, h));
    }
    let per_object: Vec<EdgeMap> = ids
        .par_iter()
        .map(|&id| {
            let mask: Vec<f64> = labels
                .labels()
                .iter()
                .map(|&l| if l == id { 1.0 } else { 0.0 })
                .collect();
            canny(&mask, w, h, &params.canny)
        })
        .collect::<Result<_>>()?;
    let mut out = EdgeMap::empty(w, h);
    for e in &per_object {
        out.union_with(e);
    }
    out.intersect_with(&discontinuities);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Plain mean absolute error, meters.
    pub l1: f64,
    /// Edge-weighted loss, meters.
    pub edge_weighted: f64,
    pub alpha: f64,
    pub pixel_count: usize,
    /// Evaluated pixels lying on an edge.
    pub edge_pixel_count: usize,
}

/// Sums of absolute error off and on edges, plus counts.
fn error_sums(
    truth: &DepthMap,
    prediction: &DepthMap,
    edges: Option<&EdgeMap>,
) -> Result<(f64, f64, usize, usize)> {
    truth.check_same_dims(prediction)?;
    if let Some(e) = edges {
        check_dims(truth.dims(), e.dims())?;
    }
    let (mut off, mut on, mut n, mut n_edge) = (0.0, 0.0, 0usize, 0usize);
    for i in 0..truth.len() {
        if !(truth.validity()[i] && prediction.validity()[i]) {
            continue;
        }
        let err = (truth.values()[i] - prediction.values()[i]).abs();
        n += 1;
        if edges.is_some_and(|e| e.edge[i]) {
            on += err;
            n_edge += 1;
        } else {
            off += err;
        }
    }
    if n == 0 {
        return Err(Error::NoOverlap);
    }
    Ok((off, on, n, n_edge))
}

/// Mean absolute error over pixels valid in both maps.
pub fn l1_loss(truth: &DepthMap, prediction: &DepthMap) -> Result<f64> {
    let (off, on, n, _) = error_sums(truth, prediction, None)?;
    Ok((off + on) / n as f64)
}

pub fn edge_weighted_loss(
    truth: &DepthMap,
    prediction: &DepthMap,
    edges: &EdgeMap,
    alpha: f64,
) -> Result<LossReport> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let (off, on, n, n_edge) = error_sums(truth, prediction, Some(edges))?;
    let nf = n as f64;
    Ok(LossReport {
        l1: (off + on) / nf,
        edge_weighted: (off + alpha * on) / nf,
        alpha,
        pixel_count: n,
        edge_pixel_count: n_edge,
    })
}
