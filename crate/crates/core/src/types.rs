//! Image-grid value types shared by every stage.
//!
//! Pixel centers sit at integer coordinates: pixel `(u, v)` is column `u`,
//! row `v`, and its ray passes through `(u, v)` on the image plane.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Camera-frame position in meters, `z` along the optical axis.
pub type Point3 = nalgebra::Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub u: u32,
    pub v: u32,
}

impl Pixel {
    pub fn new(u: u32, v: u32) -> Self {
        Self { u, v }
    }
}

/// Dense depth grid with an explicit validity mask.
///
/// Invalid pixels store `0.0` in `values` but are never read as depths.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a map from values and a mask. Valid pixels must hold a finite
    /// positive depth.
    pub fn new(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if values.len() != n || valid.len() != n {
            return Err(Error::InvalidData(format!(
                "depth map {width}x{height} needs {n} entries, got {} values and {} mask bits",
                values.len(),
                valid.len()
            )));
        }
        let mut values = values;
        for (i, (d, ok)) in values.iter_mut().zip(&valid).enumerate() {
            if *ok {
                if !(d.is_finite() && *d > 0.0) {
                    return Err(Error::InvalidData(format!(
                        "valid pixel ({}, {}) has depth {d}",
                        i % width,
                        i / width
                    )));
                }
            } else {
                *d = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    /// Map where every positive finite value is valid and everything else is a hole.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Self::new(width, height, values, valid)
    }

    /// Map with every pixel invalid.
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::from_values(width, height, vec![depth; width * height])
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    pub fn in_bounds(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && (u as usize) < self.width && (v as usize) < self.height
    }

    /// Depth at `(u, v)`, or `None` for holes and out-of-range pixels.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let i = self.index(u, v);
        self.valid[i].then(|| self.values[i])
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        u < self.width && v < self.height && self.valid[self.index(u, v)]
    }

    /// Sets a pixel's depth. Non-positive or non-finite depths mark it invalid.
    pub fn set(&mut self, u: usize, v: usize, depth: f64) {
        let i = self.index(u, v);
        if depth.is_finite() && depth > 0.0 {
            self.values[i] = depth;
            self.valid[i] = true;
        } else {
            self.values[i] = 0.0;
            self.valid[i] = false;
        }
    }

    pub fn invalidate(&mut self, u: usize, v: usize) {
        let i = self.index(u, v);
        self.values[i] = 0.0;
        self.valid[i] = false;
    }

    /// Raw row-major values; holes read as `0.0`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Valid pixels in row-major order.
    pub fn valid_pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        self.valid.iter().enumerate().filter(|(_, ok)| **ok).map(move |(i, _)| {
            Pixel::new((i % self.width) as u32, (i / self.width) as u32)
        })
    }

    pub fn check_same_dims(&self, other: &DepthMap) -> Result<()> {
        check_dims(self.dims(), other.dims())
    }
}

pub(crate) fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Per-pixel object ids; `0` means unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::InvalidData(format!(
                "label map {width}x{height} needs {} entries, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn uniform(width: usize, height: usize, label: u32) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width * height],
        }
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

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u32 {
        self.labels[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, label: u32) {
        self.labels[v * self.width + u] = label;
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Distinct ids in ascending order, including `0` when present.
    pub fn distinct(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub u: u32,
    pub v: u32,
    pub depth: f64,
}

impl Sample {
    pub fn pixel(&self) -> Pixel {
        Pixel::new(self.u, self.v)
    }
}

/// Known metric depths at a sparse set of pixels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSamples {
    samples: Vec<Sample>,
}

impl SparseSamples {
    /// Validates bounds, positivity and uniqueness against a `width` x `height` image.
    pub fn new(samples: Vec<Sample>, width: usize, height: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.u as usize >= width || s.v as usize >= height {
                return Err(Error::InvalidData(format!(
                    "sample ({}, {}) outside {width}x{height} image",
                    s.u, s.v
                )));
            }
            if !(s.depth.is_finite() && s.depth > 0.0) {
                return Err(Error::InvalidData(format!(
                    "sample ({}, {}) has depth {}",
                    s.u, s.v, s.depth
                )));
            }
            if !seen.insert(s.pixel()) {
                return Err(Error::InvalidData(format!(
                    "duplicate sample at ({}, {})",
                    s.u, s.v
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn as_slice(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holes_are_zeroed_and_never_returned() {
        let m = DepthMap::new(2, 1, vec![1.5, 7.0], vec![true, false]).unwrap();
        assert_eq!(m.get(0, 0), Some(1.5));
        assert_eq!(m.get(1, 0), None);
        assert_eq!(m.values()[1], 0.0);
    }

    #[test]
    fn valid_pixel_must_be_positive() {
        assert!(DepthMap::new(1, 1, vec![0.0], vec![true]).is_err());
        assert!(DepthMap::new(1, 1, vec![f64::NAN], vec![true]).is_err());
    }

    #[test]
    fn duplicate_samples_rejected() {
        let s = Sample {
            u: 1,
            v: 1,
            depth: 1.0,
        };
        assert!(SparseSamples::new(vec![s, s], 4, 4).is_err());
        assert!(SparseSamples::new(vec![s], 1, 1).is_err());
    }
}
