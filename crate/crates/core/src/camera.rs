//! Pinhole projection between depth-map pixels and camera-frame points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DepthMap, Pixel, Point3};

/// Pinhole intrinsics in pixels. No distortion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    /// Checks focal lengths and that the principal point lies inside the image.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < width as f64 && self.cy >= 0.0 && self.cy < height as f64)
        {
            return Err(Error::InvalidParameter(format!(
                "principal point ({}, {}) outside {width}x{height} image",
                self.cx, self.cy
            )));
        }
        Ok(())
    }

    /// Lifts image coordinates at depth `z` to a camera-frame point.
    #[inline]
    pub fn unproject_coords(&self, u: f64, v: f64, z: f64) -> Point3 {
        Point3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Ray direction through `(u, v)` scaled so its z component is 1.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Point3 {
        Point3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Projects a point in front of the camera to `(u, v, depth)`.
    pub fn project(&self, p: &Point3) -> Result<(f64, f64, f64)> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera { z: p.z });
        }
        Ok((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy, p.z))
    }

    /// Scales focal lengths and principal point, e.g. after resizing an image.
    pub fn scaled(&self, sx: f64, sy: f64) -> Self {
        Self::new(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: Point3,
    pub pixel: Pixel,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Lifts each pixel to 3D at its depth in `depth_map`. Every pixel must be valid.
pub fn unproject(
    depth_map: &DepthMap,
    intrinsics: &CameraIntrinsics,
    pixels: &[Pixel],
) -> Result<PointCloud> {
    let points = pixels
        .iter()
        .map(|&px| {
            let d = depth_map
                .get(px.u as usize, px.v as usize)
                .ok_or(Error::InvalidPixel { u: px.u, v: px.v })?;
            Ok(CloudPoint {
                position: intrinsics.unproject_coords(px.u as f64, px.v as f64, d),
                pixel: px,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointCloud { points })
}

pub fn project(point: &Point3, intrinsics: &CameraIntrinsics) -> Result<(f64, f64, f64)> {
    intrinsics.project(point)
}
