//! Canny edge detector over a scalar grid.
//!
//! Stages: separable Gaussian blur (radius `ceil(3 sigma)`), Sobel gradient
//! normalized to per-pixel slope, non-maximum suppression along the quantized
//! gradient direction, then double-threshold hysteresis with 8-connectivity.
//! Borders replicate the nearest pixel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::EdgeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannyParams {
    pub sigma: f64,
    pub low_threshold: f64,
    pub high_threshold: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            low_threshold: 0.1,
            high_threshold: 0.2,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "canny sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.low_threshold >= 0.0 && self.high_threshold >= self.low_threshold) {
            return Err(Error::InvalidParameter(format!(
                "canny thresholds need high >= low >= 0, got low={} high={}",
                self.low_threshold, self.high_threshold
            )));
        }
        Ok(())
    }

    pub fn kernel_radius(&self) -> usize {
        (3.0 * self.sigma).ceil() as usize
    }
}

fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

#[inline]
fn clamp_idx(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

fn blur(image: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; image.len()];
    for y in 0..height {
        let row = &image[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * row[clamp_idx(x as i64 + k as i64 - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; image.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * tmp[clamp_idx(y as i64 + k as i64 - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Runs Canny on a row-major `width` x `height` grid.
pub fn canny(image: &[f64], width: usize, height: usize, params: &CannyParams) -> Result<EdgeMap> {
    params.validate()?;
    if image.len() != width * height {
        return Err(Error::InvalidData(format!(
            "image {width}x{height} needs {} values, got {}",
            width * height,
            image.len()
        )));
    }
    let radius = params.kernel_radius();
    let kernel_size = 2 * radius + 1;
    if width < kernel_size || height < kernel_size {
        return Err(Error::InputTooSmall {
            width,
            height,
            kernel: kernel_size,
        });
    }

    let smooth = blur(image, width, height, &gaussian_kernel(params.sigma, radius));
    let at = |x: i64, y: i64| smooth[clamp_idx(y, height) * width + clamp_idx(x, width)];

    let mut gx = vec![0.0; image.len()];
    let mut gy = vec![0.0; image.len()];
    let mut mag = vec![0.0; image.len()];
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let sx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let sy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * width + x as usize;
            // Sobel taps sum to 8 across a unit ramp.
            gx[i] = sx / 8.0;
            gy[i] = sy / 8.0;
            mag[i] = gx[i].hypot(gy[i]);
        }
    }

    // Non-maximum suppression. Ties resolve toward the negative-direction
    // neighbor so a symmetric ridge yields a single-pixel line.
    let m = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
            0.0
        } else {
            mag[y as usize * width + x as usize]
        }
    };
    let mut thin = vec![0.0; image.len()];
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let i = y as usize * width + x as usize;
            let g = mag[i];
            if g <= 0.0 {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees();
            let a = if angle < 0.0 { angle + 180.0 } else { angle };
            let (dx, dy) = if !(22.5..157.5).contains(&a) {
                (1, 0)
            } else if a < 67.5 {
                (1, 1)
            } else if a < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let before = m(x - dx, y - dy);
            let after = m(x + dx, y + dy);
            let tie = 1e-9 * g;
            if g - before > tie && after - g <= tie {
                thin[i] = g;
            }
        }
    }

    // Hysteresis.
    let mut edge = vec![false; image.len()];
    let mut stack: Vec<usize> = Vec::new();
    for (i, &g) in thin.iter().enumerate() {
        if g >= params.high_threshold && g > 0.0 && !edge[i] {
            edge[i] = true;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (jx, jy) = ((j % width) as i64, (j / width) as i64);
                for ny in jy - 1..=jy + 1 {
                    for nx in jx - 1..=jx + 1 {
                        if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                            continue;
                        }
                        let k = ny as usize * width + nx as usize;
                        if !edge[k] && thin[k] >= params.low_threshold && thin[k] > 0.0 {
                            edge[k] = true;
                            stack.push(k);
                        }
                    }
                }
            }
        }
    }

    Ok(EdgeMap::from_raw(width, height, edge))
}
