//! Sparse sample generation and synthetic test data.
//!
//! All randomness flows through [`SeededRng`], a xoshiro256++ generator
//! seeded from a single `u64` with SplitMix64. Bounded draws go through
//! 64-bit ranges so the streams do not depend on the platform's `usize`.

mod synth;

use std::collections::BTreeMap;

use rand::{Rng, RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

pub use synth::{synth_scene, Aabb, SceneObject, SceneSpec, SynthScene};

use crate::error::{Error, Result};
use crate::types::{DepthMap, LabelMap, Sample, SparseSamples};

/// The generator used everywhere a seed is accepted.
pub type SeededRng = Xoshiro256PlusPlus;

pub fn seeded_rng(seed: u64) -> SeededRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Uniform draw in `0..n` through a 64-bit range.
pub(crate) fn below<R: Rng>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

/// Picks `count` distinct valid pixels uniformly without replacement.
///
/// Runs a partial Fisher-Yates shuffle over the row-major list of valid
/// pixel indices. The returned samples are sorted by `(v, u)`.
pub fn sample_uniform(truth: &DepthMap, count: usize, seed: u64) -> Result<SparseSamples> {
    let mut pool: Vec<usize> = (0..truth.len()).filter(|&i| truth.validity()[i]).collect();
    if count > pool.len() {
        return Err(Error::InsufficientPixels {
            requested: count,
            available: pool.len(),
        });
    }
    let mut rng = seeded_rng(seed);
    for i in 0..count {
        let j = i + below(&mut rng, pool.len() - i);
        pool.swap(i, j);
    }
    let mut chosen: Vec<usize> = pool[..count].to_vec();
    chosen.sort_unstable();
    let w = truth.width();
    let samples = chosen
        .into_iter()
        .map(|i| Sample {
            u: (i % w) as u32,
            v: (i / w) as u32,
            depth: truth.values()[i],
        })
        .collect();
    SparseSamples::new(samples, truth.width(), truth.height())
}

/// Smooth error field plus optional per-object offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbSpec {
    /// Peak magnitude of the smooth field, meters.
    pub amplitude: f64,
    /// Spatial wavelength of the field, pixels.
    pub wavelength: f64,
    /// Constant offset per label id, meters.
    pub bias: BTreeMap<u32, f64>,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            amplitude: 0.0,
            wavelength: 64.0,
            bias: BTreeMap::new(),
        }
    }
}

const WAVES: usize = 4;

/// Depths never drop below this after perturbation, meters.
pub const MIN_PERTURBED_DEPTH: f64 = 1e-3;

/// Adds a band-limited smooth field and per-label biases to every valid pixel.
///
/// The field is the mean of four plane waves at the given wavelength with
/// seeded directions and phases, scaled by `amplitude`. Biases need `labels`.
/// The validity mask never changes.
pub fn perturb(
    prediction_from: &DepthMap,
    labels: Option<&LabelMap>,
    spec: &PerturbSpec,
    seed: u64,
) -> Result<DepthMap> {
    if !(spec.amplitude >= 0.0 && spec.amplitude.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "amplitude must be non-negative, got {}",
            spec.amplitude
        )));
    }
    if spec.amplitude > 0.0 && !(spec.wavelength > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "wavelength must be positive, got {}",
            spec.wavelength
        )));
    }
    if !spec.bias.is_empty() {
        match labels {
            Some(l) => crate::types::check_dims(prediction_from.dims(), l.dims())?,
            None => {
                return Err(Error::InvalidParameter(
                    "per-object bias requires a label map".into(),
                ))
            }
        }
    }
    if spec.amplitude == 0.0 && spec.bias.values().all(|b| *b == 0.0) {
        return Ok(prediction_from.clone());
    }

    let mut rng = seeded_rng(seed);
    let waves: Vec<(f64, f64, f64)> = (0..WAVES)
        .map(|_| {
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            (theta.cos(), theta.sin(), phase)
        })
        .collect();
    let k = std::f64::consts::TAU / spec.wavelength;

    let mut out = prediction_from.clone();
    for px in prediction_from.valid_pixels() {
        let (u, v) = (px.u as usize, px.v as usize);
        let mut delta = 0.0;
        if spec.amplitude > 0.0 {
            let s: f64 = waves
                .iter()
                .map(|(c, s, p)| (k * (c * u as f64 + s * v as f64) + p).sin())
                .sum();
            delta += spec.amplitude * s / WAVES as f64;
        }
        if let Some(l) = labels {
            delta += spec.bias.get(&l.get(u, v)).copied().unwrap_or(0.0);
        }
        let d = prediction_from.get(u, v).unwrap_or_default() + delta;
        out.set(u, v, d.max(MIN_PERTURBED_DEPTH));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> DepthMap {
        DepthMap::from_values(w, h, (0..w * h).map(|i| 1.0 + i as f64 * 0.01).collect()).unwrap()
    }

    #[test]
    fn zero_count_is_empty() {
        assert!(sample_uniform(&ramp(4, 4), 0, 1).unwrap().is_empty());
    }

    #[test]
    fn exhaustive_count_takes_every_pixel_once() {
        let mut m = ramp(5, 4);
        m.invalidate(2, 2);
        let s = sample_uniform(&m, 19, 9).unwrap();
        assert_eq!(s.len(), 19);
        for x in s.iter() {
            assert_eq!(m.get(x.u as usize, x.v as usize), Some(x.depth));
        }
    }

    #[test]
    fn same_seed_same_samples() {
        let m = ramp(16, 16);
        assert_eq!(
            sample_uniform(&m, 30, 42).unwrap(),
            sample_uniform(&m, 30, 42).unwrap()
        );
        assert_ne!(
            sample_uniform(&m, 30, 42).unwrap(),
            sample_uniform(&m, 30, 43).unwrap()
        );
    }

    #[test]
    fn too_many_requested() {
        assert!(matches!(
            sample_uniform(&ramp(2, 2), 5, 0),
            Err(Error::InsufficientPixels {
                requested: 5,
                available: 4
            })
        ));
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let m = ramp(8, 8);
        let out = perturb(&m, None, &PerturbSpec::default(), 3).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn perturb_is_seeded_and_keeps_mask() {
        let mut m = ramp(16, 16);
        m.invalidate(3, 3);
        let spec = PerturbSpec {
            amplitude: 0.05,
            wavelength: 10.0,
            ..Default::default()
        };
        let a = perturb(&m, None, &spec, 7).unwrap();
        let b = perturb(&m, None, &spec, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.validity(), m.validity());
        for i in 0..m.len() {
            assert!((a.values()[i] - m.values()[i]).abs() <= 0.05 + 1e-12);
        }
    }

    #[test]
    fn bias_shifts_only_its_object() {
        let m = DepthMap::constant(4, 4, 2.0).unwrap();
        let labels = LabelMap::new(4, 4, (0..16).map(|i| (i % 4 >= 2) as u32 + 1).collect()).unwrap();
        let spec = PerturbSpec {
            bias: [(2, 0.2)].into_iter().collect(),
            ..Default::default()
        };
        let out = perturb(&m, Some(&labels), &spec, 0).unwrap();
        assert_eq!(out.get(0, 0), Some(2.0));
        assert!((out.get(3, 0).unwrap() - 2.2).abs() < 1e-15);
        assert!(perturb(&m, None, &spec, 0).is_err());
    }
}
