//! As-rigid-as-possible deformation of a triangle mesh toward anchor targets.
//!
//! Alternates a per-vertex rotation fit (local step) with a sparse linear
//! solve for positions (global step). The energy is
//! `sum_i sum_{j in N(i)} w_ij |(p'_i - p'_j) - R_i (p_i - p_j)|^2`,
//! each undirected edge counted once from each side.

mod cotan;
mod local;
mod solver;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meshing::{AnchorSet, TriangleMesh};
use crate::types::Point3;

pub use cotan::{cotangent_weights, CotangentWeights};
pub use local::{best_rotation, local_step, LocalStep};
pub use solver::GlobalSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// Anchors are fixed exactly at their targets.
    #[default]
    Hard,
    /// Anchors are pulled toward targets with weight `soft_weight`.
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArapConfig {
    pub max_iterations: usize,
    /// Stop once an iteration lowers the energy by at most this fraction.
    pub rel_energy_tol: f64,
    pub constraint_mode: ConstraintMode,
    pub soft_weight: f64,
    /// Raise cotangent weights below this value to it. `None` keeps
    /// negative weights from obtuse triangles.
    pub weight_clamp_floor: Option<f64>,
}

impl Default for ArapConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            rel_energy_tol: 1e-6,
            constraint_mode: ConstraintMode::Hard,
            soft_weight: 1e4,
            weight_clamp_floor: Some(0.0),
        }
    }
}

impl ArapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.rel_energy_tol >= 0.0 && self.rel_energy_tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rel_energy_tol must be non-negative, got {}",
                self.rel_energy_tol
            )));
        }
        if !(self.soft_weight > 0.0 && self.soft_weight.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "soft_weight must be positive, got {}",
                self.soft_weight
            )));
        }
        if self.weight_clamp_floor.is_some_and(|f| !f.is_finite()) {
            return Err(Error::InvalidParameter("weight_clamp_floor must be finite".into()));
        }
        Ok(())
    }
}

/// Weighted one-ring of every vertex, in compressed form.
#[derive(Debug, Clone)]
pub struct Neighborhoods {
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl Neighborhoods {
    pub fn new(vertex_count: usize, edges: &[[usize; 2]], weights: &CotangentWeights) -> Self {
        let mut degree = vec![0usize; vertex_count + 1];
        for e in edges {
            degree[e[0] + 1] += 1;
            degree[e[1] + 1] += 1;
        }
        for i in 0..vertex_count {
            degree[i + 1] += degree[i];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut entries = vec![(0, 0.0); offsets[vertex_count]];
        for (e, &w) in edges.iter().zip(weights.as_slice()) {
            entries[fill[e[0]]] = (e[1], w);
            fill[e[0]] += 1;
            entries[fill[e[1]]] = (e[0], w);
            fill[e[1]] += 1;
        }
        for i in 0..vertex_count {
            entries[offsets[i]..offsets[i + 1]].sort_unstable_by_key(|(j, _)| *j);
        }
        Self { offsets, entries }
    }

    pub fn from_mesh(mesh: &TriangleMesh, weights: &CotangentWeights) -> Self {
        Self::new(mesh.vertex_count(), mesh.edges(), weights)
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn ring(&self, i: usize) -> &[(usize, f64)] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Deformation energy of `deformed` relative to `rest` under per-vertex rotations.
pub fn energy(rest: &[Point3], deformed: &[Point3], rotations: &[Matrix3<f64>], nbhd: &Neighborhoods) -> f64 {
    let per_vertex: Vec<f64> = (0..rest.len())
        .into_par_iter()
        .map(|i| {
            nbhd.ring(i)
                .iter()
                .map(|&(j, w)| w * ((deformed[i] - deformed[j]) - rotations[i] * (rest[i] - rest[j])).norm_squared())
                .sum()
        })
        .collect();
    per_vertex.iter().sum()
}

fn anchor_penalty(deformed: &[Point3], anchors: &AnchorSet, soft_weight: f64) -> f64 {
    2.0 * soft_weight
        * anchors
            .iter()
            .map(|a| (deformed[a.vertex] - a.target).norm_squared())
            .sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct DeformationResult {
    pub positions: Vec<Point3>,
    pub rotations: Vec<Matrix3<f64>>,
    /// Energy after each local step; entry 0 is the initial guess.
    /// Soft mode includes the anchor penalty `2 * soft_weight * sum |p' - t|^2`.
    pub energy_trace: Vec<f64>,
    /// Number of global solves performed.
    pub iterations: usize,
    pub converged: bool,
    /// The direct factorization failed and MINRES was used.
    pub used_iterative_solver: bool,
}

impl DeformationResult {
    pub fn final_energy(&self) -> f64 {
        *self.energy_trace.last().expect("trace is never empty")
    }
}

/// Deforms `mesh` with cotangent weights computed from its rest pose.
pub fn deform(mesh: &TriangleMesh, anchors: &AnchorSet, config: &ArapConfig) -> Result<DeformationResult> {
    config.validate()?;
    let weights = cotangent_weights(mesh, config.weight_clamp_floor)?;
    deform_with_weights(mesh, &weights, anchors, config)
}

pub fn deform_with_weights(
    mesh: &TriangleMesh,
    weights: &CotangentWeights,
    anchors: &AnchorSet,
    config: &ArapConfig,
) -> Result<DeformationResult> {
    config.validate()?;
    if weights.len() != mesh.edges().len() {
        return Err(Error::InvalidData(format!(
            "{} weights for {} edges",
            weights.len(),
            mesh.edges().len()
        )));
    }
    if anchors.iter().any(|a| a.vertex >= mesh.vertex_count()) {
        return Err(Error::InvalidData("anchor vertex out of range".into()));
    }
    if anchors.is_empty() {
        return Err(Error::SingularSystem {
            component: 0,
            detail: "no anchors".into(),
        });
    }
    let rest = mesh.vertices();
    let nbhd = Neighborhoods::from_mesh(mesh, weights);
    let system = GlobalSystem::new(rest.len(), &nbhd, anchors, config)?;

    let soft = config.constraint_mode == ConstraintMode::Soft;
    let total = |p: &[Point3], r: &[Matrix3<f64>]| {
        let e = energy(rest, p, r, &nbhd);
        if soft {
            e + anchor_penalty(p, anchors, config.soft_weight)
        } else {
            e
        }
    };

    let mut current = rest.to_vec();
    for a in anchors.iter() {
        current[a.vertex] = a.target;
    }
    let mut rotations = local_step(rest, &current, &nbhd).rotations;
    let mut trace = vec![total(&current, &rotations)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        current = system.solve(rest, &rotations, &nbhd)?;
        rotations = local_step(rest, &current, &nbhd).rotations;
        iterations += 1;
        let e = total(&current, &rotations);
        let prev = *trace.last().unwrap();
        trace.push(e);
        if prev - e <= config.rel_energy_tol * prev.abs() {
            converged = true;
            break;
        }
    }
    Ok(DeformationResult {
        positions: current,
        rotations,
        energy_trace: trace,
        iterations,
        converged,
        used_iterative_solver: system.used_fallback,
    })
}

/// `iteration,energy` CSV of an energy trace.
pub fn energy_trace_csv(trace: &[f64]) -> String {
    let mut s = String::from("iteration,energy\n");
    for (i, e) in trace.iter().enumerate() {
        s.push_str(&format!("{i},{e:e}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::{triangulate_grid, Anchor};
    use crate::types::Pixel;
    use nalgebra::Rotation3;

    fn grid_mesh(n: u32) -> TriangleMesh {
        let px: Vec<Pixel> = (0..n).flat_map(|v| (0..n).map(move |u| Pixel::new(u, v))).collect();
        let tris = triangulate_grid(&px).unwrap();
        let verts = px
            .iter()
            .map(|p| Point3::new(p.u as f64 * 0.1, p.v as f64 * 0.1, 2.0 + 0.01 * (p.u * p.v) as f64))
            .collect();
        TriangleMesh::new(verts, px, tris).unwrap()
    }

    #[test]
    fn rigid_motion_is_recovered() {
        let m = grid_mesh(6);
        let r = Rotation3::from_euler_angles(0.2, -0.1, 0.4);
        let t = Point3::new(0.3, -0.2, 1.0);
        let moved: Vec<Point3> = m.vertices().iter().map(|p| r * p + t).collect();
        let anchors = AnchorSet::new(
            [0, 5, 30, 35, 14]
                .iter()
                .map(|&i| Anchor {
                    vertex: i,
                    target: moved[i],
                })
                .collect(),
            m.vertex_count(),
        )
        .unwrap();
        let cfg = ArapConfig {
            max_iterations: 1000,
            rel_energy_tol: 0.0,
            ..ArapConfig::default()
        };
        let res = deform(&m, &anchors, &cfg).unwrap();
        assert!(res.final_energy() < 1e-10, "{}", res.final_energy());
        for (p, q) in res.positions.iter().zip(&moved) {
            assert!((p - q).norm() < 1e-6);
        }
    }

    #[test]
    fn trace_is_monotone_and_anchors_exact() {
        let m = grid_mesh(8);
        let anchors = AnchorSet::new(
            vec![
                Anchor {
                    vertex: 0,
                    target: m.vertices()[0] + Point3::new(0.0, 0.0, 0.3),
                },
                Anchor {
                    vertex: 63,
                    target: m.vertices()[63],
                },
                Anchor {
                    vertex: 7,
                    target: m.vertices()[7] + Point3::new(0.05, 0.0, -0.1),
                },
            ],
            m.vertex_count(),
        )
        .unwrap();
        let res = deform(&m, &anchors, &ArapConfig::default()).unwrap();
        for w in res.energy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0));
        }
        for a in anchors.iter() {
            assert!((res.positions[a.vertex] - a.target).norm() <= 1e-9);
        }
    }

    #[test]
    fn soft_mode_approaches_targets() {
        let m = grid_mesh(5);
        let anchors = AnchorSet::new(
            vec![
                Anchor {
                    vertex: 0,
                    target: m.vertices()[0] + Point3::new(0.0, 0.0, 0.2),
                },
                Anchor {
                    vertex: 24,
                    target: m.vertices()[24],
                },
            ],
            m.vertex_count(),
        )
        .unwrap();
        let cfg = ArapConfig {
            constraint_mode: ConstraintMode::Soft,
            ..ArapConfig::default()
        };
        let res = deform(&m, &anchors, &cfg).unwrap();
        assert!((res.positions[0] - anchors.as_slice()[0].target).norm() < 1e-3);
        for w in res.energy_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-12);
        }
    }

    #[test]
    fn unanchored_component_is_singular() {
        let px = vec![
            Pixel::new(0, 0),
            Pixel::new(1, 0),
            Pixel::new(0, 1),
            Pixel::new(5, 5),
            Pixel::new(6, 5),
            Pixel::new(5, 6),
        ];
        let verts = px.iter().map(|p| Point3::new(p.u as f64, p.v as f64, 3.0)).collect();
        let m = TriangleMesh::new(verts, px, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let anchors = AnchorSet::new(
            vec![Anchor {
                vertex: 0,
                target: Point3::new(0.0, 0.0, 3.0),
            }],
            6,
        )
        .unwrap();
        let err = deform(&m, &anchors, &ArapConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. }));
    }

    #[test]
    fn trace_csv_header() {
        let s = energy_trace_csv(&[2.0, 1.0]);
        assert!(s.starts_with("iteration,energy\n0,"));
        assert_eq!(s.lines().count(), 3);
    }
}
