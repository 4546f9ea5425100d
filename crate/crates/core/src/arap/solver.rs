//! The global step's sparse symmetric system.
//!
//! The system matrix depends only on the rest weights and the anchor set,
//! so it is assembled and factored once per deformation; each iteration
//! only rebuilds the right-hand side. Sparse Cholesky is tried first; when
//! the matrix is not positive definite (negative cotangent weights) the
//! solve falls back to MINRES.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::types::Point3;

use super::{ArapConfig, ConstraintMode, Neighborhoods};
use crate::meshing::AnchorSet;

/// Compressed sparse rows, used for products and residual checks.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|(c, _)| *c);
            for (c, v) in row {
                if cols.len() > *offsets.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
        }
        Self {
            n,
            offsets,
            cols,
            vals,
        }
    }

    pub(crate) fn mul(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.offsets[i]..self.offsets[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            out[i] = acc;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Unpreconditioned MINRES for symmetric, possibly indefinite systems.
/// Returns the iterate and the relative residual estimate.
pub(crate) fn minres(a: &Csr, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let beta1 = norm(b);
    if beta1 == 0.0 {
        return (x, 0.0);
    }
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y = b.to_vec();
    let (mut oldb, mut beta, mut dbar, mut epsln) = (0.0, beta1, 0.0, 0.0);
    let (mut phibar, mut cs, mut sn) = (beta1, -1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];
    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        a.mul(&v, &mut av);
        y.copy_from_slice(&av);
        if itn >= 2 {
            let f = beta / oldb;
            for i in 0..n {
                y[i] -= f * r1[i];
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for i in 0..n {
            y[i] -= f * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        oldb = beta;
        beta = norm(&r2);

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) / gamma;
            x[i] += phi * w[i];
        }
        if phibar <= tol * beta1 || beta == 0.0 {
            break;
        }
    }
    let mut r = vec![0.0; n];
    a.mul(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let rel = norm(&r) / beta1;
    (x, rel)
}

enum Factor {
    Cholesky(Llt<usize, f64>),
    Minres,
}

/// Factored global-step system for one mesh and anchor set.
pub struct GlobalSystem {
    mode: ConstraintMode,
    soft_weight: f64,
    /// Position of each vertex among the unknowns, or `None` when fixed.
    unknown: Vec<Option<usize>>,
    /// Fixed target per vertex in hard mode.
    fixed: Vec<Option<Point3>>,
    /// Anchor target per vertex in soft mode.
    soft_targets: Vec<Option<Point3>>,
    matrix: Csr,
    factor: Factor,
    /// Anchor-free component labels, used to report singularity.
    components: Vec<usize>,
    pub(crate) used_fallback: bool,
}

const MINRES_TOL: f64 = 1e-13;

impl GlobalSystem {
    pub fn new(n: usize, nbhd: &Neighborhoods, anchors: &AnchorSet, config: &ArapConfig) -> Result<Self> {
        let mut fixed = vec![None; n];
        let mut soft_targets = vec![None; n];
        for a in anchors.iter() {
            match config.constraint_mode {
                ConstraintMode::Hard => fixed[a.vertex] = Some(a.target),
                ConstraintMode::Soft => soft_targets[a.vertex] = Some(a.target),
            }
        }
        let mut unknown = vec![None; n];
        let mut m = 0;
        for i in 0..n {
            if fixed[i].is_none() {
                unknown[i] = Some(m);
                m += 1;
            }
        }

        // Every unknown must reach an anchor through nonzero weights.
        let components = weighted_components(n, nbhd);
        let mut anchored = vec![false; n];
        for a in anchors.iter() {
            anchored[components[a.vertex]] = true;
        }
        if let Some(i) = (0..n).find(|&i| unknown[i].is_some() && !anchored[components[i]]) {
            return Err(Error::SingularSystem {
                component: components[i],
                detail: format!("vertex {i} is not connected to any anchor through nonzero weights"),
            });
        }

        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for i in 0..n {
            let Some(ri) = unknown[i] else { continue };
            let mut diag = 0.0;
            for &(j, w) in nbhd.ring(i) {
                diag += w;
                if let Some(rj) = unknown[j] {
                    rows[ri].push((rj, -w));
                }
            }
            if soft_targets[i].is_some() {
                diag += config.soft_weight;
            }
            rows[ri].push((ri, diag));
        }
        let matrix = Csr::from_rows(rows);

        let mut triplets = Vec::with_capacity(matrix.vals.len());
        for i in 0..m {
            for k in matrix.offsets[i]..matrix.offsets[i + 1] {
                if matrix.cols[k] <= i {
                    triplets.push(Triplet::new(i, matrix.cols[k], matrix.vals[k]));
                }
            }
        }
        let factor = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &triplets)
            .ok()
            .and_then(|a| a.sp_cholesky(Side::Lower).ok())
            .map_or(Factor::Minres, Factor::Cholesky);
        let used_fallback = matches!(factor, Factor::Minres);

        Ok(Self {
            mode: config.constraint_mode,
            soft_weight: config.soft_weight,
            unknown,
            fixed,
            soft_targets,
            matrix,
            factor,
            components,
            used_fallback,
        })
    }

    pub fn unknowns(&self) -> usize {
        self.matrix.n
    }

    /// Solves for new positions given per-vertex rotations.
    pub fn solve(&self, rest: &[Point3], rotations: &[nalgebra::Matrix3<f64>], nbhd: &Neighborhoods) -> Result<Vec<Point3>> {
        let n = rest.len();
        let m = self.matrix.n;
        let mut rhs = Mat::<f64>::zeros(m, 3);
        for i in 0..n {
            let Some(ri) = self.unknown[i] else { continue };
            let mut b = Point3::zeros();
            for &(j, w) in nbhd.ring(i) {
                b += 0.5 * w * (rotations[i] + rotations[j]) * (rest[i] - rest[j]);
                if let Some(t) = self.fixed[j] {
                    b += w * t;
                }
            }
            if let Some(t) = self.soft_targets[i] {
                b += self.soft_weight * t;
            }
            for k in 0..3 {
                rhs[(ri, k)] = b[k];
            }
        }

        let solution: Vec<[f64; 3]> = match &self.factor {
            Factor::Cholesky(llt) => {
                llt.solve_in_place(rhs.as_mut());
                (0..m).map(|i| [rhs[(i, 0)], rhs[(i, 1)], rhs[(i, 2)]]).collect()
            }
            Factor::Minres => {
                let mut cols = Vec::with_capacity(3);
                for k in 0..3 {
                    let b: Vec<f64> = (0..m).map(|i| rhs[(i, k)]).collect();
                    let (x, rel) = minres(&self.matrix, &b, MINRES_TOL, 20 * m.max(10));
                    if !(rel <= 1e-8) {
                        return Err(self.singular(&x, &b, rel));
                    }
                    cols.push(x);
                }
                (0..m).map(|i| [cols[0][i], cols[1][i], cols[2][i]]).collect()
            }
        };

        let out: Vec<Point3> = (0..n)
            .map(|i| match (self.unknown[i], self.fixed[i]) {
                (Some(ri), _) => Point3::from(solution[ri]),
                (None, Some(t)) => t,
                (None, None) => unreachable!("vertex neither free nor fixed"),
            })
            .collect();
        if out.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::SingularSystem {
                component: 0,
                detail: "non-finite solution".into(),
            });
        }
        Ok(out)
    }

    fn singular(&self, x: &[f64], b: &[f64], rel: f64) -> Error {
        let mut r = vec![0.0; x.len()];
        self.matrix.mul(x, &mut r);
        let worst = (0..x.len())
            .max_by(|&a, &c| (b[a] - r[a]).abs().total_cmp(&(b[c] - r[c]).abs()))
            .unwrap_or(0);
        let vertex = self.unknown.iter().position(|u| *u == Some(worst)).unwrap_or(0);
        Error::SingularSystem {
            component: self.components[vertex],
            detail: format!("iterative solve stalled at relative residual {rel:.3e} ({:?} mode)", self.mode),
        }
    }
}

/// Component labels over edges with nonzero weight.
fn weighted_components(n: usize, nbhd: &Neighborhoods) -> Vec<usize> {
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        stack.push(s);
        while let Some(i) = stack.pop() {
            for &(j, w) in nbhd.ring(i) {
                if w != 0.0 && comp[j] == usize::MAX {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    comp
}
