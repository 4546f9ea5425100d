use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::types::Point3;

use super::Neighborhoods;

/// Rotation fitting `sum_j w_ij |e'_ij - R e_ij|^2` best for the given
/// weighted covariance `sum_j w_ij e_ij e'_ij^T`, with det(R) = +1.
pub fn best_rotation(covariance: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = covariance.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut r = v_t.transpose() * u.transpose();
    if r.determinant() < 0.0 {
        let smallest = svd.singular_values.imin();
        let mut u = u;
        u.column_mut(smallest).neg_mut();
        r = v_t.transpose() * u.transpose();
    }
    r
}

#[derive(Debug, Clone)]
pub struct LocalStep {
    pub rotations: Vec<Matrix3<f64>>,
    /// Vertices without neighbors; they keep the identity.
    pub isolated: usize,
}

/// Per-vertex best-fit rotations from rest to current edge vectors.
pub fn local_step(rest: &[Point3], current: &[Point3], nbhd: &Neighborhoods) -> LocalStep {
    let rotations: Vec<Option<Matrix3<f64>>> = (0..rest.len())
        .into_par_iter()
        .map(|i| {
            let ring = nbhd.ring(i);
            if ring.is_empty() {
                return None;
            }
            let mut cov = Matrix3::zeros();
            for &(j, w) in ring {
                let e = rest[i] - rest[j];
                let e2 = current[i] - current[j];
                cov += w * e * e2.transpose();
            }
            Some(best_rotation(&cov))
        })
        .collect();
    let isolated = rotations.iter().filter(|r| r.is_none()).count();
    LocalStep {
        rotations: rotations
            .into_iter()
            .map(|r| r.unwrap_or_else(Matrix3::identity))
            .collect(),
        isolated,
    }
}
