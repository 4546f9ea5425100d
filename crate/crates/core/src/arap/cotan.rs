use crate::error::{Error, Result};
use crate::meshing::TriangleMesh;
use crate::types::Point3;

/// One weight per entry of [`TriangleMesh::edges`], same order.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentWeights {
    weights: Vec<f64>,
}

impl CotangentWeights {
    pub fn from_raw(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Cotangent of the angle at `apex` between the rays to `a` and `b`.
/// `None` when the three points are collinear.
pub(crate) fn cot_at(apex: &Point3, a: &Point3, b: &Point3) -> Option<f64> {
    let (ea, eb) = (a - apex, b - apex);
    let cross = ea.cross(&eb).norm();
    let scale = ea.norm() * eb.norm();
    if !(cross > f64::EPSILON * scale) {
        return None;
    }
    Some(ea.dot(&eb) / cross)
}

/// `w_ij = (cot a_ij + cot b_ij) / 2` over the angles opposite each edge,
/// from rest-pose positions. Boundary edges get the single available term.
/// With `clamp_floor`, weights below it are raised to it.
pub fn cotangent_weights(mesh: &TriangleMesh, clamp_floor: Option<f64>) -> Result<CotangentWeights> {
    if mesh.triangles().is_empty() {
        return Err(Error::InvalidData("mesh has no triangles".into()));
    }
    let edges = mesh.edges();
    let mut weights = vec![0.0; edges.len()];
    let p = mesh.vertices();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            let apex = tri[k];
            let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let cot = cot_at(&p[apex], &p[a], &p[b]).ok_or(Error::DegenerateTriangle { triangle: t })?;
            let key = [a.min(b), a.max(b)];
            let e = edges.binary_search(&key).expect("edge list covers every triangle edge");
            weights[e] += 0.5 * cot;
        }
    }
    if let Some(floor) = clamp_floor {
        for w in &mut weights {
            if *w < floor {
                *w = floor;
            }
        }
    }
    Ok(CotangentWeights { weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Pixel;

    fn mesh(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> TriangleMesh {
        let px = (0..vertices.len() as u32).map(|i| Pixel::new(i, 0)).collect();
        TriangleMesh::new(vertices, px, triangles).unwrap()
    }

    fn weight(m: &TriangleMesh, w: &CotangentWeights, a: usize, b: usize) -> f64 {
        w.as_slice()[m.edges().binary_search(&[a.min(b), a.max(b)]).unwrap()]
    }

    #[test]
    fn equilateral_pair() {
        let h = 3f64.sqrt() / 2.0;
        let m = mesh(
            vec![
                Point3::new(0.0, 0.0, 1.0),
                Point3::new(1.0, 0.0, 1.0),
                Point3::new(0.5, h, 1.0),
                Point3::new(0.5, -h, 1.0),
            ],
            vec![[0, 1, 2], [1, 0, 3]],
        );
        let w = cotangent_weights(&m, None).unwrap();
        assert!((weight(&m, &w, 0, 1) - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((weight(&m, &w, 0, 2) - 0.5 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn right_angle_pair_is_zero() {
        let m = mesh(
            vec![
                Point3::new(0.0, 0.0, 1.0),
                Point3::new(1.0, 0.0, 1.0),
                Point3::new(1.0, 1.0, 1.0),
                Point3::new(0.0, 1.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        );
        let w = cotangent_weights(&m, None).unwrap();
        assert_eq!(weight(&m, &w, 0, 2), 0.0);
        assert!((weight(&m, &w, 0, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn obtuse_weight_negative_unless_clamped() {
        let m = mesh(
            vec![
                Point3::new(0.0, 0.0, 1.0),
                Point3::new(4.0, 0.0, 1.0),
                Point3::new(2.0, 0.3, 1.0),
            ],
            vec![[0, 1, 2]],
        );
        assert!(weight(&m, &cotangent_weights(&m, None).unwrap(), 0, 1) < 0.0);
        assert_eq!(weight(&m, &cotangent_weights(&m, Some(0.0)).unwrap(), 0, 1), 0.0);
    }

    #[test]
    fn zero_area_triangle_named() {
        let m = mesh(
            vec![
                Point3::new(0.0, 0.0, 1.0),
                Point3::new(1.0, 0.0, 1.0),
                Point3::new(0.0, 1.0, 1.0),
                Point3::new(2.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 1, 3]],
        );
        assert!(matches!(
            cotangent_weights(&m, None),
            Err(Error::DegenerateTriangle { triangle: 1 })
        ));
    }
}
