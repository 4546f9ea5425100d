use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::types::Pixel;

/// Triangulates a pixel set on its regular grid.
///
/// Every 2x2 quad with all four corners present becomes two triangles split
/// along the top-left to bottom-right diagonal; a quad with exactly three
/// corners becomes the one triangle they span. Triples index into `pixels`
/// and share one winding (positive orientation in `(u, v)` coordinates).
pub fn triangulate_grid(pixels: &[Pixel]) -> Result<Vec<[usize; 3]>> {
    if pixels.len() < 3 {
        return Err(Error::TooFewVertices {
            count: pixels.len(),
        });
    }
    let index: HashMap<Pixel, usize> = pixels.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let at = |u: u32, v: u32| index.get(&Pixel::new(u, v)).copied();

    // Quads are visited in row-major order of their top-left corner.
    let mut corners: Vec<Pixel> = pixels
        .iter()
        .flat_map(|p| {
            let (u, v) = (p.u, p.v);
            [
                Some(Pixel::new(u, v)),
                u.checked_sub(1).map(|u| Pixel::new(u, v)),
                v.checked_sub(1).map(|v| Pixel::new(u, v)),
                u.checked_sub(1).zip(v.checked_sub(1)).map(|(u, v)| Pixel::new(u, v)),
            ]
        })
        .flatten()
        .collect();
    corners.sort_unstable_by_key(|p| (p.v, p.u));
    corners.dedup();

    let mut tris = Vec::new();
    for q in corners {
        let (u, v) = (q.u, q.v);
        let a = at(u, v);
        let b = at(u + 1, v);
        let c = at(u, v + 1);
        let d = at(u + 1, v + 1);
        match (a, b, c, d) {
            (Some(a), Some(b), Some(c), Some(d)) => {
                tris.push([a, b, d]);
                tris.push([a, d, c]);
            }
            (None, Some(b), Some(c), Some(d)) => tris.push([b, d, c]),
            (Some(a), None, Some(c), Some(d)) => tris.push([a, d, c]),
            (Some(a), Some(b), None, Some(d)) => tris.push([a, b, d]),
            (Some(a), Some(b), Some(c), None) => tris.push([a, b, c]),
            _ => {}
        }
    }
    Ok(tris)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(w: u32, h: u32) -> Vec<Pixel> {
        (0..h).flat_map(|v| (0..w).map(move |u| Pixel::new(u, v))).collect()
    }

    #[test]
    fn block_counts() {
        assert_eq!(triangulate_grid(&block(2, 2)).unwrap().len(), 2);
        assert_eq!(triangulate_grid(&block(3, 3)).unwrap().len(), 8);
        assert_eq!(triangulate_grid(&block(7, 4)).unwrap().len(), 2 * 6 * 3);
    }

    #[test]
    fn l_shape_is_one_triangle() {
        let px = [Pixel::new(4, 4), Pixel::new(5, 4), Pixel::new(4, 5)];
        assert_eq!(triangulate_grid(&px).unwrap(), vec![[0, 1, 2]]);
    }

    #[test]
    fn too_few() {
        assert!(matches!(
            triangulate_grid(&block(2, 1)),
            Err(Error::TooFewVertices { count: 2 })
        ));
    }

    #[test]
    fn uses_fixed_diagonal_and_one_winding() {
        let px = block(2, 2);
        let t = triangulate_grid(&px).unwrap();
        assert_eq!(t, vec![[0, 1, 3], [0, 3, 2]]);
        for tri in triangulate_grid(&block(5, 5)).unwrap() {
            let p = tri.map(|i| (px_of(i, 5).0 as f64, px_of(i, 5).1 as f64));
            let cross = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[1].1 - p[0].1) * (p[2].0 - p[0].0);
            assert!(cross > 0.0);
        }
    }

    fn px_of(i: usize, w: usize) -> (usize, usize) {
        (i % w, i / w)
    }
}
