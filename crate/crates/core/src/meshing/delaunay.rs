//! Incremental Bowyer-Watson Delaunay triangulation in the plane.
//!
//! Points are inserted one at a time into a triangulation seeded with a
//! large bounding triangle. Each insertion locates the containing triangle
//! by a visibility walk, grows the cavity of triangles whose circumcircle
//! strictly contains the new point, and re-fans the cavity boundary to it.
//! Orientation and in-circle tests use exact adaptive predicates.
//! Triangles touching the bounding vertices are discarded at the end.

use std::collections::{HashMap, HashSet};

use robust::{incircle, orient2d, Coord};

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Tri {
    v: [usize; 3],
    /// `n[k]` is the neighbor across the edge opposite `v[k]`.
    n: [usize; 3],
    alive: bool,
}

struct Builder {
    pts: Vec<[f64; 2]>,
    tris: Vec<Tri>,
    last: usize,
}

#[inline]
fn c(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

pub(crate) fn orient(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    orient2d(c(a), c(b), c(p))
}

/// Positive when `d` is strictly inside the circle through counter-clockwise `a, b, c`.
pub(crate) fn in_circle(a: [f64; 2], b: [f64; 2], cc: [f64; 2], d: [f64; 2]) -> f64 {
    incircle(c(a), c(b), c(cc), c(d))
}

impl Builder {
    fn in_circumcircle(&self, t: usize, p: [f64; 2]) -> bool {
        let v = self.tris[t].v;
        in_circle(self.pts[v[0]], self.pts[v[1]], self.pts[v[2]], p) > 0.0
    }

    fn contains(&self, t: usize, p: [f64; 2]) -> bool {
        let v = self.tris[t].v;
        (0..3).all(|k| orient(self.pts[v[(k + 1) % 3]], self.pts[v[(k + 2) % 3]], p) >= 0.0)
    }

    fn locate(&self, p: [f64; 2]) -> usize {
        let mut t = self.last;
        let limit = self.tris.len() + 8;
        'walk: for _ in 0..limit {
            let tri = &self.tris[t];
            for k in 0..3 {
                let a = self.pts[tri.v[(k + 1) % 3]];
                let b = self.pts[tri.v[(k + 2) % 3]];
                if orient(a, b, p) < 0.0 && tri.n[k] != NONE {
                    t = tri.n[k];
                    continue 'walk;
                }
            }
            return t;
        }
        // Walks can cycle on degenerate configurations; fall back to a scan.
        (0..self.tris.len())
            .find(|&t| self.tris[t].alive && self.contains(t, p))
            .expect("point outside the bounding triangle")
    }

    fn insert(&mut self, pi: usize) {
        let p = self.pts[pi];
        let start = self.locate(p);
        if self.tris[start].v.iter().any(|&v| self.pts[v] == p) {
            return;
        }

        let mut cavity = vec![start];
        let mut in_cavity = HashSet::from([start]);
        let mut i = 0;
        while i < cavity.len() {
            let t = cavity[i];
            i += 1;
            for k in 0..3 {
                let nb = self.tris[t].n[k];
                if nb != NONE && !in_cavity.contains(&nb) && self.in_circumcircle(nb, p) {
                    in_cavity.insert(nb);
                    cavity.push(nb);
                }
            }
        }

        // Boundary edges (a, b) in counter-clockwise order with the outside neighbor.
        let mut boundary = Vec::new();
        for &t in &cavity {
            let tri = &self.tris[t];
            for k in 0..3 {
                let nb = tri.n[k];
                if nb == NONE || !in_cavity.contains(&nb) {
                    boundary.push((tri.v[(k + 1) % 3], tri.v[(k + 2) % 3], nb, t));
                }
            }
        }
        for &t in &cavity {
            self.tris[t].alive = false;
        }

        let first = self.tris.len();
        let mut by_start = HashMap::with_capacity(boundary.len());
        let mut by_end = HashMap::with_capacity(boundary.len());
        for (j, &(a, b, outer, old)) in boundary.iter().enumerate() {
            let id = first + j;
            self.tris.push(Tri {
                v: [a, b, pi],
                n: [NONE, NONE, outer],
                alive: true,
            });
            if outer != NONE {
                let slot = self.tris[outer]
                    .n
                    .iter()
                    .position(|&x| x == old)
                    .expect("neighbor link");
                self.tris[outer].n[slot] = id;
            }
            by_start.insert(a, id);
            by_end.insert(b, id);
        }
        for j in 0..boundary.len() {
            let id = first + j;
            let (a, b) = (self.tris[id].v[0], self.tris[id].v[1]);
            // Edge (b, p) is shared with the fan triangle starting at b,
            // edge (p, a) with the one ending at a.
            self.tris[id].n[0] = by_start[&b];
            self.tris[id].n[1] = by_end[&a];
        }
        self.last = first;
    }
}

/// Delaunay triangulation of planar points.
///
/// Returns counter-clockwise index triples into `points`. Duplicate points
/// are inserted once. Fails when fewer than three points are given or all
/// points are collinear.
pub fn triangulate_delaunay(points: &[[f64; 2]]) -> Result<Vec<[usize; 3]>> {
    let n = points.len();
    if n < 3 {
        return Err(Error::TooFewVertices { count: n });
    }
    if points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::InvalidData("non-finite point".into()));
    }
    let p0 = points[0];
    let Some(far) = points.iter().position(|p| *p != p0) else {
        return Err(Error::CollinearPoints);
    };
    if !points.iter().any(|&p| orient(p0, points[far], p) != 0.0) {
        return Err(Error::CollinearPoints);
    }

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
    let mid = [(lo[0] + hi[0]) * 0.5, (lo[1] + hi[1]) * 0.5];
    let m = 1e5 * extent;

    let mut pts = points.to_vec();
    pts.push([mid[0] - m, mid[1] - m]);
    pts.push([mid[0] + m, mid[1] - m]);
    pts.push([mid[0], mid[1] + m]);
    let mut b = Builder {
        pts,
        tris: vec![Tri {
            v: [n, n + 1, n + 2],
            n: [NONE; 3],
            alive: true,
        }],
        last: 0,
    };
    for i in 0..n {
        b.insert(i);
    }

    Ok(b
        .tris
        .iter()
        .filter(|t| t.alive && t.v.iter().all(|&v| v < n))
        .map(|t| t.v)
        .collect())
}
