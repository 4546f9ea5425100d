//! Dense depth regeneration from deformed group meshes.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::meshing::SemanticObjectGroup;
use crate::types::{DepthMap, Pixel, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegenMode {
    /// Each vertex writes its deformed z to the pixel it came from.
    #[default]
    VertexWriteback,
    /// Deformed triangles are projected and scan-converted, nearest depth wins.
    Rasterize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegenConfig {
    pub mode: RegenMode,
}

/// A group together with its deformed vertex positions.
#[derive(Debug, Clone, Copy)]
pub struct DeformedGroup<'a> {
    pub group: &'a SemanticObjectGroup,
    pub positions: &'a [Point3],
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

// Owned edges for the positive orientation of `edge` (clockwise on a
// y-down screen): horizontal top edges and edges going up.
fn is_top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Scan-converts one camera-frame triangle into `target`.
///
/// Pixel centers sit at integer coordinates. A pixel is covered when its
/// center is strictly inside, or on an owned (top or left) edge. Covered
/// pixels receive the perspective-correct depth when nearer than the
/// current value; invalid pixels count as infinitely far.
pub fn rasterize_triangle(
    v0: &Point3,
    v1: &Point3,
    v2: &Point3,
    intrinsics: &CameraIntrinsics,
    target: &mut DepthMap,
) -> Result<()> {
    let (x0, y0, z0) = intrinsics.project(v0)?;
    let (x1, y1, z1) = intrinsics.project(v1)?;
    let (x2, y2, z2) = intrinsics.project(v2)?;
    let (mut a, mut b, c) = ((x0, y0), (x1, y1), (x2, y2));
    let (mut za, mut zb, zc) = (z0, z1, z2);
    let mut area = edge(a, b, c);
    if area == 0.0 || !area.is_finite() {
        return Ok(());
    }
    if area < 0.0 {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut za, &mut zb);
        area = -area;
    }
    let (zmin, zmax) = (za.min(zb).min(zc), za.max(zb).max(zc));
    let flat = za == zb && zb == zc;

    let (w, h) = target.dims();
    let lo_x = a.0.min(b.0).min(c.0).ceil().max(0.0);
    let hi_x = a.0.max(b.0).max(c.0).floor().min(w as f64 - 1.0);
    let lo_y = a.1.min(b.1).min(c.1).ceil().max(0.0);
    let hi_y = a.1.max(b.1).max(c.1).floor().min(h as f64 - 1.0);
    if lo_x > hi_x || lo_y > hi_y {
        return Ok(());
    }
    let owned = [is_top_left(b, c), is_top_left(c, a), is_top_left(a, b)];
    for v in lo_y as usize..=hi_y as usize {
        for u in lo_x as usize..=hi_x as usize {
            let p = (u as f64, v as f64);
            let e = [edge(b, c, p), edge(c, a, p), edge(a, b, p)];
            if !(0..3).all(|k| e[k] > 0.0 || (e[k] == 0.0 && owned[k])) {
                continue;
            }
            let z = if flat {
                za
            } else {
                let inv = (e[0] / za + e[1] / zb + e[2] / zc) / area;
                (1.0 / inv).clamp(zmin, zmax)
            };
            if target.get(u, v).is_none_or(|cur| z < cur) {
                target.set(u, v, z);
            }
        }
    }
    Ok(())
}

fn check_in_front(groups: &[DeformedGroup<'_>]) -> Result<()> {
    for g in groups {
        if g.positions.len() != g.group.mesh.vertex_count() {
            return Err(Error::InvalidData(format!(
                "group {}: {} positions for {} vertices",
                g.group.label,
                g.positions.len(),
                g.group.mesh.vertex_count()
            )));
        }
        if let Some((vertex, p)) = g.positions.iter().enumerate().find(|(_, p)| !(p.z > 0.0)) {
            return Err(Error::VertexBehindCamera {
                group: g.group.label,
                vertex,
                z: p.z,
            });
        }
    }
    Ok(())
}

fn rasterize_group(g: &DeformedGroup<'_>, intrinsics: &CameraIntrinsics, dims: (usize, usize)) -> Result<DepthMap> {
    let mut acc = DepthMap::empty(dims.0, dims.1);
    for t in g.group.mesh.triangles() {
        rasterize_triangle(&g.positions[t[0]], &g.positions[t[1]], &g.positions[t[2]], intrinsics, &mut acc)?;
    }
    Ok(acc)
}

/// Builds the calibrated map. Pixels owned by no group keep the prediction.
///
/// In vertex-writeback mode, groups meshed with a stride above one fill
/// their non-vertex pixels by rasterizing their own deformed mesh. In
/// rasterize mode every group is rasterized, merged nearest-first, and the
/// result is written to group-owned pixels it covers; vertex pixels left
/// uncovered (mesh boundaries not owned under the fill rule) take their
/// vertex depth.
pub fn regenerate(
    prediction: &DepthMap,
    groups: &[DeformedGroup<'_>],
    intrinsics: &CameraIntrinsics,
    config: &RegenConfig,
) -> Result<DepthMap> {
    check_in_front(groups)?;
    let dims = prediction.dims();
    let mut out = prediction.clone();
    match config.mode {
        RegenMode::VertexWriteback => {
            for g in groups {
                if g.group.stride > 1 {
                    let acc = rasterize_group(g, intrinsics, dims)?;
                    for px in &g.group.pixels {
                        if let Some(z) = acc.get(px.u as usize, px.v as usize) {
                            out.set(px.u as usize, px.v as usize, z);
                        }
                    }
                }
                for (px, p) in g.group.mesh.pixels().iter().zip(g.positions) {
                    out.set(px.u as usize, px.v as usize, p.z);
                }
            }
        }
        RegenMode::Rasterize => {
            let mut order: Vec<&DeformedGroup<'_>> = groups.iter().collect();
            order.sort_by_key(|g| g.group.label);
            let layers = order
                .par_iter()
                .map(|g| rasterize_group(g, intrinsics, dims))
                .collect::<Result<Vec<_>>>()?;
            let mut merged = DepthMap::empty(dims.0, dims.1);
            for layer in &layers {
                for px in layer.valid_pixels() {
                    let (u, v) = (px.u as usize, px.v as usize);
                    let z = layer.get(u, v).unwrap();
                    if merged.get(u, v).is_none_or(|cur| z < cur) {
                        merged.set(u, v, z);
                    }
                }
            }
            for g in groups {
                for (px, p) in g.group.mesh.pixels().iter().zip(g.positions) {
                    let (u, v) = (px.u as usize, px.v as usize);
                    if !merged.is_valid(u, v) {
                        out.set(u, v, p.z);
                    }
                }
            }
            let owned: HashSet<Pixel> = groups.iter().flat_map(|g| g.group.pixels.iter().copied()).collect();
            for px in owned {
                if let Some(z) = merged.get(px.u as usize, px.v as usize) {
                    out.set(px.u as usize, px.v as usize, z);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::{triangulate_grid, AnchorSet, TriangleMesh};

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(10.0, 10.0, 5.0, 5.0)
    }

    fn unproject(u: f64, v: f64, z: f64) -> Point3 {
        k().unproject_coords(u, v, z)
    }

    #[test]
    fn flat_triangle_is_exact() {
        let mut acc = DepthMap::empty(11, 11);
        rasterize_triangle(&unproject(0.0, 0.0, 2.0), &unproject(10.0, 0.0, 2.0), &unproject(0.0, 10.0, 2.0), &k(), &mut acc).unwrap();
        assert!(acc.valid_count() > 40);
        assert!(acc.valid_pixels().all(|p| acc.get(p.u as usize, p.v as usize) == Some(2.0)));
    }

    #[test]
    fn perspective_correct_midpoint() {
        let mut acc = DepthMap::empty(11, 11);
        // Edge from (0,4) at z=1 to (8,4) at z=3, third vertex below.
        rasterize_triangle(&unproject(0.0, 4.0, 1.0), &unproject(8.0, 4.0, 3.0), &unproject(4.0, 10.0, 2.0), &k(), &mut acc).unwrap();
        let z = acc.get(4, 4).unwrap();
        assert!((z - 1.5).abs() < 1e-12, "{z}");
    }

    #[test]
    fn nearest_wins() {
        let mut acc = DepthMap::empty(11, 11);
        let tri = |z: f64| [unproject(0.0, 0.0, z), unproject(10.0, 0.0, z), unproject(0.0, 10.0, z)];
        let [a, b, c] = tri(2.0);
        rasterize_triangle(&a, &b, &c, &k(), &mut acc).unwrap();
        let [a, b, c] = tri(1.0);
        rasterize_triangle(&a, &b, &c, &k(), &mut acc).unwrap();
        assert_eq!(acc.get(1, 1), Some(1.0));
    }

    #[test]
    fn shared_edge_covered_once() {
        let mut counts = vec![0; 121];
        let quad = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)];
        for t in [[0, 1, 2], [0, 2, 3]] {
            let mut acc = DepthMap::empty(11, 11);
            let p: Vec<Point3> = t.iter().map(|&i| unproject(quad[i].0, quad[i].1, 2.0)).collect();
            rasterize_triangle(&p[0], &p[1], &p[2], &k(), &mut acc).unwrap();
            for px in acc.valid_pixels() {
                counts[px.v as usize * 11 + px.u as usize] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c <= 1));
        // The diagonal belongs to exactly one triangle.
        assert!((1..10).all(|i| counts[i * 11 + i] == 1));
    }

    fn plane_group(z: f64) -> SemanticObjectGroup {
        let px: Vec<Pixel> = (2..6).flat_map(|v| (2..6).map(move |u| Pixel::new(u, v))).collect();
        let verts = px.iter().map(|p| unproject(p.u as f64, p.v as f64, z)).collect();
        let tris = triangulate_grid(&px).unwrap();
        SemanticObjectGroup {
            label: 1,
            mesh: TriangleMesh::new(verts, px.clone(), tris).unwrap(),
            anchors: AnchorSet::default(),
            pixels: px,
            stride: 1,
        }
    }

    #[test]
    fn writeback_pushes_plane_and_keeps_residual() {
        let pred = DepthMap::constant(8, 8, 2.0).unwrap();
        let g = plane_group(2.0);
        let moved: Vec<Point3> = g.mesh.pixels().iter().map(|p| unproject(p.u as f64, p.v as f64, 2.5)).collect();
        for mode in [RegenMode::VertexWriteback, RegenMode::Rasterize] {
            let out = regenerate(
                &pred,
                &[DeformedGroup {
                    group: &g,
                    positions: &moved,
                }],
                &k(),
                &RegenConfig { mode },
            )
            .unwrap();
            for p in &g.pixels {
                assert!((out.get(p.u as usize, p.v as usize).unwrap() - 2.5).abs() < 1e-12);
            }
            assert_eq!(out.get(0, 0), Some(2.0));
        }
    }

    #[test]
    fn null_deformation_is_identity() {
        let pred = DepthMap::constant(8, 8, 2.0).unwrap();
        let g = plane_group(2.0);
        let out = regenerate(
            &pred,
            &[DeformedGroup {
                group: &g,
                positions: g.mesh.vertices(),
            }],
            &k(),
            &RegenConfig::default(),
        )
        .unwrap();
        assert_eq!(out, pred);
        assert_eq!(regenerate(&pred, &[], &k(), &RegenConfig::default()).unwrap(), pred);
    }

    #[test]
    fn behind_camera_names_vertex() {
        let pred = DepthMap::constant(8, 8, 2.0).unwrap();
        let g = plane_group(2.0);
        let mut moved = g.mesh.vertices().to_vec();
        moved[3].z = -0.1;
        let err = regenerate(
            &pred,
            &[DeformedGroup {
                group: &g,
                positions: &moved,
            }],
            &k(),
            &RegenConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::VertexBehindCamera { group: 1, vertex: 3, .. }));
    }
}
