//! Per-object mesh reconstruction from a predicted depth map.
//!
//! 1. [`segment_groups`] splits the valid prediction pixels by label and
//!    attaches every sparse sample to the label under it. Labels without a
//!    sample, label `0`, and labels with fewer than three valid pixels go to
//!    the residual set and pass through untouched.
//! 2. [`build_group_mesh`] lifts a group's pixels to 3D, connects them, and
//!    turns its samples into anchors. Connected components with no anchor are
//!    demoted to the residual as well.
//!
//! [`build_global_mesh`] is the single-mesh variant that ignores labels.

mod delaunay;
mod grid;
mod obj;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use delaunay::triangulate_delaunay;
pub use grid::triangulate_grid;
pub use obj::{write_obj, write_obj_string};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::types::{check_dims, DepthMap, LabelMap, Pixel, Point3, Sample, SparseSamples};


/// Indexed triangle mesh whose vertices remember their source pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    pixels: Vec<Pixel>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
}

impl TriangleMesh {
    /// Validates indices and derives the undirected edge list (each edge once,
    /// `[lo, hi]`, sorted).
    pub fn new(vertices: Vec<Point3>, pixels: Vec<Pixel>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.len() != pixels.len() {
            return Err(Error::InvalidData(format!(
                "{} vertices but {} pixels",
                vertices.len(),
                pixels.len()
            )));
        }
        let n = vertices.len();
        let mut edges = Vec::with_capacity(triangles.len() * 3);
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidData(format!("triangle {t} index out of range")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidData(format!("triangle {t} repeats a vertex")));
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edges.push([a.min(b), a.max(b)]);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            vertices,
            pixels,
            triangles,
            edges,
        })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn pixels(&self) -> &[Pixel] {
        &self.pixels
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Same connectivity, new positions.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidData("vertex count changed".into()));
        }
        Ok(Self {
            vertices,
            ..self.clone()
        })
    }

    /// Component id per vertex over edge connectivity, numbered in order of
    /// each component's lowest vertex.
    pub fn components(&self) -> Vec<usize> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &[a, b] in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut ids = HashMap::new();
        (0..n)
            .map(|i| {
                let r = find(&mut parent, i);
                let next = ids.len();
                *ids.entry(r).or_insert(next)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub vertex: usize,
    pub target: Point3,
}

/// Vertices pinned to known positions, each vertex at most once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnchorSet {
    anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn new(anchors: Vec<Anchor>, vertex_count: usize) -> Result<Self> {
        let mut seen = vec![false; vertex_count];
        for a in &anchors {
            if a.vertex >= vertex_count {
                return Err(Error::InvalidData(format!("anchor vertex {} out of range", a.vertex)));
            }
            if std::mem::replace(&mut seen[a.vertex], true) {
                return Err(Error::InvalidData(format!("vertex {} anchored twice", a.vertex)));
            }
            if !(a.target.z > 0.0 && a.target.iter().all(|c| c.is_finite())) {
                return Err(Error::InvalidData(format!(
                    "anchor target for vertex {} must be finite with z > 0",
                    a.vertex
                )));
            }
        }
        Ok(Self { anchors })
    }

    pub fn as_slice(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Anchor> {
        self.anchors.iter()
    }

    /// The same anchors with every target mapped through `f`.
    pub fn map_targets(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self {
            anchors: self
                .anchors
                .iter()
                .map(|a| Anchor {
                    vertex: a.vertex,
                    target: f(&a.target),
                })
                .collect(),
        }
    }
}

/// One deformable object: its mesh, anchors and the pixels it owns.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticObjectGroup {
    pub label: u32,
    pub mesh: TriangleMesh,
    pub anchors: AnchorSet,
    /// Pixels this group writes during regeneration. Equal to the vertex
    /// pixels at stride 1; a superset of them when subsampled.
    pub pixels: Vec<Pixel>,
    /// Vertex subsampling stride used to build the mesh.
    pub stride: usize,
}

/// A label's pixels and samples before meshing.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSeed {
    pub label: u32,
    /// Valid prediction pixels, row-major.
    pub pixels: Vec<Pixel>,
    /// Samples whose pixel carries this label (valid prediction or not).
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segmentation {
    pub groups: Vec<GroupSeed>,
    /// Valid prediction pixels owned by no group.
    pub residual: Vec<Pixel>,
}

/// Partitions valid prediction pixels into per-label groups and a residual.
///
/// Groups come out in ascending label order.
pub fn segment_groups(
    prediction: &DepthMap,
    labels: &LabelMap,
    samples: &SparseSamples,
) -> Result<Segmentation> {
    check_dims(prediction.dims(), labels.dims())?;
    let mut pixels: BTreeMap<u32, Vec<Pixel>> = BTreeMap::new();
    for px in prediction.valid_pixels() {
        pixels
            .entry(labels.get(px.u as usize, px.v as usize))
            .or_default()
            .push(px);
    }
    let mut by_label: BTreeMap<u32, Vec<Sample>> = BTreeMap::new();
    for s in samples.iter() {
        if s.u as usize >= prediction.width() || s.v as usize >= prediction.height() {
            return Err(Error::InvalidData(format!("sample ({}, {}) out of bounds", s.u, s.v)));
        }
        by_label
            .entry(labels.get(s.u as usize, s.v as usize))
            .or_default()
            .push(*s);
    }

    let mut out = Segmentation::default();
    for (label, px) in pixels {
        let samples = by_label.remove(&label).unwrap_or_default();
        if label == 0 || samples.is_empty() || px.len() < 3 {
            out.residual.extend(px);
        } else {
            out.groups.push(GroupSeed {
                label,
                pixels: px,
                samples,
            });
        }
    }
    out.residual.sort_unstable_by_key(|p| (p.v, p.u));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    #[default]
    Grid,
    Delaunay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshOptions {
    pub connectivity: Connectivity,
    /// Groups with more pixels than this are subsampled.
    pub vertex_budget: usize,
    /// Fixed subsampling stride; derived from the budget when unset.
    pub stride: Option<usize>,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Grid,
            vertex_budget: 100_000,
            stride: None,
        }
    }
}

impl MeshOptions {
    pub fn stride_for(&self, pixel_count: usize) -> usize {
        match self.stride {
            Some(s) => s.max(1),
            None if pixel_count > self.vertex_budget && self.vertex_budget > 0 => {
                ((pixel_count as f64 / self.vertex_budget as f64).sqrt().ceil() as usize).max(1)
            }
            None => 1,
        }
    }
}

/// Outcome of meshing one group.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshBuild {
    /// `None` when nothing anchored survived.
    pub group: Option<SemanticObjectGroup>,
    /// Pixels handed back to the residual set.
    pub demoted: Vec<Pixel>,
    /// Samples that landed on invalid prediction pixels.
    pub dropped_samples: usize,
}

/// Lifts a group to 3D, triangulates it and attaches anchors.
///
/// Anchor targets are the sample pixel unprojected at the sample depth.
/// Samples on pixels without a valid prediction are dropped and counted.
/// With a stride above one, vertices are every `stride`-th pixel per axis
/// plus all anchor pixels, connected by Delaunay triangulation in image
/// space with triangles longer than two strides removed.
pub fn build_group_mesh(
    seed: &GroupSeed,
    prediction: &DepthMap,
    intrinsics: &CameraIntrinsics,
    options: &MeshOptions,
) -> Result<MeshBuild> {
    let stride = options.stride_for(seed.pixels.len());
    let member: HashMap<Pixel, ()> = seed.pixels.iter().map(|p| (*p, ())).collect();

    let mut dropped = 0;
    let mut anchor_pixels = Vec::new();
    for s in &seed.samples {
        if member.contains_key(&s.pixel()) && prediction.is_valid(s.u as usize, s.v as usize) {
            anchor_pixels.push(*s);
        } else {
            dropped += 1;
        }
    }

    let vertex_pixels: Vec<Pixel> = if stride == 1 {
        seed.pixels.clone()
    } else {
        let anchored: HashMap<Pixel, ()> = anchor_pixels.iter().map(|s| (s.pixel(), ())).collect();
        seed.pixels
            .iter()
            .filter(|p| {
                (p.u as usize % stride == 0 && p.v as usize % stride == 0) || anchored.contains_key(p)
            })
            .copied()
            .collect()
    };

    let triangles = if stride == 1 && options.connectivity == Connectivity::Grid {
        triangulate_grid(&vertex_pixels)?
    } else {
        let pts: Vec<[f64; 2]> = vertex_pixels.iter().map(|p| [p.u as f64, p.v as f64]).collect();
        let max_len2 = (2.0 * stride as f64).powi(2);
        triangulate_delaunay(&pts)?
            .into_iter()
            .filter(|t| {
                (0..3).all(|k| {
                    let (a, b) = (pts[t[k]], pts[t[(k + 1) % 3]]);
                    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) <= max_len2
                })
            })
            .collect()
    };

    let full = TriangleMesh::new(
        vertex_pixels
            .iter()
            .map(|p| {
                let d = prediction
                    .get(p.u as usize, p.v as usize)
                    .ok_or(Error::InvalidPixel { u: p.u, v: p.v })?;
                Ok(intrinsics.unproject_coords(p.u as f64, p.v as f64, d))
            })
            .collect::<Result<Vec<_>>>()?,
        vertex_pixels.clone(),
        triangles,
    )?;

    let vertex_of: HashMap<Pixel, usize> =
        vertex_pixels.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let comp = full.components();
    let n_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut anchored_comp = vec![false; n_comp];
    for s in &anchor_pixels {
        anchored_comp[comp[vertex_of[&s.pixel()]]] = true;
    }

    // Re-index onto vertices of anchored components.
    let mut remap = vec![usize::MAX; full.vertex_count()];
    let mut demoted = Vec::new();
    let mut kept = 0;
    for (i, px) in vertex_pixels.iter().enumerate() {
        if anchored_comp[comp[i]] {
            remap[i] = kept;
            kept += 1;
        } else {
            demoted.push(*px);
        }
    }
    if kept == 0 {
        return Ok(MeshBuild {
            group: None,
            demoted: seed.pixels.clone(),
            dropped_samples: dropped,
        });
    }
    let mesh = TriangleMesh::new(
        (0..full.vertex_count())
            .filter(|&i| remap[i] != usize::MAX)
            .map(|i| full.vertices[i])
            .collect(),
        (0..full.vertex_count())
            .filter(|&i| remap[i] != usize::MAX)
            .map(|i| full.pixels[i])
            .collect(),
        full.triangles
            .iter()
            .filter(|t| remap[t[0]] != usize::MAX)
            .map(|t| t.map(|i| remap[i]))
            .collect(),
    )?;
    let anchors = AnchorSet::new(
        anchor_pixels
            .iter()
            .map(|s| Anchor {
                vertex: remap[vertex_of[&s.pixel()]],
                target: intrinsics.unproject_coords(s.u as f64, s.v as f64, s.depth),
            })
            .collect(),
        mesh.vertex_count(),
    )?;

    let pixels = if demoted.is_empty() {
        seed.pixels.clone()
    } else {
        let gone: HashMap<Pixel, ()> = demoted.iter().map(|p| (*p, ())).collect();
        seed.pixels.iter().filter(|p| !gone.contains_key(p)).copied().collect()
    };
    Ok(MeshBuild {
        group: Some(SemanticObjectGroup {
            label: seed.label,
            mesh,
            anchors,
            pixels,
            stride,
        }),
        demoted,
        dropped_samples: dropped,
    })
}

/// Label used for the single group built by [`build_global_mesh`].
pub const GLOBAL_LABEL: u32 = 0;

/// One mesh over every valid prediction pixel, anchored by every sample.
pub fn build_global_mesh(
    prediction: &DepthMap,
    samples: &SparseSamples,
    intrinsics: &CameraIntrinsics,
    options: &MeshOptions,
) -> Result<MeshBuild> {
    let seed = GroupSeed {
        label: GLOBAL_LABEL,
        pixels: prediction.valid_pixels().collect(),
        samples: samples.as_slice().to_vec(),
    };
    if seed.pixels.len() < 3 {
        return Err(Error::TooFewVertices {
            count: seed.pixels.len(),
        });
    }
    build_group_mesh(&seed, prediction, intrinsics, options)
}
