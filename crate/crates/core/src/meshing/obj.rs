use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::TriangleMesh;

/// Wavefront OBJ text: `v x y z` in meters (camera frame), then 1-based `f a b c`.
pub fn write_obj_string(mesh: &TriangleMesh) -> String {
    let mut s = String::with_capacity(mesh.vertex_count() * 40);
    for p in mesh.vertices() {
        let _ = writeln!(s, "v {:.9} {:.9} {:.9}", p.x, p.y, p.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn write_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    std::fs::write(path, write_obj_string(mesh)).map_err(|e| Error::io(path, e))
}
