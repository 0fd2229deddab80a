use std::collections::HashMap;

use serde::Serialize;

use super::{GeometryError, Mesh};
use crate::math::Vec3;

/// Straight-line Euclidean distance in model units.
pub fn measure_distance(a: Vec3, b: Vec3) -> Result<f64, GeometryError> {
    if !a.is_finite() || !b.is_finite() {
        return Err(GeometryError::Domain(
            "distance endpoints must be finite".into(),
        ));
    }
    Ok(a.distance(b))
}

pub fn triangle_area(v0: Vec3, v1: Vec3, v2: Vec3) -> f64 {
    0.5 * (v1 - v0).cross(v2 - v0).length()
}

/// Sum of triangle areas. Degenerate triangles contribute zero.
pub fn surface_area(mesh: &Mesh) -> f64 {
    if mesh.is_empty() {
        log::warn!("surface area of empty mesh {:?} is 0", mesh.name());
        return 0.0;
    }
    mesh.triangles()
        .map(|[a, b, c]| triangle_area(a, b, c))
        .sum()
}

/// Absolute signed-tetrahedron volume. Open meshes are not rejected; see
/// [`volume_report`] for the watertightness advisory.
pub fn volume(mesh: &Mesh) -> f64 {
    let signed: f64 = mesh
        .triangles()
        .map(|[a, b, c]| a.dot(b.cross(c)) / 6.0)
        .sum();
    signed.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeReport {
    pub volume: f64,
    /// False when some edge is not shared by exactly two triangles; the volume
    /// of such a mesh is still reported but is not meaningful as an enclosed
    /// volume.
    pub watertight: bool,
}

pub fn volume_report(mesh: &Mesh) -> VolumeReport {
    VolumeReport {
        volume: volume(mesh),
        watertight: is_watertight(mesh),
    }
}

/// Every undirected edge is shared by exactly two triangles. Vertices are
/// welded by exact position first, so uv or normal seams do not count as
/// boundaries.
pub fn is_watertight(mesh: &Mesh) -> bool {
    if mesh.is_empty() {
        return false;
    }
    let key = |v: Vec3| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
    let mut weld: HashMap<[u64; 3], u32> = HashMap::new();
    let ids: Vec<u32> = mesh
        .vertices()
        .iter()
        .map(|&v| {
            let next = weld.len() as u32;
            *weld.entry(key(v)).or_insert(next)
        })
        .collect();

    let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
    for tri in mesh.indices() {
        for k in 0..3 {
            let a = ids[tri[k] as usize];
            let b = ids[tri[(k + 1) % 3] as usize];
            if a == b {
                continue;
            }
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    !edges.is_empty() && edges.values().all(|&c| c == 2)
}
