//! Mesh data model, OBJ/PLY parsing, picking, metering and pose interpolation.

mod camera;
mod metering;
mod obj;
mod ply;
pub mod shapes;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::Vec3;

pub use camera::{interpolate_pose, pick, project, CameraPose, Viewport};
pub use metering::{
    is_watertight, measure_distance, surface_area, triangle_area, volume, volume_report,
    VolumeReport,
};
pub use obj::{parse_obj, write_obj};
pub use ply::{parse_ply, write_ply, PlyEncoding};

/// Free-form key/value document attached to groups, scenes and assets.
pub type Metadata = BTreeMap<String, serde_json::Value>;

/// Tolerance for unit-length normals.
pub const NORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl fmt::Display for MeshFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeshFormat::Obj => "OBJ",
            MeshFormat::Ply => "PLY",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("{format} parse error at line {line}: {message}")]
    Parse {
        format: MeshFormat,
        line: usize,
        message: String,
    },
    #[error("{format} parse error: {message}")]
    Malformed { format: MeshFormat, message: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("input contains no triangles")]
    EmptyGeometry,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Indexed triangle geometry in double precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    name: String,
    vertices: Vec<Vec3>,
    indices: Vec<[u32; 3]>,
    normals: Option<Vec<Vec3>>,
    uvs: Option<Vec<[f64; 2]>>,
}

impl Mesh {
    /// Builds a mesh, checking every index, normal and uv invariant.
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Vec3>,
        indices: Vec<[u32; 3]>,
        normals: Option<Vec<Vec3>>,
        uvs: Option<Vec<[f64; 2]>>,
    ) -> Result<Mesh, GeometryError> {
        let mesh = Mesh {
            name: name.into(),
            vertices,
            indices,
            normals,
            uvs,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn from_triangles(
        name: impl Into<String>,
        vertices: Vec<Vec3>,
        indices: Vec<[u32; 3]>,
    ) -> Result<Mesh, GeometryError> {
        Mesh::new(name, vertices, indices, None, None)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let n = self.vertices.len();
        if let Some(v) = self.vertices.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidMesh(format!("vertex {v} is not finite")));
        }
        for (t, tri) in self.indices.iter().enumerate() {
            if let Some(&i) = tri.iter().find(|&&i| i as usize >= n) {
                return Err(GeometryError::InvalidMesh(format!(
                    "triangle {t} references vertex {i} but only {n} vertices exist"
                )));
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(GeometryError::InvalidMesh(format!(
                    "{} normals for {n} vertices",
                    normals.len()
                )));
            }
            if let Some(i) = normals
                .iter()
                .position(|v| !((v.length() - 1.0).abs() <= NORMAL_TOLERANCE))
            {
                return Err(GeometryError::InvalidMesh(format!("normal {i} is not unit length")));
            }
        }
        if let Some(uvs) = &self.uvs {
            if uvs.len() != n {
                return Err(GeometryError::InvalidMesh(format!(
                    "{} uvs for {n} vertices",
                    uvs.len()
                )));
            }
            if uvs.iter().any(|uv| !uv[0].is_finite() || !uv[1].is_finite()) {
                return Err(GeometryError::InvalidMesh("non-finite uv".into()));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    /// Positions may be edited freely; index topology stays fixed.
    pub fn vertices_mut(&mut self) -> &mut [Vec3] {
        &mut self.vertices
    }

    pub fn indices(&self) -> &[[u32; 3]] {
        &self.indices
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn uvs(&self) -> Option<&[[f64; 2]]> {
        self.uvs.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn set_normals(&mut self, normals: Option<Vec<Vec3>>) -> Result<(), GeometryError> {
        let old = std::mem::replace(&mut self.normals, normals);
        if let Err(e) = self.validate() {
            self.normals = old;
            return Err(e);
        }
        Ok(())
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.indices[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangles(&self) -> impl Iterator<Item = [Vec3; 3]> + '_ {
        (0..self.indices.len()).map(|f| self.triangle(f))
    }

    /// Unnormalized face normal, `(v1 - v0) × (v2 - v0)`; its length is twice
    /// the triangle area.
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(c - a)
    }

    /// Mean of all vertex positions.
    pub fn vertex_centroid(&self) -> Option<Vec3> {
        if self.vertices.is_empty() {
            return None;
        }
        let sum = self.vertices.iter().fold(Vec3::ZERO, |acc, &v| acc + v);
        Some(sum / self.vertices.len() as f64)
    }

    /// Applies `f` to every position and re-validates.
    pub fn transformed(&self, f: impl Fn(Vec3) -> Vec3) -> Result<Mesh, GeometryError> {
        let mut out = self.clone();
        out.vertices.iter_mut().for_each(|v| *v = f(*v));
        out.validate()?;
        Ok(out)
    }

    /// Area-weighted per-vertex normals, no crease splitting. Vertices that
    /// touch only degenerate faces fall back to +Z.
    pub fn area_weighted_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::ZERO; self.vertices.len()];
        for (f, tri) in self.indices.iter().enumerate() {
            let n = self.face_cross(f);
            for &i in tri {
                acc[i as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| n.try_normalize().unwrap_or(Vec3::Z))
            .collect()
    }

    /// Axis-aligned bounds, `None` for a mesh with no vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (
                Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z)),
                Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z)),
            )
        }))
    }
}

/// Ordered collection of named meshes plus shared metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshGroup {
    meshes: Vec<Mesh>,
    #[serde(default)]
    pub metadata: Metadata,
}

impl MeshGroup {
    pub fn new(meshes: Vec<Mesh>, metadata: Metadata) -> Result<MeshGroup, GeometryError> {
        if meshes.is_empty() {
            return Err(GeometryError::InvalidMesh("mesh group is empty".into()));
        }
        let mut seen = HashSet::new();
        for m in &meshes {
            if !seen.insert(m.name()) {
                return Err(GeometryError::InvalidMesh(format!(
                    "duplicate mesh name {:?} in group",
                    m.name()
                )));
            }
        }
        Ok(MeshGroup { meshes, metadata })
    }

    pub fn single(mesh: Mesh) -> MeshGroup {
        MeshGroup {
            meshes: vec![mesh],
            metadata: Metadata::new(),
        }
    }

    pub fn meshes(&self) -> &[Mesh] {
        &self.meshes
    }

    pub fn into_meshes(self) -> Vec<Mesh> {
        self.meshes
    }

    /// Total triangle count; a group-level face index runs over the meshes'
    /// triangles in order.
    pub fn triangle_count(&self) -> usize {
        self.meshes.iter().map(Mesh::triangle_count).sum()
    }
}

/// A picked point on a mesh surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub face_index: u32,
    pub barycentric: [f64; 3],
    pub normal: Vec3,
}

impl SurfacePoint {
    /// Checks the barycentric and normal invariants (no mesh needed).
    pub fn validate(&self) -> Result<(), GeometryError> {
        let [a, b, c] = self.barycentric;
        let sum = a + b + c;
        if !(sum - 1.0).abs().le(&1e-9) {
            return Err(GeometryError::Domain(format!(
                "barycentric coordinates sum to {sum}, expected 1"
            )));
        }
        if self.barycentric.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(GeometryError::Domain(format!(
                "barycentric coordinates {:?} outside [0, 1]",
                self.barycentric
            )));
        }
        if !self.position.is_finite() {
            return Err(GeometryError::Domain("position is not finite".into()));
        }
        if !((self.normal.length() - 1.0).abs() <= NORMAL_TOLERANCE) {
            return Err(GeometryError::Domain("normal is not unit length".into()));
        }
        Ok(())
    }

    /// Full check against the mesh the point claims to lie on.
    pub fn validate_on(&self, mesh: &Mesh) -> Result<(), GeometryError> {
        self.validate()?;
        let face = self.face_index as usize;
        if face >= mesh.triangle_count() {
            return Err(GeometryError::Domain(format!(
                "face index {face} out of range for {} triangles",
                mesh.triangle_count()
            )));
        }
        let [v0, v1, v2] = mesh.triangle(face);
        let [a, b, c] = self.barycentric;
        let p = v0 * a + v1 * b + v2 * c;
        if p.distance(self.position) > 1e-6 {
            return Err(GeometryError::Domain(
                "position does not match barycentric coordinates".into(),
            ));
        }
        Ok(())
    }
}
