//! The PBR scene document: versioned JSON plus little-endian sidecar
//! buffers.
//!
//! On disk a scene is a directory:
//!
//! ```text
//! scene.json
//! buffers/mesh<i>.positions.bin   f32 x3 per vertex
//! buffers/mesh<i>.indices.bin     u32 x3 per triangle
//! buffers/mesh<i>.normals.bin     f32 x3 per vertex
//! buffers/mesh<i>.uvs.bin         f32 x2 per vertex (optional)
//! textures/texture<i>.bin         f32 per sample, row-major, interleaved
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::AnalysisError;
use crate::geometry::{Mesh, MeshGroup, Metadata};
use crate::imaging::{MaterialParams, TextureImage};
use crate::math::Vec3;

pub const SCENE_VERSION: &str = "1.0";
pub const SCENE_FILE: &str = "scene.json";
pub const DEFAULT_MATERIAL: &str = "default";
pub const TEXTURE_ROLES: [&str; 5] = ["diffuse", "normal", "displacement", "roughness", "metalness"];

/// Single-precision geometry as stored in the buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    pub positions: Vec<[f32; 3]>,
    pub indices: Vec<[u32; 3]>,
    pub normals: Vec<[f32; 3]>,
    pub uvs: Option<Vec<[f32; 2]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMesh {
    pub name: String,
    pub geometry: SceneGeometry,
    pub material_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMaterial {
    pub name: String,
    pub base_color: [f64; 3],
    pub metalness: f64,
    pub roughness: f64,
    pub normal_scale: f64,
    /// Texture role to texture id.
    #[serde(default)]
    pub texture_refs: BTreeMap<String, String>,
}

impl SceneMaterial {
    pub fn params(&self) -> MaterialParams {
        let [r, g, b] = self.base_color;
        MaterialParams {
            base_color: Vec3::new(r, g, b),
            normal_scale: self.normal_scale,
            metalness: self.metalness,
            roughness: self.roughness,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTexture {
    pub id: String,
    pub image: TextureImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDocument {
    pub version: String,
    pub meshes: Vec<SceneMesh>,
    pub materials: Vec<SceneMaterial>,
    pub textures: Vec<SceneTexture>,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferRef {
    /// Path relative to the scene directory.
    pub uri: String,
    pub byte_length: usize,
}

#[derive(Serialize, Deserialize)]
struct MeshJson {
    name: String,
    material_ref: String,
    vertex_count: usize,
    triangle_count: usize,
    positions: BufferRef,
    indices: BufferRef,
    normals: BufferRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uvs: Option<BufferRef>,
}

#[derive(Serialize, Deserialize)]
struct TextureJson {
    id: String,
    width: u32,
    height: u32,
    channels: u8,
    data: BufferRef,
}

#[derive(Serialize, Deserialize)]
struct DocumentJson {
    version: String,
    meshes: Vec<MeshJson>,
    materials: Vec<SceneMaterial>,
    textures: Vec<TextureJson>,
    #[serde(default)]
    metadata: Metadata,
}

/// Where converted geometry came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub source_format: String,
    pub parser_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl Provenance {
    pub fn new(source_format: impl Into<String>, timestamp: u64) -> Provenance {
        Provenance {
            source_format: source_format.into(),
            parser_version: concat!("relic-core ", env!("CARGO_PKG_VERSION")).to_string(),
            timestamp,
        }
    }

    fn to_value(&self) -> Value {
        json!({
            "source_format": self.source_format,
            "parser_version": self.parser_version,
            "timestamp": self.timestamp,
        })
    }
}

fn schema(msg: impl Into<String>) -> AnalysisError {
    AnalysisError::Schema(msg.into())
}

fn to_f32(v: Vec3) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

fn to_f64(v: [f32; 3]) -> Vec3 {
    Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64)
}

/// Converts parsed geometry plus role-tagged textures into a scene document
/// with one default material. Missing normals are generated by area-weighted
/// averaging. `metadata` overrides keys from the group's own metadata, and
/// `provenance` is recorded under `"provenance"` unless that key already
/// exists.
pub fn convert_asset(
    group: &MeshGroup,
    textures: &BTreeMap<String, TextureImage>,
    metadata: &Metadata,
    provenance: &Provenance,
) -> Result<SceneDocument, AnalysisError> {
    if let Some(role) = textures.keys().find(|r| !TEXTURE_ROLES.contains(&r.as_str())) {
        return Err(AnalysisError::UnknownRole { role: role.clone() });
    }
    let meshes = group
        .meshes()
        .iter()
        .map(|m| {
            let normals = match m.normals() {
                Some(n) => n.iter().map(|&v| to_f32(v)).collect(),
                None => m.area_weighted_normals().into_iter().map(to_f32).collect(),
            };
            SceneMesh {
                name: m.name().to_string(),
                geometry: SceneGeometry {
                    positions: m.vertices().iter().map(|&v| to_f32(v)).collect(),
                    indices: m.indices().to_vec(),
                    normals,
                    uvs: m
                        .uvs()
                        .map(|uvs| uvs.iter().map(|uv| [uv[0] as f32, uv[1] as f32]).collect()),
                },
                material_ref: DEFAULT_MATERIAL.to_string(),
            }
        })
        .collect();

    let defaults = MaterialParams::default();
    let material = SceneMaterial {
        name: DEFAULT_MATERIAL.to_string(),
        base_color: defaults.base_color.to_array(),
        metalness: defaults.metalness,
        roughness: defaults.roughness,
        normal_scale: defaults.normal_scale,
        texture_refs: textures.keys().map(|r| (r.clone(), r.clone())).collect(),
    };
    let textures = textures
        .iter()
        .map(|(role, image)| SceneTexture {
            id: role.clone(),
            image: image.clone(),
        })
        .collect();

    let mut meta = group.metadata.clone();
    meta.extend(metadata.iter().map(|(k, v)| (k.clone(), v.clone())));
    meta.entry("provenance".to_string())
        .or_insert_with(|| provenance.to_value());

    let doc = SceneDocument {
        version: SCENE_VERSION.to_string(),
        meshes,
        materials: vec![material],
        textures,
        metadata: meta,
    };
    doc.validate()?;
    Ok(doc)
}

impl SceneDocument {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.version.split('.').next() != SCENE_VERSION.split('.').next() {
            return Err(schema(format!(
                "unsupported version {:?} (expected {SCENE_VERSION})",
                self.version
            )));
        }
        if self.meshes.is_empty() {
            return Err(schema("document has no meshes"));
        }
        let mut names = BTreeSet::new();
        let materials: BTreeSet<&str> = self.materials.iter().map(|m| m.name.as_str()).collect();
        if materials.len() != self.materials.len() {
            return Err(schema("duplicate material name"));
        }
        let textures: BTreeSet<&str> = self.textures.iter().map(|t| t.id.as_str()).collect();
        if textures.len() != self.textures.len() {
            return Err(schema("duplicate texture id"));
        }
        for m in &self.meshes {
            if !names.insert(m.name.as_str()) {
                return Err(schema(format!("duplicate mesh name {:?}", m.name)));
            }
            if !materials.contains(m.material_ref.as_str()) {
                return Err(schema(format!(
                    "mesh {:?} references unknown material {:?}",
                    m.name, m.material_ref
                )));
            }
            m.geometry.validate().map_err(|e| schema(format!("mesh {:?}: {e}", m.name)))?;
        }
        for mat in &self.materials {
            for (role, id) in &mat.texture_refs {
                if !TEXTURE_ROLES.contains(&role.as_str()) {
                    return Err(AnalysisError::UnknownRole { role: role.clone() });
                }
                if !textures.contains(id.as_str()) {
                    return Err(schema(format!(
                        "material {:?} role {role} references unknown texture {id:?}",
                        mat.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn material(&self, name: &str) -> Option<&SceneMaterial> {
        self.materials.iter().find(|m| m.name == name)
    }

    pub fn texture(&self, id: &str) -> Option<&SceneTexture> {
        self.textures.iter().find(|t| t.id == id)
    }

    pub fn vertex_count(&self) -> usize {
        self.meshes.iter().map(|m| m.geometry.positions.len()).sum()
    }

    pub fn triangle_count(&self) -> usize {
        self.meshes.iter().map(|m| m.geometry.indices.len()).sum()
    }

    /// Textures keyed by the role the first material binds them to.
    pub fn textures_by_role(&self) -> BTreeMap<String, TextureImage> {
        let Some(mat) = self.materials.first() else {
            return BTreeMap::new();
        };
        mat.texture_refs
            .iter()
            .filter_map(|(role, id)| Some((role.clone(), self.texture(id)?.image.clone())))
            .collect()
    }

    /// Widens the stored geometry back into a mesh group carrying the
    /// document metadata.
    pub fn to_group(&self) -> Result<MeshGroup, AnalysisError> {
        let meshes = self
            .meshes
            .iter()
            .map(|m| {
                let g = &m.geometry;
                Mesh::new(
                    m.name.clone(),
                    g.positions.iter().map(|&p| to_f64(p)).collect(),
                    g.indices.clone(),
                    Some(g.normals.iter().map(|&n| to_f64(n)).collect()),
                    g.uvs
                        .as_ref()
                        .map(|uvs| uvs.iter().map(|uv| [uv[0] as f64, uv[1] as f64]).collect()),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MeshGroup::new(meshes, self.metadata.clone())?)
    }

    /// Serializes to the JSON text and the list of `(uri, bytes)` buffers it
    /// references.
    pub fn to_parts(&self) -> Result<(String, Vec<(String, Vec<u8>)>), AnalysisError> {
        self.validate()?;
        let mut buffers = Vec::new();
        let mut push = |uri: String, bytes: Vec<u8>| {
            let r = BufferRef {
                uri: uri.clone(),
                byte_length: bytes.len(),
            };
            buffers.push((uri, bytes));
            r
        };
        let meshes = self
            .meshes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let g = &m.geometry;
                MeshJson {
                    name: m.name.clone(),
                    material_ref: m.material_ref.clone(),
                    vertex_count: g.positions.len(),
                    triangle_count: g.indices.len(),
                    positions: push(format!("buffers/mesh{i}.positions.bin"), f32_bytes(g.positions.iter().flatten())),
                    indices: push(
                        format!("buffers/mesh{i}.indices.bin"),
                        g.indices.iter().flatten().flat_map(|v| v.to_le_bytes()).collect(),
                    ),
                    normals: push(format!("buffers/mesh{i}.normals.bin"), f32_bytes(g.normals.iter().flatten())),
                    uvs: g
                        .uvs
                        .as_ref()
                        .map(|uvs| push(format!("buffers/mesh{i}.uvs.bin"), f32_bytes(uvs.iter().flatten()))),
                }
            })
            .collect();
        let textures = self
            .textures
            .iter()
            .enumerate()
            .map(|(i, t)| TextureJson {
                id: t.id.clone(),
                width: t.image.width(),
                height: t.image.height(),
                channels: t.image.channels(),
                data: push(format!("textures/texture{i}.bin"), f32_bytes(t.image.data())),
            })
            .collect();
        let doc = DocumentJson {
            version: self.version.clone(),
            meshes,
            materials: self.materials.clone(),
            textures,
            metadata: self.metadata.clone(),
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| schema(e.to_string()))?;
        Ok((text, buffers))
    }

    /// Inverse of [`SceneDocument::to_parts`]; `load` resolves a buffer uri
    /// to its bytes.
    pub fn from_parts(
        json_text: &str,
        mut load: impl FnMut(&str) -> Result<Vec<u8>, AnalysisError>,
    ) -> Result<SceneDocument, AnalysisError> {
        let doc: DocumentJson = serde_json::from_str(json_text).map_err(|e| schema(e.to_string()))?;
        let mut fetch = |r: &BufferRef, elements: usize, what: &str| -> Result<Vec<u8>, AnalysisError> {
            check_uri(&r.uri)?;
            let bytes = load(&r.uri)?;
            let expected = elements * 4;
            if bytes.len() != r.byte_length || bytes.len() != expected {
                return Err(schema(format!(
                    "{what} buffer {} holds {} bytes, expected {expected}",
                    r.uri,
                    bytes.len()
                )));
            }
            Ok(bytes)
        };
        let mut meshes = Vec::with_capacity(doc.meshes.len());
        for m in &doc.meshes {
            let (nv, nt) = (m.vertex_count, m.triangle_count);
            let positions = triples(&f32_values(&fetch(&m.positions, nv * 3, "position")?));
            let normals = triples(&f32_values(&fetch(&m.normals, nv * 3, "normal")?));
            let idx: Vec<u32> = fetch(&m.indices, nt * 3, "index")?
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let uvs = match &m.uvs {
                Some(r) => Some(
                    f32_values(&fetch(r, nv * 2, "uv")?)
                        .chunks_exact(2)
                        .map(|c| [c[0], c[1]])
                        .collect(),
                ),
                None => None,
            };
            meshes.push(SceneMesh {
                name: m.name.clone(),
                material_ref: m.material_ref.clone(),
                geometry: SceneGeometry {
                    positions,
                    indices: idx.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
                    normals,
                    uvs,
                },
            });
        }
        let mut textures = Vec::with_capacity(doc.textures.len());
        for t in &doc.textures {
            let samples = t.width as usize * t.height as usize * t.channels as usize;
            let data = f32_values(&fetch(&t.data, samples, "texture")?);
            textures.push(SceneTexture {
                id: t.id.clone(),
                image: TextureImage::new(t.width, t.height, t.channels, data)?,
            });
        }
        let out = SceneDocument {
            version: doc.version,
            meshes,
            materials: doc.materials,
            textures,
            metadata: doc.metadata,
        };
        out.validate()?;
        Ok(out)
    }

    /// Writes buffers first and the JSON last, through a rename, so a
    /// reader never sees a document whose buffers are missing.
    pub fn write_dir(&self, dir: &Path) -> Result<(), AnalysisError> {
        let (text, buffers) = self.to_parts()?;
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| AnalysisError::Io { path, source }
        };
        for (uri, bytes) in &buffers {
            let path = dir.join(uri);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(io(parent))?;
            }
            fs::write(&path, bytes).map_err(io(&path))?;
        }
        fs::create_dir_all(dir).map_err(io(dir))?;
        let tmp = dir.join(format!(".{SCENE_FILE}.tmp"));
        fs::write(&tmp, text).map_err(io(&tmp))?;
        let dst = dir.join(SCENE_FILE);
        fs::rename(&tmp, &dst).map_err(io(&dst))?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<SceneDocument, AnalysisError> {
        let path = dir.join(SCENE_FILE);
        let text = fs::read_to_string(&path).map_err(|source| AnalysisError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SceneDocument::from_parts(&text, |uri| {
            let p = dir.join(uri);
            fs::read(&p).map_err(|source| AnalysisError::Io {
                path: p.display().to_string(),
                source,
            })
        })
    }

    /// Reads a document whose buffers are held in memory, e.g. a bundle
    /// received over the network.
    pub fn from_memory(json_text: &str, buffers: &HashMap<String, Vec<u8>>) -> Result<SceneDocument, AnalysisError> {
        SceneDocument::from_parts(json_text, |uri| {
            buffers
                .get(uri)
                .cloned()
                .ok_or_else(|| schema(format!("missing buffer {uri}")))
        })
    }
}

impl SceneGeometry {
    fn validate(&self) -> Result<(), String> {
        let n = self.positions.len();
        if self.normals.len() != n {
            return Err(format!("{} normals for {n} vertices", self.normals.len()));
        }
        if self.uvs.as_ref().is_some_and(|u| u.len() != n) {
            return Err("uv count differs from vertex count".into());
        }
        let finite = |v: &[f32]| v.iter().all(|x| x.is_finite());
        if !self.positions.iter().all(|p| finite(p)) || !self.normals.iter().all(|p| finite(p)) {
            return Err("non-finite vertex attribute".into());
        }
        if let Some(i) = self.indices.iter().flatten().find(|&&i| i as usize >= n) {
            return Err(format!("index {i} out of range for {n} vertices"));
        }
        Ok(())
    }
}

fn check_uri(uri: &str) -> Result<(), AnalysisError> {
    let ok = !uri.is_empty() && Path::new(uri).components().all(|c| matches!(c, Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(schema(format!("buffer uri {uri:?} must be a relative path inside the scene")))
    }
}

fn f32_bytes<'a>(values: impl IntoIterator<Item = &'a f32>) -> Vec<u8> {
    values.into_iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn f32_values(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn triples(v: &[f32]) -> Vec<[f32; 3]> {
    v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}
