//! Persisted record types and their wire forms.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use relic_core::{CameraPose, MaterialParams, Metadata, PointLight, SurfacePoint};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetKind {
    Scene,
    Texture,
    Ptm,
    Raw,
}

impl AssetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AssetKind::Scene => "scene",
            AssetKind::Texture => "texture",
            AssetKind::Ptm => "ptm",
            AssetKind::Raw => "raw",
        }
    }
}

impl fmt::Display for AssetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "scene" => Ok(AssetKind::Scene),
            "texture" => Ok(AssetKind::Texture),
            "ptm" => Ok(AssetKind::Ptm),
            "raw" => Ok(AssetKind::Raw),
            other => Err(format!(
                "unknown asset kind {other:?}; expected scene, texture, ptm or raw"
            )),
        }
    }
}

/// Encoding of the bytes held in the blob store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ContentEncoding {
    #[default]
    None,
    Gzip,
}

/// An uploaded asset. `digest` and `size` describe the decoded bytes a
/// client receives; `stored_digest` keys the blob store and differs from
/// `digest` only when the blob is kept gzip-compressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub id: String,
    pub kind: AssetKind,
    pub digest: String,
    pub size: u64,
    pub content_encoding: ContentEncoding,
    pub stored_digest: String,
    pub stored_size: u64,
    pub metadata: Metadata,
    pub created_at: u64,
}

impl AssetRecord {
    /// Triangle count recorded in metadata, used to bound annotation anchors.
    pub fn triangle_count(&self) -> Option<u64> {
        self.metadata.get("triangle_count").and_then(|v| v.as_u64())
    }
}

/// Shader selection carried in a session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveShader {
    pub id: String,
    #[serde(default)]
    pub uniforms: BTreeMap<String, serde_json::Value>,
}

/// What the presenter is looking at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub camera: CameraPose,
    #[serde(default)]
    pub lights: Vec<PointLight>,
    #[serde(default)]
    pub material: MaterialParams,
    #[serde(default)]
    pub active_shader: Option<ActiveShader>,
    #[serde(default)]
    pub active_annotation: Option<String>,
    pub seq: u64,
}

impl SessionState {
    pub fn validate(&self) -> Result<(), String> {
        self.camera.validate().map_err(|e| e.to_string())?;
        for l in &self.lights {
            l.validate().map_err(|e| e.to_string())?;
        }
        validate_material(&self.material)
    }
}

fn validate_material(m: &MaterialParams) -> Result<(), String> {
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    if !m.base_color.is_finite() || !unit(m.metalness) || !unit(m.roughness) || !m.normal_scale.is_finite() {
        return Err("material parameters out of range".into());
    }
    Ok(())
}

/// The subset of a session state stored with an annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PartialSessionState {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraPose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lights: Option<Vec<PointLight>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_shader: Option<ActiveShader>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_annotation: Option<String>,
}

impl PartialSessionState {
    pub fn validate(&self) -> Result<(), String> {
        if let Some(c) = &self.camera {
            c.validate().map_err(|e| e.to_string())?;
        }
        for l in self.lights.iter().flatten() {
            l.validate().map_err(|e| e.to_string())?;
        }
        if let Some(m) = &self.material {
            validate_material(m)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub asset_id: String,
    pub anchor: SurfacePoint,
    pub title: String,
    pub body: String,
    pub media_refs: Vec<String>,
    pub order_index: u64,
    pub persisted_state: Option<PartialSessionState>,
    pub created_at: u64,
    pub revision: u64,
}

/// Request body for creating an annotation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationDraft {
    pub anchor: SurfacePoint,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub media_refs: Vec<String>,
    pub order_index: i64,
    #[serde(default)]
    pub persisted_state: Option<PartialSessionState>,
}

/// Request body for updating an annotation; absent fields are unchanged
/// and `persisted_state: null` clears the stored state.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationPatch {
    #[serde(default)]
    pub anchor: Option<SurfacePoint>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub media_refs: Option<Vec<String>>,
    #[serde(default)]
    pub order_index: Option<i64>,
    #[serde(default, with = "double_option", skip_serializing_if = "Option::is_none")]
    pub persisted_state: Option<Option<PartialSessionState>>,
}

mod double_option {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize, S: Serializer>(v: &Option<Option<T>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(inner) => inner.serialize(s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<Option<Option<T>>, D::Error> {
        Option::<T>::deserialize(d).map(Some)
    }
}

/// Request body for saving a story. Supplying the `id` of an existing story
/// saves a new revision of it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryDraft {
    #[serde(default)]
    pub id: Option<String>,
    pub asset_id: String,
    pub stops: Vec<String>,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub author: String,
}

/// One immutable revision of a story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryDocument {
    pub id: String,
    pub revision: u64,
    pub asset_id: String,
    pub stops: Vec<String>,
    pub title: String,
    pub author: String,
    pub created_at: u64,
}

/// Result of checking that every asset record has an intact blob.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub assets: usize,
    pub missing: Vec<String>,
    pub corrupt: Vec<String>,
    pub ok: bool,
}

pub(crate) fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
