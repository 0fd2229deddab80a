//! Analysis tools: conversion to the scene document, multispectral PCA and
//! the asynchronous tool registry.

mod pca;
mod scene;
mod tools;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::imaging::ImagingError;

pub use pca::{pca_bands, MultispectralStack, PcaResult, Rescale};
pub use scene::{
    convert_asset, BufferRef, Provenance, SceneDocument, SceneGeometry, SceneMaterial, SceneMesh, SceneTexture,
    DEFAULT_MATERIAL, SCENE_FILE, SCENE_VERSION, TEXTURE_ROLES,
};
pub use tools::{
    Accepts, AnalysisTool, Asset, CenterAtCentroid, ComposedTool, GenerateNormals, IdentityTool, ToolError,
    ToolRegistry, ToolTask,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown texture role {role:?}; allowed roles are {}", TEXTURE_ROLES.join(", "))]
    UnknownRole { role: String },
    #[error("invalid scene document: {0}")]
    Schema(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
