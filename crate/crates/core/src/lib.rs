//! Compute core for viewing and analyzing digitized cultural-heritage
//! artifacts: mesh ingestion and metering, reference implementations of the
//! relighting and image-space shading techniques, and the analysis-tool
//! pipeline (scene conversion, multispectral PCA).

// Domain checks are written `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod geometry;
pub mod imaging;
pub mod math;
mod par;

pub use geometry::{CameraPose, GeometryError, Mesh, MeshGroup, Metadata, SurfacePoint, Viewport};
pub use imaging::{ImagingError, MaterialParams, PointLight, TextureImage};
pub use math::{Quat, Vec3};
