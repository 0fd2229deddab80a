//! Registry of asynchronous mesh transforms.
//!
//! A tool maps a mesh or a mesh group to a value of the same shape. Runs
//! execute on their own thread and complete through a [`ToolTask`], which
//! can be awaited or waited on. Inputs are cloned before the run, so the
//! caller's value is never touched.

use std::collections::BTreeMap;
use std::future::Future;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::pin::Pin;
use std::sync::{Arc, RwLock};
use std::task::{Context, Poll};

use futures::channel::oneshot;
use thiserror::Error;

use crate::geometry::{GeometryError, Mesh, MeshGroup};
use crate::math::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub enum Asset {
    Mesh(Mesh),
    Group(MeshGroup),
}

impl Asset {
    pub fn kind(&self) -> &'static str {
        match self {
            Asset::Mesh(_) => "mesh",
            Asset::Group(_) => "group",
        }
    }

    /// Applies a per-mesh transform, keeping the shape.
    pub fn map_meshes(&self, mut f: impl FnMut(&Mesh) -> Result<Mesh, GeometryError>) -> Result<Asset, GeometryError> {
        Ok(match self {
            Asset::Mesh(m) => Asset::Mesh(f(m)?),
            Asset::Group(g) => {
                let meshes = g.meshes().iter().map(f).collect::<Result<Vec<_>, _>>()?;
                Asset::Group(MeshGroup::new(meshes, g.metadata.clone())?)
            }
        })
    }

    fn meshes(&self) -> &[Mesh] {
        match self {
            Asset::Mesh(m) => std::slice::from_ref(m),
            Asset::Group(g) => g.meshes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accepts {
    Mesh,
    Group,
    Both,
}

impl Accepts {
    fn allows(self, asset: &Asset) -> bool {
        matches!(
            (self, asset),
            (Accepts::Both, _) | (Accepts::Mesh, Asset::Mesh(_)) | (Accepts::Group, Asset::Group(_))
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolError {
    #[error("tool {0:?} is already registered")]
    Duplicate(String),
    #[error("no tool registered as {0:?}")]
    NotFound(String),
    #[error("tool {id:?} does not accept a {kind}")]
    Unsupported { id: String, kind: &'static str },
    #[error("tool {id:?} failed: {message}")]
    Failed { id: String, message: String },
    #[error("tool {id:?} returned a {got} for a {expected} input")]
    TypeMismatch {
        id: String,
        expected: &'static str,
        got: &'static str,
    },
    #[error("tool {0:?} was dropped before completing")]
    Canceled(String),
}

pub trait AnalysisTool: Send + Sync {
    fn id(&self) -> &str;

    fn accepts(&self) -> Accepts {
        Accepts::Both
    }

    /// The transform itself. Errors are reported as messages; the registry
    /// wraps them together with the tool id.
    fn apply(&self, input: &Asset) -> Result<Asset, String>;
}

/// Pending result of [`ToolRegistry::run_tool`].
pub struct ToolTask {
    id: String,
    rx: oneshot::Receiver<Result<Asset, ToolError>>,
}

impl ToolTask {
    /// Blocks the calling thread until the tool finishes.
    pub fn wait(self) -> Result<Asset, ToolError> {
        futures::executor::block_on(self)
    }
}

impl Future for ToolTask {
    type Output = Result<Asset, ToolError>;

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<Self::Output> {
        match Pin::new(&mut self.rx).poll(cx) {
            Poll::Ready(Ok(r)) => Poll::Ready(r),
            Poll::Ready(Err(_)) => Poll::Ready(Err(ToolError::Canceled(self.id.clone()))),
            Poll::Pending => Poll::Pending,
        }
    }
}

fn execute(tool: &dyn AnalysisTool, input: &Asset) -> Result<Asset, ToolError> {
    let id = tool.id().to_string();
    let out = catch_unwind(AssertUnwindSafe(|| tool.apply(input)))
        .map_err(|panic| {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panicked".into());
            ToolError::Failed {
                id: id.clone(),
                message,
            }
        })?
        .map_err(|message| ToolError::Failed { id: id.clone(), message })?;
    if out.kind() != input.kind() {
        return Err(ToolError::TypeMismatch {
            id,
            expected: input.kind(),
            got: out.kind(),
        });
    }
    Ok(out)
}

#[derive(Default)]
pub struct ToolRegistry {
    tools: RwLock<BTreeMap<String, Arc<dyn AnalysisTool>>>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding the identity, centering and normal tools.
    pub fn with_builtins() -> Self {
        let r = Self::new();
        for t in [
            Arc::new(IdentityTool) as Arc<dyn AnalysisTool>,
            Arc::new(CenterAtCentroid),
            Arc::new(GenerateNormals),
        ] {
            r.register(t).expect("builtin ids are distinct");
        }
        r
    }

    pub fn register(&self, tool: Arc<dyn AnalysisTool>) -> Result<(), ToolError> {
        let mut tools = self.tools.write().unwrap_or_else(|e| e.into_inner());
        let id = tool.id().to_string();
        if tools.contains_key(&id) {
            return Err(ToolError::Duplicate(id));
        }
        tools.insert(id, tool);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<Arc<dyn AnalysisTool>> {
        self.tools.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        self.tools.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }

    /// Starts `id` on a background thread with a copy of `input`.
    pub fn run_tool(&self, id: &str, input: &Asset) -> Result<ToolTask, ToolError> {
        let tool = self.get(id).ok_or_else(|| ToolError::NotFound(id.to_string()))?;
        if !tool.accepts().allows(input) {
            return Err(ToolError::Unsupported {
                id: id.to_string(),
                kind: input.kind(),
            });
        }
        let (tx, rx) = oneshot::channel();
        let owned = input.clone();
        std::thread::Builder::new()
            .name(format!("tool-{id}"))
            .spawn(move || {
                let _ = tx.send(execute(tool.as_ref(), &owned));
            })
            .map_err(|e| ToolError::Failed {
                id: id.to_string(),
                message: format!("could not start worker: {e}"),
            })?;
        Ok(ToolTask { id: id.to_string(), rx })
    }
}

pub struct IdentityTool;

impl AnalysisTool for IdentityTool {
    fn id(&self) -> &str {
        "identity"
    }

    fn apply(&self, input: &Asset) -> Result<Asset, String> {
        Ok(input.clone())
    }
}

/// Translates the asset so the mean of all its vertices sits at the origin.
pub struct CenterAtCentroid;

impl AnalysisTool for CenterAtCentroid {
    fn id(&self) -> &str {
        "center"
    }

    fn apply(&self, input: &Asset) -> Result<Asset, String> {
        let (sum, n) = input
            .meshes()
            .iter()
            .flat_map(|m| m.vertices())
            .fold((Vec3::ZERO, 0usize), |(s, n), v| (s + *v, n + 1));
        if n == 0 {
            return Err("asset has no vertices".into());
        }
        let c = sum / n as f64;
        input
            .map_meshes(|m| m.transformed(|v| v - c))
            .map_err(|e| e.to_string())
    }
}

/// Replaces vertex normals with area-weighted face-normal averages.
pub struct GenerateNormals;

impl AnalysisTool for GenerateNormals {
    fn id(&self) -> &str {
        "normals"
    }

    fn apply(&self, input: &Asset) -> Result<Asset, String> {
        input
            .map_meshes(|m| {
                let mut out = m.clone();
                out.set_normals(Some(m.area_weighted_normals()))?;
                Ok(out)
            })
            .map_err(|e| e.to_string())
    }
}

/// Runs its stages in order, feeding each output to the next.
pub struct ComposedTool {
    id: String,
    stages: Vec<Arc<dyn AnalysisTool>>,
}

impl ComposedTool {
    pub fn new(id: impl Into<String>, stages: Vec<Arc<dyn AnalysisTool>>) -> Self {
        ComposedTool { id: id.into(), stages }
    }
}

impl AnalysisTool for ComposedTool {
    fn id(&self) -> &str {
        &self.id
    }

    fn accepts(&self) -> Accepts {
        self.stages.first().map_or(Accepts::Both, |s| s.accepts())
    }

    fn apply(&self, input: &Asset) -> Result<Asset, String> {
        let mut cur = input.clone();
        for s in &self.stages {
            if !s.accepts().allows(&cur) {
                return Err(format!("stage {:?} does not accept a {}", s.id(), cur.kind()));
            }
            cur = execute(s.as_ref(), &cur).map_err(|e| e.to_string())?;
        }
        Ok(cur)
    }
}
