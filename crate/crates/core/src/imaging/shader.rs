//! Declarative shader descriptors: uniforms plus the UI group the viewer
//! builds its control panel from. Program source is keyed by `id` and lives
//! with the viewer.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShaderError {
    #[error("duplicate component name {0:?}")]
    DuplicateName(String),
    #[error("component {component:?} binds unknown uniform {binding:?}")]
    UnknownBinding { component: String, binding: String },
    #[error("uniform {0:?} is bound by no component")]
    Unbound(String),
    #[error("uniform {0:?} is bound by more than one component")]
    MultiplyBound(String),
    #[error("component {component:?}: {message}")]
    InvalidProps { component: String, message: String },
    #[error("uniform {uniform:?}: {message}")]
    InvalidUniform { uniform: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UniformType {
    Float,
    Int,
    Bool,
    /// RGB triple in [0, 1].
    Color,
    /// One of a fixed list of strings.
    Enum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uniform {
    #[serde(rename = "type")]
    pub ty: UniformType,
    pub default: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentKind {
    RangeSlider,
    ColorPicker,
    Toggle,
    Select,
    /// Anything this version does not know; viewers show a placeholder.
    #[serde(other)]
    Unknown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentProps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UIComponent {
    pub name: String,
    pub kind: ComponentKind,
    #[serde(default)]
    pub props: ComponentProps,
    pub binding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UIGroup {
    pub name: String,
    pub components: Vec<UIComponent>,
}

impl UIGroup {
    /// Structural checks that need no uniforms: unique names and slider ranges.
    pub fn validate(&self) -> Result<(), ShaderError> {
        let mut seen = BTreeSet::new();
        for c in &self.components {
            if !seen.insert(c.name.as_str()) {
                return Err(ShaderError::DuplicateName(c.name.clone()));
            }
            if c.kind == ComponentKind::RangeSlider {
                check_slider(c)?;
            }
            if c.kind == ComponentKind::Unknown {
                log::warn!("component {:?} has an unknown kind", c.name);
            }
        }
        Ok(())
    }
}

fn check_slider(c: &UIComponent) -> Result<(), ShaderError> {
    let err = |message: String| ShaderError::InvalidProps {
        component: c.name.clone(),
        message,
    };
    let (Some(min), Some(max), Some(step)) = (c.props.min, c.props.max, c.props.step) else {
        return Err(err("range slider needs min, max and step".into()));
    };
    if !(min < max) {
        return Err(err(format!("min {min} must be below max {max}")));
    }
    if !(step > 0.0 && step <= max - min) {
        return Err(err(format!("step {step} must be in (0, {}]", max - min)));
    }
    if let Some(d) = c.props.default.as_ref() {
        match d.as_f64() {
            Some(v) if (min..=max).contains(&v) => {}
            _ => return Err(err(format!("default {d} outside [{min}, {max}]"))),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShaderDescriptor {
    pub id: String,
    pub uniforms: BTreeMap<String, Uniform>,
    pub ui: UIGroup,
}

impl ShaderDescriptor {
    /// Full validation: group structure, uniform defaults, and a total
    /// one-to-one binding between components and uniforms.
    pub fn validate(&self) -> Result<(), ShaderError> {
        self.ui.validate()?;
        for (name, u) in &self.uniforms {
            check_uniform(name, u)?;
        }
        let mut bound: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &self.ui.components {
            let Some(u) = self.uniforms.get(&c.binding) else {
                return Err(ShaderError::UnknownBinding {
                    component: c.name.clone(),
                    binding: c.binding.clone(),
                });
            };
            let compatible = match c.kind {
                ComponentKind::RangeSlider => matches!(u.ty, UniformType::Float | UniformType::Int),
                ComponentKind::ColorPicker => u.ty == UniformType::Color,
                ComponentKind::Toggle => u.ty == UniformType::Bool,
                ComponentKind::Select => u.ty == UniformType::Enum,
                ComponentKind::Unknown => true,
            };
            if !compatible {
                return Err(ShaderError::InvalidProps {
                    component: c.name.clone(),
                    message: format!("{:?} cannot drive a {:?} uniform", c.kind, u.ty),
                });
            }
            *bound.entry(c.binding.as_str()).or_default() += 1;
        }
        for name in self.uniforms.keys() {
            match bound.get(name.as_str()) {
                None => return Err(ShaderError::Unbound(name.clone())),
                Some(&n) if n > 1 => return Err(ShaderError::MultiplyBound(name.clone())),
                _ => {}
            }
        }
        Ok(())
    }

    /// Initial uniform values, keyed by uniform name.
    pub fn defaults(&self) -> BTreeMap<String, Value> {
        self.uniforms
            .iter()
            .map(|(k, u)| (k.clone(), u.default.clone()))
            .collect()
    }
}

fn check_uniform(name: &str, u: &Uniform) -> Result<(), ShaderError> {
    let err = |message: String| ShaderError::InvalidUniform {
        uniform: name.to_string(),
        message,
    };
    let ok = match u.ty {
        UniformType::Float => u.default.as_f64().is_some(),
        UniformType::Int => u.default.as_i64().is_some(),
        UniformType::Bool => u.default.is_boolean(),
        UniformType::Color => u
            .default
            .as_array()
            .is_some_and(|a| a.len() == 3 && a.iter().all(|v| v.as_f64().is_some_and(|f| (0.0..=1.0).contains(&f)))),
        UniformType::Enum => {
            let opts = u.options.as_deref().unwrap_or_default();
            u.default.as_str().is_some_and(|s| opts.iter().any(|o| o == s))
        }
    };
    if !ok {
        return Err(err(format!("default {} does not fit type {:?}", u.default, u.ty)));
    }
    if let (Some(v), Some(min), Some(max)) = (u.default.as_f64(), u.min, u.max) {
        if !(min < max && (min..=max).contains(&v)) {
            return Err(err(format!("default {v} outside [{min}, {max}]")));
        }
    }
    Ok(())
}

fn float(default: f64, min: f64, max: f64) -> Uniform {
    Uniform {
        ty: UniformType::Float,
        default: json!(default),
        min: Some(min),
        max: Some(max),
        options: None,
    }
}

fn slider(name: &str, binding: &str, min: f64, max: f64, step: f64, default: f64) -> UIComponent {
    UIComponent {
        name: name.into(),
        kind: ComponentKind::RangeSlider,
        props: ComponentProps {
            min: Some(min),
            max: Some(max),
            step: Some(step),
            default: Some(json!(default)),
            options: None,
        },
        binding: binding.into(),
    }
}

fn color(default: [f64; 3]) -> Uniform {
    Uniform {
        ty: UniformType::Color,
        default: json!(default),
        min: None,
        max: None,
        options: None,
    }
}

fn picker(name: &str, binding: &str, default: [f64; 3]) -> UIComponent {
    UIComponent {
        name: name.into(),
        kind: ComponentKind::ColorPicker,
        props: ComponentProps {
            default: Some(json!(default)),
            ..ComponentProps::default()
        },
        binding: binding.into(),
    }
}

/// Eye-dome lighting: `intensity` is the strength, `radius` the neighbor offset.
pub fn edl_descriptor() -> ShaderDescriptor {
    let uniforms = BTreeMap::from([
        ("intensity".to_string(), float(1.0, 0.0, 4.0)),
        (
            "radius".to_string(),
            Uniform {
                ty: UniformType::Int,
                default: json!(1),
                min: Some(1.0),
                max: Some(8.0),
                options: None,
            },
        ),
    ]);
    ShaderDescriptor {
        id: "edl".into(),
        uniforms,
        ui: UIGroup {
            name: "EDL".into(),
            components: vec![
                slider("intensity", "intensity", 0.0, 4.0, 0.1, 1.0),
                slider("radius", "radius", 1.0, 8.0, 1.0, 1.0),
            ],
        },
    }
}

pub fn chroma_descriptor() -> ShaderDescriptor {
    let uniforms = BTreeMap::from([
        ("key".to_string(), color([0.0, 1.0, 0.0])),
        ("replacement".to_string(), color([0.0, 0.0, 0.0])),
        ("tolerance".to_string(), float(0.1, 0.0, 1.75)),
        ("ratio".to_string(), float(1.0, 0.0, 1.0)),
    ]);
    ShaderDescriptor {
        id: "chroma".into(),
        uniforms,
        ui: UIGroup {
            name: "Chroma key".into(),
            components: vec![
                picker("key color", "key", [0.0, 1.0, 0.0]),
                picker("replacement color", "replacement", [0.0, 0.0, 0.0]),
                slider("tolerance", "tolerance", 0.0, 1.75, 0.01, 0.1),
                slider("ratio", "ratio", 0.0, 1.0, 0.01, 1.0),
            ],
        },
    }
}

pub fn curtain_descriptor() -> ShaderDescriptor {
    let axes = vec!["horizontal".to_string(), "vertical".to_string()];
    let uniforms = BTreeMap::from([
        (
            "axis".to_string(),
            Uniform {
                ty: UniformType::Enum,
                default: json!("horizontal"),
                min: None,
                max: None,
                options: Some(axes.clone()),
            },
        ),
        ("position".to_string(), float(0.5, 0.0, 1.0)),
        (
            "enabled".to_string(),
            Uniform {
                ty: UniformType::Bool,
                default: json!(true),
                min: None,
                max: None,
                options: None,
            },
        ),
    ]);
    ShaderDescriptor {
        id: "curtain".into(),
        uniforms,
        ui: UIGroup {
            name: "Curtain view".into(),
            components: vec![
                UIComponent {
                    name: "axis".into(),
                    kind: ComponentKind::Select,
                    props: ComponentProps {
                        default: Some(json!("horizontal")),
                        options: Some(axes),
                        ..ComponentProps::default()
                    },
                    binding: "axis".into(),
                },
                slider("position", "position", 0.0, 1.0, 0.01, 0.5),
                UIComponent {
                    name: "enabled".into(),
                    kind: ComponentKind::Toggle,
                    props: ComponentProps {
                        default: Some(json!(true)),
                        ..ComponentProps::default()
                    },
                    binding: "enabled".into(),
                },
            ],
        },
    }
}

pub fn builtin_descriptors() -> Vec<ShaderDescriptor> {
    vec![edl_descriptor(), chroma_descriptor(), curtain_descriptor()]
}
