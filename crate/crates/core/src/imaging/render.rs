//! Z-buffered reference rasterizer with the simplified relighting model:
//!
//! ```text
//! diffuse  = base_color · Σ colorᵢ·intensityᵢ·max(0, n·lᵢ) · (1 − 0.5·metalness)
//! specular = metalness · Σ colorᵢ·intensityᵢ·max(0, n·hᵢ)^e      (only where n·lᵢ > 0)
//! e        = clamp(2/roughness⁴ − 2, 0, 10⁴)
//! ```
//!
//! Normals are interpolated per vertex (face normals when the mesh has none)
//! and flipped toward the viewer, so open scans shade from both sides. Depth
//! is normalized device depth in [0, 1] with background 1.

use super::{ImagingError, MaterialParams, PointLight, TextureImage};
use crate::geometry::{CameraPose, MeshGroup, Viewport};
use crate::math::Vec3;
use crate::par;

const MAX_SHININESS: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    /// RGB, clamped to [0, 1].
    pub color: TextureImage,
    /// One channel, [0, 1], background = 1.
    pub depth: TextureImage,
}

#[derive(Clone, Copy)]
struct ClipVertex {
    view: Vec3,
    world: Vec3,
    normal: Vec3,
}

impl ClipVertex {
    fn lerp(&self, o: &ClipVertex, t: f64) -> ClipVertex {
        ClipVertex {
            view: self.view.lerp(o.view, t),
            world: self.world.lerp(o.world, t),
            normal: self.normal.lerp(o.normal, t),
        }
    }
}

struct Prepared {
    screen: [(f64, f64); 3],
    depth: [f64; 3],
    inv_w: [f64; 3],
    world: [Vec3; 3],
    normal: [Vec3; 3],
    area: f64,
    x_range: (u32, u32),
    y_range: (u32, u32),
}

fn shininess(roughness: f64) -> f64 {
    if roughness <= 0.0 {
        return MAX_SHININESS;
    }
    (2.0 / roughness.powi(4) - 2.0).clamp(0.0, MAX_SHININESS)
}

/// Clips a polygon against the near plane (`-z >= near`).
fn clip_near(poly: &[ClipVertex], near: f64) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        let da = -a.view.z - near;
        let db = -b.view.z - near;
        if da >= 0.0 {
            out.push(*a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            out.push(a.lerp(b, da / (da - db)));
        }
    }
    out
}

fn prepare(
    group: &MeshGroup,
    camera: &CameraPose,
    viewport: Viewport,
) -> Vec<Prepared> {
    let aspect = viewport.aspect();
    let (wf, hf) = (viewport.width as f64, viewport.height as f64);
    let mut out = Vec::new();
    for mesh in group.meshes() {
        for (face, tri) in mesh.indices().iter().enumerate() {
            let face_n = mesh.face_cross(face).normalize_or_zero();
            let corners: Vec<ClipVertex> = tri
                .iter()
                .map(|&i| {
                    let world = mesh.vertices()[i as usize];
                    ClipVertex {
                        view: camera.to_view(world),
                        world,
                        normal: mesh.normals().map_or(face_n, |n| n[i as usize]),
                    }
                })
                .collect();
            let poly = clip_near(&corners, camera.near);
            if poly.len() < 3 {
                continue;
            }
            let projected: Vec<(f64, f64, f64, f64)> = poly
                .iter()
                .map(|v| {
                    let ndc = camera
                        .view_to_ndc(v.view, aspect)
                        .unwrap_or(Vec3::new(0.0, 0.0, 2.0));
                    (
                        (ndc.x + 1.0) * 0.5 * wf,
                        (1.0 - ndc.y) * 0.5 * hf,
                        ndc.z,
                        1.0 / (-v.view.z),
                    )
                })
                .collect();
            for k in 1..poly.len() - 1 {
                let ids = [0, k, k + 1];
                let s = ids.map(|i| (projected[i].0, projected[i].1));
                let area = (s[1].0 - s[0].0) * (s[2].1 - s[0].1) - (s[2].0 - s[0].0) * (s[1].1 - s[0].1);
                if area.abs() < 1e-14 || !area.is_finite() {
                    continue;
                }
                let xs = s.map(|p| p.0);
                let ys = s.map(|p| p.1);
                let lo = |v: [f64; 3], max: f64| v.iter().copied().fold(f64::INFINITY, f64::min).floor().clamp(0.0, max);
                let hi = |v: [f64; 3], max: f64| v.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil().clamp(0.0, max);
                let x_range = (lo(xs, wf) as u32, hi(xs, wf) as u32);
                let y_range = (lo(ys, hf) as u32, hi(ys, hf) as u32);
                if x_range.0 >= x_range.1 || y_range.0 >= y_range.1 {
                    continue;
                }
                out.push(Prepared {
                    screen: s,
                    depth: ids.map(|i| projected[i].2),
                    inv_w: ids.map(|i| projected[i].3),
                    world: ids.map(|i| poly[i].world),
                    normal: ids.map(|i| poly[i].normal),
                    area,
                    x_range,
                    y_range,
                });
            }
        }
    }
    out
}

fn validate(
    camera: &CameraPose,
    lights: &[PointLight],
    viewport: Viewport,
) -> Result<(), ImagingError> {
    viewport.validate()?;
    camera.validate()?;
    if lights.is_empty() {
        return Err(ImagingError::Domain("at least one light is required".into()));
    }
    lights.iter().try_for_each(PointLight::validate)
}

/// Renders unclamped linear radiance plus depth. Radiance is linear in the
/// light intensities.
pub fn render_radiance(
    meshes: &MeshGroup,
    camera: &CameraPose,
    lights: &[PointLight],
    material: &MaterialParams,
    viewport: Viewport,
) -> Result<(TextureImage, TextureImage), ImagingError> {
    validate(camera, lights, viewport)?;
    let material = material.clamped();
    let tris = prepare(meshes, camera, viewport);
    let (w, h) = (viewport.width as usize, viewport.height as usize);
    let exponent = shininess(material.roughness);
    let diffuse_weight = 1.0 - 0.5 * material.metalness;

    // Each row holds w RGB radiance samples followed by w depth samples.
    let stride = w * 4;
    let mut buf = vec![0.0f32; stride * h];
    par::for_each_row(&mut buf, stride, |y, row| {
        let (rgb, depth_row) = row.split_at_mut(w * 3);
        depth_row.iter_mut().for_each(|d| *d = 1.0);
        let mut zbuf = vec![1.0f64; w];
        let mut winner: Vec<Option<(usize, [f64; 3])>> = vec![None; w];
        let py = y as f64 + 0.5;
        for (t, tri) in tris.iter().enumerate() {
            if (y as u32) < tri.y_range.0 || (y as u32) >= tri.y_range.1 {
                continue;
            }
            let [a, b, c] = tri.screen;
            for x in tri.x_range.0..tri.x_range.1 {
                let px = x as f64 + 0.5;
                let w0 = ((b.0 - px) * (c.1 - py) - (c.0 - px) * (b.1 - py)) / tri.area;
                let w1 = ((c.0 - px) * (a.1 - py) - (a.0 - px) * (c.1 - py)) / tri.area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = w0 * tri.depth[0] + w1 * tri.depth[1] + w2 * tri.depth[2];
                if !(0.0..1.0).contains(&z) || z >= zbuf[x as usize] {
                    continue;
                }
                zbuf[x as usize] = z;
                winner[x as usize] = Some((t, [w0, w1, w2]));
            }
        }
        for x in 0..w {
            let Some((t, bary)) = winner[x] else {
                continue;
            };
            let tri = &tris[t];
            depth_row[x] = zbuf[x] as f32;
            let pw: [f64; 3] = std::array::from_fn(|i| bary[i] * tri.inv_w[i]);
            let norm = pw[0] + pw[1] + pw[2];
            let pc = pw.map(|v| v / norm);
            let p = tri.world[0] * pc[0] + tri.world[1] * pc[1] + tri.world[2] * pc[2];
            let mut n = (tri.normal[0] * pc[0] + tri.normal[1] * pc[1] + tri.normal[2] * pc[2])
                .normalize_or_zero();
            let view = (camera.position - p).normalize_or_zero();
            if n.dot(view) < 0.0 {
                n = -n;
            }
            let mut diffuse = Vec3::ZERO;
            let mut specular = Vec3::ZERO;
            for light in lights {
                let l = (light.position - p).normalize_or_zero();
                let ndl = n.dot(l);
                if ndl <= 0.0 {
                    continue;
                }
                let radiance = light.color * light.intensity;
                diffuse += radiance * ndl;
                if material.metalness > 0.0 {
                    let half = (l + view).normalize_or_zero();
                    specular += radiance * n.dot(half).max(0.0).powf(exponent);
                }
            }
            let out = material.base_color.mul_elem(diffuse) * diffuse_weight
                + specular * material.metalness;
            rgb[x * 3] = out.x as f32;
            rgb[x * 3 + 1] = out.y as f32;
            rgb[x * 3 + 2] = out.z as f32;
        }
    });

    let mut color = Vec::with_capacity(w * h * 3);
    let mut depth = Vec::with_capacity(w * h);
    for row in buf.chunks_exact(stride) {
        color.extend_from_slice(&row[..w * 3]);
        depth.extend_from_slice(&row[w * 3..]);
    }
    Ok((
        TextureImage::new(viewport.width, viewport.height, 3, color)?,
        TextureImage::new(viewport.width, viewport.height, 1, depth)?,
    ))
}

/// Renders the group and clamps color to [0, 1].
pub fn render_reference(
    meshes: &MeshGroup,
    camera: &CameraPose,
    lights: &[PointLight],
    material: &MaterialParams,
    viewport: Viewport,
) -> Result<Rendered, ImagingError> {
    let (radiance, depth) = render_radiance(meshes, camera, lights, material, viewport)?;
    let data = radiance.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(Rendered {
        color: TextureImage::new(viewport.width, viewport.height, 3, data)?,
        depth,
    })
}
