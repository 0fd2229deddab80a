use serde::{Deserialize, Serialize};

use super::{GeometryError, Mesh, SurfacePoint};
use crate::math::{Quat, Vec3};

/// Pixel dimensions of a render target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Viewport {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::Domain(format!(
                "zero-area viewport {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Perspective camera. Looks down its local -Z axis with +Y up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    pub orientation: Quat,
    /// Vertical field of view in degrees.
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for CameraPose {
    fn default() -> Self {
        CameraPose {
            position: Vec3::new(0.0, 0.0, 2.0),
            orientation: Quat::IDENTITY,
            fov_y: 50.0,
            near: 0.01,
            far: 100.0,
        }
    }
}

impl CameraPose {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fov_y > 0.0 && self.fov_y < 180.0) {
            return Err(GeometryError::Domain(format!(
                "field of view {} outside (0, 180) degrees",
                self.fov_y
            )));
        }
        if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(GeometryError::Domain(format!(
                "invalid clip range near={} far={}",
                self.near, self.far
            )));
        }
        if !self.position.is_finite() || !self.orientation.is_finite() {
            return Err(GeometryError::Domain("camera pose is not finite".into()));
        }
        if (self.orientation.norm() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::Domain(format!(
                "orientation norm {} is not 1",
                self.orientation.norm()
            )));
        }
        Ok(())
    }

    /// Camera placed at `eye` looking at `target`; `up` need not be exact.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y: f64, near: f64, far: f64) -> Self {
        let forward = (target - eye).normalize_or_zero();
        let right = forward.cross(up).normalize_or_zero();
        let true_up = right.cross(forward);
        // Columns of the camera-to-world rotation are right, up, -forward.
        let m = [
            [right.x, true_up.x, -forward.x],
            [right.y, true_up.y, -forward.y],
            [right.z, true_up.z, -forward.z],
        ];
        CameraPose {
            position: eye,
            orientation: quat_from_matrix(m),
            fov_y,
            near,
            far,
        }
    }

    pub fn forward(&self) -> Vec3 {
        self.orientation.rotate(-Vec3::Z)
    }

    /// World point into camera space.
    pub fn to_view(&self, p: Vec3) -> Vec3 {
        self.orientation.conjugate().rotate(p - self.position)
    }

    fn focal(&self) -> f64 {
        1.0 / (self.fov_y.to_radians() * 0.5).tan()
    }

    /// Maps a camera-space point to normalized device coordinates, with the
    /// depth component remapped to [0, 1]. `None` if the point is not in
    /// front of the camera.
    pub fn view_to_ndc(&self, v: Vec3, aspect: f64) -> Option<Vec3> {
        let w = -v.z;
        if w <= 0.0 {
            return None;
        }
        let f = self.focal();
        let (n, fa) = (self.near, self.far);
        let z_clip = -(fa + n) / (fa - n) * v.z - 2.0 * fa * n / (fa - n);
        Some(Vec3::new(
            f / aspect * v.x / w,
            f * v.y / w,
            (z_clip / w + 1.0) * 0.5,
        ))
    }

    /// World-space ray through continuous screen coordinates (origin top-left).
    pub fn ray(&self, viewport: Viewport, screen: (f64, f64)) -> (Vec3, Vec3) {
        let ndc_x = 2.0 * screen.0 / viewport.width as f64 - 1.0;
        let ndc_y = 1.0 - 2.0 * screen.1 / viewport.height as f64;
        let f = self.focal();
        let dir_cam = Vec3::new(ndc_x * viewport.aspect() / f, ndc_y / f, -1.0);
        (
            self.position,
            self.orientation.rotate(dir_cam).normalize_or_zero(),
        )
    }
}

fn quat_from_matrix(m: [[f64; 3]; 3]) -> Quat {
    let trace = m[0][0] + m[1][1] + m[2][2];
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        Quat::new(
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
            0.25 * s,
        )
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        Quat::new(
            0.25 * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[2][1] - m[1][2]) / s,
        )
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        Quat::new(
            (m[0][1] + m[1][0]) / s,
            0.25 * s,
            (m[1][2] + m[2][1]) / s,
            (m[0][2] - m[2][0]) / s,
        )
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        Quat::new(
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            0.25 * s,
            (m[1][0] - m[0][1]) / s,
        )
    };
    q.normalize()
}

/// Projects a world point to screen pixels plus [0, 1] depth.
pub fn project(camera: &CameraPose, viewport: Viewport, point: Vec3) -> Option<(f64, f64, f64)> {
    let ndc = camera.view_to_ndc(camera.to_view(point), viewport.aspect())?;
    Some((
        (ndc.x + 1.0) * 0.5 * viewport.width as f64,
        (1.0 - ndc.y) * 0.5 * viewport.height as f64,
        ndc.z,
    ))
}

/// Unprojects a click and returns the nearest front-facing hit within the
/// camera's clip range.
pub fn pick(
    mesh: &Mesh,
    camera: &CameraPose,
    viewport: Viewport,
    screen: (f64, f64),
) -> Result<Option<SurfacePoint>, GeometryError> {
    camera.validate()?;
    viewport.validate()?;
    let (sx, sy) = screen;
    if !(sx >= 0.0 && sy >= 0.0 && sx <= viewport.width as f64 && sy <= viewport.height as f64) {
        return Err(GeometryError::Domain(format!(
            "screen point ({sx}, {sy}) outside {}x{} viewport",
            viewport.width, viewport.height
        )));
    }
    let (origin, dir) = camera.ray(viewport, screen);
    let along = dir.dot(camera.forward());

    let mut best: Option<(f64, usize, f64, f64)> = None;
    for face in 0..mesh.triangle_count() {
        let [v0, v1, v2] = mesh.triangle(face);
        let Some((t, u, v)) = intersect_front(origin, dir, v0, v1, v2) else {
            continue;
        };
        let depth = t * along;
        if depth < camera.near || depth > camera.far {
            continue;
        }
        if best.is_none_or(|(bt, ..)| t < bt) {
            best = Some((t, face, u, v));
        }
    }

    Ok(best.map(|(_, face, u, v)| {
        let bary = [1.0 - u - v, u, v];
        let [v0, v1, v2] = mesh.triangle(face);
        let position = v0 * bary[0] + v1 * bary[1] + v2 * bary[2];
        let face_normal = mesh.face_cross(face).normalize_or_zero();
        let normal = match mesh.normals() {
            Some(ns) => {
                let [a, b, c] = mesh.indices()[face];
                (ns[a as usize] * bary[0] + ns[b as usize] * bary[1] + ns[c as usize] * bary[2])
                    .try_normalize()
                    .unwrap_or(face_normal)
            }
            None => face_normal,
        };
        SurfacePoint {
            position,
            face_index: face as u32,
            barycentric: bary,
            normal,
        }
    }))
}

/// Möller–Trumbore restricted to counter-clockwise (front) faces.
fn intersect_front(origin: Vec3, dir: Vec3, v0: Vec3, v1: Vec3, v2: Vec3) -> Option<(f64, f64, f64)> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    // det > 0 means the ray hits the counter-clockwise side.
    if det <= 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > 0.0).then_some((t, u, v))
}

/// Blends two poses: positions and clip values linearly, orientation by
/// shortest-arc slerp. `t` outside [0, 1] is clamped.
pub fn interpolate_pose(a: &CameraPose, b: &CameraPose, t: f64) -> CameraPose {
    let t = if (0.0..=1.0).contains(&t) {
        t
    } else {
        log::warn!("pose interpolation parameter {t} clamped to [0, 1]");
        if t.is_nan() {
            0.0
        } else {
            t.clamp(0.0, 1.0)
        }
    };
    if t == 0.0 {
        return *a;
    }
    if t == 1.0 {
        return *b;
    }
    let lerp = |x: f64, y: f64| x + (y - x) * t;
    CameraPose {
        position: a.position.lerp(b.position, t),
        orientation: a.orientation.slerp(b.orientation, t),
        fov_y: lerp(a.fov_y, b.fov_y),
        near: lerp(a.near, b.near),
        far: lerp(a.far, b.far),
    }
}
