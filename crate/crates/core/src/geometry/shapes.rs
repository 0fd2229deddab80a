//! Procedural meshes, outward-facing and counter-clockwise wound.

use std::collections::HashMap;

use super::{Mesh, MeshGroup};
use crate::math::Vec3;

/// Axis-aligned cube spanning [0, 1]³, 8 vertices and 12 triangles.
pub fn unit_cube() -> Mesh {
    let v = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let idx = vec![
        [0, 2, 3], [0, 3, 1], // z = 0
        [4, 5, 7], [4, 7, 6], // z = 1
        [0, 1, 5], [0, 5, 4], // y = 0
        [2, 6, 7], [2, 7, 3], // y = 1
        [0, 4, 6], [0, 6, 2], // x = 0
        [1, 3, 7], [1, 7, 5], // x = 1
    ];
    Mesh::from_triangles("cube", v, idx).expect("static cube is valid")
}

pub fn tetrahedron() -> Mesh {
    let v = vec![
        Vec3::ZERO,
        Vec3::X,
        Vec3::Y,
        Vec3::Z,
    ];
    let idx = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
    Mesh::from_triangles("tetrahedron", v, idx).expect("static tetrahedron is valid")
}

/// Subdivided icosahedron projected onto a sphere of `radius`.
pub fn icosphere(subdivisions: u32, radius: f64) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize_or_zero())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let p = ((verts[a as usize] + verts[b as usize]) * 0.5).normalize_or_zero();
                verts.push(p);
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let normals = verts.clone();
    let verts = verts.into_iter().map(|v| v * radius).collect();
    Mesh::new("icosphere", verts, faces, Some(normals), None).expect("icosphere is valid")
}

/// Flat `nx` × `ny` grid on z = 0 spanning [0, 1]² with uvs.
pub fn grid(nx: u32, ny: u32) -> Mesh {
    let nx = nx.max(1);
    let ny = ny.max(1);
    let mut v = Vec::new();
    let mut uv = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let (u, w) = (i as f64 / nx as f64, j as f64 / ny as f64);
            v.push(Vec3::new(u, w, 0.0));
            uv.push([u, w]);
        }
    }
    let row = nx + 1;
    let mut idx = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let a = j * row + i;
            idx.push([a, a + 1, a + row + 1]);
            idx.push([a, a + row + 1, a + row]);
        }
    }
    Mesh::new("grid", v, idx, None, Some(uv)).expect("grid is valid")
}

/// Closed cylinder along +Z with `segments` sides.
pub fn cylinder(segments: u32, radius: f64, height: f64) -> Mesh {
    let s = segments.max(3);
    let mut v = vec![Vec3::ZERO, Vec3::new(0.0, 0.0, height)];
    for k in 0..s {
        let a = std::f64::consts::TAU * k as f64 / s as f64;
        let (sin, cos) = a.sin_cos();
        v.push(Vec3::new(radius * cos, radius * sin, 0.0));
        v.push(Vec3::new(radius * cos, radius * sin, height));
    }
    let ring = |k: u32| 2 + 2 * (k % s);
    let mut idx = Vec::new();
    for k in 0..s {
        let (b0, t0, b1, t1) = (ring(k), ring(k) + 1, ring(k + 1), ring(k + 1) + 1);
        idx.push([0, b1, b0]);
        idx.push([1, t0, t1]);
        idx.push([b0, b1, t1]);
        idx.push([b0, t1, t0]);
    }
    Mesh::from_triangles("cylinder", v, idx).expect("cylinder is valid")
}

/// Torus around +Z.
pub fn torus(major: u32, minor: u32, r_major: f64, r_minor: f64) -> Mesh {
    let (m, n) = (major.max(3), minor.max(3));
    let mut v = Vec::new();
    for i in 0..m {
        let u = std::f64::consts::TAU * i as f64 / m as f64;
        for j in 0..n {
            let w = std::f64::consts::TAU * j as f64 / n as f64;
            let r = r_major + r_minor * w.cos();
            v.push(Vec3::new(r * u.cos(), r * u.sin(), r_minor * w.sin()));
        }
    }
    let at = |i: u32, j: u32| (i % m) * n + (j % n);
    let mut idx = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            idx.push([a, b, c]);
            idx.push([a, c, d]);
        }
    }
    Mesh::from_triangles("torus", v, idx).expect("torus is valid")
}

/// Ten small models covering the shapes a conversion pipeline meets: closed
/// and open surfaces, with and without normals and uvs, single meshes and a
/// multi-mesh group.
pub fn gallery() -> Vec<MeshGroup> {
    let named = |mut m: Mesh, name: &str| {
        m.set_name(name);
        m
    };
    let mut singles = vec![
        unit_cube(),
        tetrahedron(),
        named(icosphere(0, 1.0), "icosahedron"),
        named(icosphere(2, 0.5), "icosphere"),
        cylinder(24, 0.4, 1.5),
        torus(24, 12, 1.0, 0.25),
        named(grid(6, 4), "relief"),
    ];
    // A relief with displaced heights and explicit normals.
    let mut relief = grid(8, 8);
    relief.set_name("displaced");
    let mut relief = relief
        .transformed(|v| Vec3::new(v.x, v.y, 0.1 * (v.x * 6.0).sin() * (v.y * 4.0).cos()))
        .expect("finite relief");
    let normals = relief.area_weighted_normals();
    relief.set_normals(Some(normals)).expect("generated normals are unit");
    singles.push(relief);
    // Sphere offset far from the origin.
    singles.push(
        named(icosphere(1, 2.0), "offset-sphere")
            .transformed(|v| v + Vec3::new(100.0, -40.0, 7.5))
            .expect("finite sphere"),
    );
    let mut groups: Vec<MeshGroup> = singles.into_iter().map(MeshGroup::single).collect();
    let pedestal = named(cylinder(16, 0.8, 0.2), "pedestal");
    let bust = named(icosphere(2, 0.5), "bust")
        .transformed(|v| v + Vec3::new(0.0, 0.0, 0.7))
        .expect("finite bust");
    let mut meta = super::Metadata::new();
    meta.insert("title".into(), serde_json::json!("bust on pedestal"));
    groups.push(MeshGroup::new(vec![pedestal, bust], meta).expect("distinct names"));
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{is_watertight, surface_area, volume};
    use std::f64::consts::PI;

    #[test]
    fn gallery_has_ten_valid_models() {
        let g = gallery();
        assert_eq!(g.len(), 10);
        for group in &g {
            for m in group.meshes() {
                m.validate().unwrap();
            }
        }
    }

    #[test]
    fn closed_shapes_are_watertight() {
        for m in [unit_cube(), tetrahedron(), icosphere(2, 1.0), cylinder(16, 1.0, 2.0), torus(12, 8, 2.0, 0.5)] {
            assert!(is_watertight(&m), "{}", m.name());
        }
        assert!(!is_watertight(&grid(2, 2)));
    }

    #[test]
    fn icosphere_converges_to_sphere() {
        // Convergence measured: relative error at subdivision 4 is ~0.1 %.
        let s = icosphere(4, 1.0);
        assert_eq!(s.triangle_count(), 20 * 256);
        assert!((surface_area(&s) / (4.0 * PI) - 1.0).abs() < 0.01);
        assert!((volume(&s) / (4.0 * PI / 3.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn tetrahedron_volume_is_one_sixth() {
        assert!((volume(&tetrahedron()) - 1.0 / 6.0).abs() < 1e-12);
    }
}
