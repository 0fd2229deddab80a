//! Wavefront OBJ subset: `v`, `vt`, `vn`, `f` (triangles and fans) and
//! comments. Every other statement, including `mtllib`/`usemtl`, is skipped.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{GeometryError, Mesh, MeshFormat, NORMAL_TOLERANCE};
use crate::math::Vec3;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct Corner {
    v: u32,
    vt: Option<u32>,
    vn: Option<u32>,
}

fn err(line: usize, message: impl Into<String>) -> GeometryError {
    GeometryError::Parse {
        format: MeshFormat::Obj,
        line,
        message: message.into(),
    }
}

fn floats<'a>(
    tokens: impl Iterator<Item = &'a str>,
    min: usize,
    line: usize,
) -> Result<Vec<f64>, GeometryError> {
    let vals = tokens
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line, format!("invalid number {t:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if vals.len() < min {
        return Err(err(line, format!("expected at least {min} values")));
    }
    Ok(vals)
}

/// Resolves a 1-based or negative (relative) OBJ index against `count`
/// elements seen so far.
fn resolve(token: &str, count: usize, what: &str, line: usize) -> Result<u32, GeometryError> {
    let raw: i64 = token
        .parse()
        .map_err(|_| err(line, format!("invalid {what} index {token:?}")))?;
    let idx = match raw {
        0 => return Err(err(line, format!("{what} index 0 is not valid in OBJ"))),
        r if r > 0 => r - 1,
        r => count as i64 + r,
    };
    if idx < 0 || idx >= count as i64 {
        return Err(err(
            line,
            format!("{what} index {raw} out of range ({count} defined)"),
        ));
    }
    Ok(idx as u32)
}

/// Parses OBJ text into one mesh. Polygons are fan-triangulated around their
/// first corner.
pub fn parse_obj(bytes: &[u8]) -> Result<Mesh, GeometryError> {
    let text = std::str::from_utf8(bytes).map_err(|e| GeometryError::Malformed {
        format: MeshFormat::Obj,
        message: format!("input is not UTF-8: {e}"),
    })?;

    let mut positions: Vec<Vec3> = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[Corner; 3]> = Vec::new();
    let mut name: Option<String> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        match keyword {
            "v" => {
                let c = floats(tokens, 3, line)?;
                positions.push(Vec3::new(c[0], c[1], c[2]));
            }
            "vt" => {
                let c = floats(tokens, 1, line)?;
                texcoords.push([c[0], c.get(1).copied().unwrap_or(0.0)]);
            }
            "vn" => {
                let c = floats(tokens, 3, line)?;
                let raw = Vec3::new(c[0], c[1], c[2]);
                // Already-unit normals are kept bit-exact.
                let n = if (raw.length() - 1.0).abs() <= NORMAL_TOLERANCE {
                    raw
                } else {
                    raw.try_normalize().ok_or_else(|| err(line, "zero-length normal"))?
                };
                normals.push(n);
            }
            "f" => {
                let corners = tokens
                    .map(|t| {
                        let mut parts = t.split('/');
                        let v = resolve(parts.next().unwrap_or(""), positions.len(), "vertex", line)?;
                        let vt = match parts.next() {
                            Some(s) if !s.is_empty() => {
                                Some(resolve(s, texcoords.len(), "texture", line)?)
                            }
                            _ => None,
                        };
                        let vn = match parts.next() {
                            Some(s) if !s.is_empty() => {
                                Some(resolve(s, normals.len(), "normal", line)?)
                            }
                            _ => None,
                        };
                        if parts.next().is_some() {
                            return Err(err(line, format!("malformed face corner {t:?}")));
                        }
                        Ok(Corner { v, vt, vn })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if corners.len() < 3 {
                    return Err(err(line, "face needs at least 3 vertices"));
                }
                for k in 1..corners.len() - 1 {
                    faces.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            "o" | "g" if name.is_none() => {
                let n = tokens.collect::<Vec<_>>().join(" ");
                if !n.is_empty() {
                    name = Some(n);
                }
            }
            _ => {}
        }
    }

    if faces.is_empty() {
        return Err(GeometryError::EmptyGeometry);
    }

    let all = || faces.iter().flat_map(|f| f.iter());
    let with_uv = all().all(|c| c.vt.is_some());
    let with_normals = all().all(|c| c.vn.is_some());
    let name = name.unwrap_or_else(|| "mesh".to_string());

    if !with_uv && !with_normals {
        let idx = faces.iter().map(|f| [f[0].v, f[1].v, f[2].v]).collect();
        return Mesh::new(name, positions, idx, None, None);
    }

    // When every position carries a single attribute combination, keep the
    // file's vertex order.
    let key_of = |c: &Corner| (c.v, c.vt.filter(|_| with_uv), c.vn.filter(|_| with_normals));
    let mut per_position: Vec<Option<(u32, Option<u32>, Option<u32>)>> = vec![None; positions.len()];
    let one_to_one = faces.iter().flatten().all(|c| {
        let slot = &mut per_position[c.v as usize];
        *slot.get_or_insert(key_of(c)) == key_of(c)
    });
    if one_to_one && per_position.iter().all(Option::is_some) {
        let keys: Vec<_> = per_position.into_iter().flatten().collect();
        let uvs = with_uv.then(|| keys.iter().map(|k| texcoords[k.1.unwrap() as usize]).collect());
        let ns = with_normals.then(|| keys.iter().map(|k| normals[k.2.unwrap() as usize]).collect());
        let idx = faces.iter().map(|f| [f[0].v, f[1].v, f[2].v]).collect();
        return Mesh::new(name, positions, idx, ns, uvs);
    }

    // Attribute-carrying corners are unified into distinct vertices.
    let mut lookup: HashMap<(u32, Option<u32>, Option<u32>), u32> = HashMap::new();
    let mut verts = Vec::new();
    let mut uvs = Vec::new();
    let mut ns = Vec::new();
    let mut idx = Vec::with_capacity(faces.len());
    for f in &faces {
        let mut tri = [0u32; 3];
        for (slot, c) in f.iter().enumerate() {
            let key = (
                c.v,
                c.vt.filter(|_| with_uv),
                c.vn.filter(|_| with_normals),
            );
            tri[slot] = *lookup.entry(key).or_insert_with(|| {
                verts.push(positions[c.v as usize]);
                if let Some(t) = key.1 {
                    uvs.push(texcoords[t as usize]);
                }
                if let Some(n) = key.2 {
                    ns.push(normals[n as usize]);
                }
                (verts.len() - 1) as u32
            });
        }
        idx.push(tri);
    }
    Mesh::new(
        name,
        verts,
        idx,
        with_normals.then_some(ns),
        with_uv.then_some(uvs),
    )
}

/// Writes a mesh as OBJ text. Attributes share the vertex index, and floats
/// use the shortest representation that parses back to the same value.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "o {}", mesh.name());
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    if let Some(uvs) = mesh.uvs() {
        for uv in uvs {
            let _ = writeln!(out, "vt {:?} {:?}", uv[0], uv[1]);
        }
    }
    if let Some(ns) = mesh.normals() {
        for n in ns {
            let _ = writeln!(out, "vn {:?} {:?} {:?}", n.x, n.y, n.z);
        }
    }
    let corner = |i: u32| {
        let i = i + 1;
        match (mesh.uvs().is_some(), mesh.normals().is_some()) {
            (false, false) => format!("{i}"),
            (true, false) => format!("{i}/{i}"),
            (false, true) => format!("{i}//{i}"),
            (true, true) => format!("{i}/{i}/{i}"),
        }
    };
    for [a, b, c] in mesh.indices() {
        let _ = writeln!(out, "f {} {} {}", corner(*a), corner(*b), corner(*c));
    }
    out
}
