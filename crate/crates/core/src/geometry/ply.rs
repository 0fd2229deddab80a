//! PLY reader/writer for `ascii` and `binary_little_endian` files.
//!
//! Reads vertex `x y z` with optional `nx ny nz` and `u v` (or `s t`,
//! `texture_u texture_v`), and face `vertex_indices` lists. Unknown
//! elements and properties are parsed and skipped.

use std::fmt::Write as _;

use super::{GeometryError, Mesh, MeshFormat};
use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    /// Parses an ASCII token with the precision of the declared type so
    /// ASCII and binary files describing the same data agree bit for bit.
    fn parse_token(self, tok: &str) -> Option<f64> {
        match self {
            Scalar::F32 => tok.parse::<f32>().ok().map(f64::from),
            Scalar::F64 => tok.parse::<f64>().ok(),
            _ => {
                let v: i64 = tok.parse().ok()?;
                let (lo, hi) = match self {
                    Scalar::I8 => (i8::MIN as i64, i8::MAX as i64),
                    Scalar::U8 => (0, u8::MAX as i64),
                    Scalar::I16 => (i16::MIN as i64, i16::MAX as i64),
                    Scalar::U16 => (0, u16::MAX as i64),
                    Scalar::I32 => (i32::MIN as i64, i32::MAX as i64),
                    _ => (0, u32::MAX as i64),
                };
                (lo..=hi).contains(&v).then_some(v as f64)
            }
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// One decoded element instance: scalars in property order, lists in
/// their own slots.
enum Value {
    Scalar(f64),
    List(Vec<f64>),
}

fn malformed(message: impl Into<String>) -> GeometryError {
    GeometryError::Malformed {
        format: MeshFormat::Ply,
        message: message.into(),
    }
}

fn at_line(line: usize, message: impl Into<String>) -> GeometryError {
    GeometryError::Parse {
        format: MeshFormat::Ply,
        line,
        message: message.into(),
    }
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, GeometryError> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut next_line = || -> Option<(usize, String)> {
        if offset >= bytes.len() {
            return None;
        }
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |p| offset + p);
        let line = String::from_utf8_lossy(&bytes[offset..end])
            .trim_end_matches('\r')
            .to_string();
        offset = (end + 1).min(bytes.len().max(end + 1));
        line_no += 1;
        Some((line_no, line))
    };

    match next_line() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(GeometryError::UnsupportedFormat("missing 'ply' magic".into())),
    }

    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some((ln, line)) = next_line() else {
            return Err(malformed("header has no end_header"));
        };
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                let kind = tok.next().unwrap_or("");
                let version = tok.next().unwrap_or("");
                encoding = Some(match kind {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => {
                        return Err(GeometryError::UnsupportedFormat(format!(
                            "PLY format '{other}' is not supported (ascii, binary_little_endian)"
                        )))
                    }
                });
                if version != "1.0" {
                    return Err(GeometryError::UnsupportedFormat(format!(
                        "PLY version '{version}' is not supported"
                    )));
                }
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| at_line(ln, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| at_line(ln, "element without valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| at_line(ln, "property before any element"))?;
                let first = tok.next().unwrap_or("");
                let prop = if first == "list" {
                    let count = tok.next().and_then(Scalar::parse);
                    let item = tok.next().and_then(Scalar::parse);
                    let name = tok.next();
                    match (count, item, name) {
                        (Some(count), Some(item), Some(name)) if count.is_integer() => {
                            Property::List {
                                name: name.to_string(),
                                count,
                                item,
                            }
                        }
                        _ => return Err(at_line(ln, format!("bad list property: {line}"))),
                    }
                } else {
                    let ty = Scalar::parse(first)
                        .ok_or_else(|| at_line(ln, format!("unknown property type '{first}'")))?;
                    let name = tok.next().ok_or_else(|| at_line(ln, "property without name"))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(at_line(ln, format!("unexpected header keyword '{other}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| malformed("header has no format line"))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: offset,
        body_line: line_no + 1,
    })
}

trait Body {
    fn read_element(&mut self, el: &Element) -> Result<Vec<Value>, GeometryError>;
    fn finish(&mut self) -> Result<(), GeometryError>;
}

struct AsciiBody<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    first_line: usize,
}

impl AsciiBody<'_> {
    fn next_content_line(&mut self) -> Option<(usize, &str)> {
        for (i, l) in self.lines.by_ref() {
            if !l.trim().is_empty() {
                return Some((self.first_line + i, l));
            }
        }
        None
    }
}

impl Body for AsciiBody<'_> {
    fn read_element(&mut self, el: &Element) -> Result<Vec<Value>, GeometryError> {
        let Some((ln, line)) = self.next_content_line() else {
            return Err(malformed(format!(
                "unexpected end of data while reading '{}' elements",
                el.name
            )));
        };
        let mut tok = line.split_whitespace();
        let mut take = |ty: Scalar| -> Result<f64, GeometryError> {
            let t = tok
                .next()
                .ok_or_else(|| at_line(ln, format!("too few values for element '{}'", el.name)))?;
            ty.parse_token(t)
                .ok_or_else(|| at_line(ln, format!("invalid value {t:?}")))
        };
        let mut out = Vec::with_capacity(el.props.len());
        for p in &el.props {
            match p {
                Property::Scalar { ty, .. } => out.push(Value::Scalar(take(*ty)?)),
                Property::List { count, item, .. } => {
                    let n = take(*count)?;
                    if n < 0.0 {
                        return Err(at_line(ln, "negative list length"));
                    }
                    let items = (0..n as usize).map(|_| take(*item)).collect::<Result<_, _>>()?;
                    out.push(Value::List(items));
                }
            }
        }
        if tok.next().is_some() {
            return Err(at_line(
                ln,
                format!("too many values for element '{}'", el.name),
            ));
        }
        Ok(out)
    }

    fn finish(&mut self) -> Result<(), GeometryError> {
        match self.next_content_line() {
            Some((ln, _)) => Err(at_line(ln, "more data than the header declares")),
            None => Ok(()),
        }
    }
}

struct BinaryBody<'a> {
    data: &'a [u8],
    pos: usize,
}

impl BinaryBody<'_> {
    fn take(&mut self, ty: Scalar, el: &str) -> Result<f64, GeometryError> {
        let n = ty.size();
        if self.pos + n > self.data.len() {
            return Err(malformed(format!(
                "unexpected end of data while reading '{el}' elements"
            )));
        }
        let v = ty.decode_le(&self.data[self.pos..self.pos + n]);
        self.pos += n;
        Ok(v)
    }
}

impl Body for BinaryBody<'_> {
    fn read_element(&mut self, el: &Element) -> Result<Vec<Value>, GeometryError> {
        let mut out = Vec::with_capacity(el.props.len());
        for p in &el.props {
            match p {
                Property::Scalar { ty, .. } => out.push(Value::Scalar(self.take(*ty, &el.name)?)),
                Property::List { count, item, .. } => {
                    let n = self.take(*count, &el.name)?;
                    if n < 0.0 {
                        return Err(malformed("negative list length"));
                    }
                    let n = n as usize;
                    if self.pos + n * item.size() > self.data.len() {
                        return Err(malformed(format!(
                            "unexpected end of data while reading '{}' elements",
                            el.name
                        )));
                    }
                    let items = (0..n).map(|_| self.take(*item, &el.name)).collect::<Result<_, _>>()?;
                    out.push(Value::List(items));
                }
            }
        }
        Ok(out)
    }

    fn finish(&mut self) -> Result<(), GeometryError> {
        if self.pos != self.data.len() {
            return Err(malformed(format!(
                "{} bytes of data beyond the declared elements",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn slot(el: &Element, names: &[&str]) -> Option<usize> {
    el.props
        .iter()
        .position(|p| matches!(p, Property::Scalar { .. }) && names.contains(&p.name()))
}

/// Parses a PLY file into one mesh with fan-triangulated faces.
pub fn parse_ply(bytes: &[u8]) -> Result<Mesh, GeometryError> {
    let header = parse_header(bytes)?;
    let body_bytes = &bytes[header.body_offset.min(bytes.len())..];
    let mut body: Box<dyn Body> = match header.encoding {
        PlyEncoding::Ascii => {
            let text = std::str::from_utf8(body_bytes)
                .map_err(|_| malformed("ASCII body is not valid UTF-8"))?;
            Box::new(AsciiBody {
                lines: text.lines().enumerate().peekable(),
                first_line: header.body_line,
            })
        }
        PlyEncoding::BinaryLittleEndian => Box::new(BinaryBody {
            data: body_bytes,
            pos: 0,
        }),
    };

    let mut positions = Vec::new();
    let mut normals: Option<Vec<Vec3>> = None;
    let mut uvs: Option<Vec<[f64; 2]>> = None;
    let mut polygons: Vec<Vec<f64>> = Vec::new();
    let mut saw_vertex = false;

    for el in &header.elements {
        match el.name.as_str() {
            "vertex" => {
                saw_vertex = true;
                let (Some(x), Some(y), Some(z)) = (slot(el, &["x"]), slot(el, &["y"]), slot(el, &["z"])) else {
                    return Err(malformed("vertex element lacks x/y/z"));
                };
                let nslots = (slot(el, &["nx"]), slot(el, &["ny"]), slot(el, &["nz"]));
                let uslots = (
                    slot(el, &["u", "s", "texture_u", "texture_s"]),
                    slot(el, &["v", "t", "texture_v", "texture_t"]),
                );
                let mut ns = Vec::new();
                let mut ts = Vec::new();
                for _ in 0..el.count {
                    let vals = body.read_element(el)?;
                    let get = |i: usize| match vals[i] {
                        Value::Scalar(v) => v,
                        Value::List(_) => f64::NAN,
                    };
                    positions.push(Vec3::new(get(x), get(y), get(z)));
                    if let (Some(a), Some(b), Some(c)) = nslots {
                        ns.push(Vec3::new(get(a), get(b), get(c)));
                    }
                    if let (Some(a), Some(b)) = uslots {
                        ts.push([get(a), get(b)]);
                    }
                }
                if nslots.0.is_some() && nslots.1.is_some() && nslots.2.is_some() {
                    let unit: Option<Vec<Vec3>> = ns.iter().map(|n| n.try_normalize()).collect();
                    if unit.is_none() {
                        log::warn!("PLY contains zero-length normals; normals dropped");
                    }
                    normals = unit;
                }
                if uslots.0.is_some() && uslots.1.is_some() {
                    uvs = Some(ts);
                }
            }
            "face" => {
                let list = el
                    .props
                    .iter()
                    .position(|p| {
                        matches!(p, Property::List { .. })
                            && matches!(p.name(), "vertex_indices" | "vertex_index")
                    })
                    .ok_or_else(|| malformed("face element lacks vertex_indices"))?;
                for _ in 0..el.count {
                    let mut vals = body.read_element(el)?;
                    if let Value::List(items) = std::mem::replace(&mut vals[list], Value::Scalar(0.0)) {
                        polygons.push(items);
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    body.read_element(el)?;
                }
            }
        }
    }
    body.finish()?;

    if !saw_vertex {
        return Err(malformed("no vertex element"));
    }
    let n = positions.len();
    let mut indices = Vec::new();
    for (f, poly) in polygons.iter().enumerate() {
        if poly.len() < 3 {
            return Err(malformed(format!("face {f} has fewer than 3 vertices")));
        }
        let idx = poly
            .iter()
            .map(|&i| {
                if i >= 0.0 && (i as usize) < n && i.fract() == 0.0 {
                    Ok(i as u32)
                } else {
                    Err(malformed(format!("face {f} index {i} out of range ({n} vertices)")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        for k in 1..idx.len() - 1 {
            indices.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    if indices.is_empty() {
        return Err(GeometryError::EmptyGeometry);
    }
    Mesh::new("mesh", positions, indices, normals, uvs)
}

/// Serializes a mesh as single-precision PLY.
pub fn write_ply(mesh: &Mesh, encoding: PlyEncoding) -> Vec<u8> {
    let mut header = String::from("ply\n");
    let _ = writeln!(
        header,
        "format {} 1.0",
        match encoding {
            PlyEncoding::Ascii => "ascii",
            PlyEncoding::BinaryLittleEndian => "binary_little_endian",
        }
    );
    let _ = writeln!(header, "element vertex {}", mesh.vertex_count());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if mesh.normals().is_some() {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    if mesh.uvs().is_some() {
        header.push_str("property float u\nproperty float v\n");
    }
    let _ = writeln!(header, "element face {}", mesh.triangle_count());
    header.push_str("property list uchar int vertex_indices\nend_header\n");

    let row = |i: usize| {
        let mut vals = mesh.vertices()[i].to_array().to_vec();
        if let Some(ns) = mesh.normals() {
            vals.extend(ns[i].to_array());
        }
        if let Some(uv) = mesh.uvs() {
            vals.extend(uv[i]);
        }
        vals.into_iter().map(|v| v as f32).collect::<Vec<f32>>()
    };

    let mut out = header.into_bytes();
    match encoding {
        PlyEncoding::Ascii => {
            let mut body = String::new();
            for i in 0..mesh.vertex_count() {
                let vals: Vec<String> = row(i).iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(body, "{}", vals.join(" "));
            }
            for [a, b, c] in mesh.indices() {
                let _ = writeln!(body, "3 {a} {b} {c}");
            }
            out.extend(body.into_bytes());
        }
        PlyEncoding::BinaryLittleEndian => {
            for i in 0..mesh.vertex_count() {
                for v in row(i) {
                    out.extend(v.to_le_bytes());
                }
            }
            for tri in mesh.indices() {
                out.push(3);
                for &i in tri {
                    out.extend((i as i32).to_le_bytes());
                }
            }
        }
    }
    out
}
