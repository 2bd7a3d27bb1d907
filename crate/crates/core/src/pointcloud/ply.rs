//! PLY 1.0 reader/writer (ASCII and binary little-endian), geometry only.
//!
//! Every vertex property is read, but only `x`, `y`, `z` and the optional
//! `nx`, `ny`, `nz` are kept. Other elements (faces, ...) are skipped using
//! their declared layout. Coordinates are rounded half-up to the integer grid
//! and clamped to `[0, 2^b - 1]`. A `comment precision_b N` header line, as
//! written by [`write_ply`], overrides the caller's precision.

use std::fmt::Write as _;

use super::{Point, PointCloud, DEFAULT_PRECISION, MAX_PRECISION};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlyReadOptions {
    pub precision_b: u32,
}

impl Default for PlyReadOptions {
    fn default() -> Self {
        PlyReadOptions {
            precision_b: DEFAULT_PRECISION,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Clone, Debug)]
enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Clone, Debug)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
    offset: usize,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    precision_b: Option<u32>,
    body_offset: usize,
}

pub fn read_ply(bytes: &[u8]) -> Result<PointCloud> {
    read_ply_with(bytes, &PlyReadOptions::default())
}

pub fn read_ply_with(bytes: &[u8], options: &PlyReadOptions) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let precision_b = header.precision_b.unwrap_or(options.precision_b);
    if precision_b == 0 || precision_b > MAX_PRECISION {
        return Err(Error::Config(format!(
            "precision {precision_b} outside 1..={MAX_PRECISION}"
        )));
    }
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(header.body_offset, "no vertex element in header"))?;
    let vertex = &header.elements[vertex_idx];
    let find = |name: &str| vertex.properties.iter().position(|p| p.name == name);
    let (xi, yi, zi) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::parse(vertex.offset, "vertex element lacks x, y, z")),
    };
    for &i in &[xi, yi, zi] {
        if matches!(vertex.properties[i].kind, PropertyKind::List { .. }) {
            return Err(Error::parse(vertex.offset, "coordinate declared as list property"));
        }
    }
    let normal_idx = match (find("nx"), find("ny"), find("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };

    let mut body = Body::new(bytes, header.body_offset, header.format);
    let mut points: Vec<Point> = Vec::new();
    let mut normals: Vec<[f64; 3]> = Vec::new();
    let max = ((1u64 << precision_b) - 1) as f64;
    let mut row = Vec::new();
    for (ei, element) in header.elements.iter().enumerate() {
        if ei > vertex_idx {
            break;
        }
        for _ in 0..element.count {
            let row_offset = body.pos();
            if ei != vertex_idx {
                for p in &element.properties {
                    body.skip_property(&p.kind, element)?;
                }
                continue;
            }
            row.clear();
            for p in &element.properties {
                match p.kind {
                    PropertyKind::Scalar(t) => row.push(body.scalar(t, element)?),
                    PropertyKind::List { .. } => {
                        body.skip_property(&p.kind, element)?;
                        row.push(0.0);
                    }
                }
            }
            let mut pt = [0u32; 3];
            for (axis, &i) in [xi, yi, zi].iter().enumerate() {
                let v = row[i];
                if !v.is_finite() {
                    return Err(Error::parse(row_offset, format!("non-finite coordinate {v}")));
                }
                pt[axis] = (v + 0.5).floor().clamp(0.0, max) as u32;
            }
            points.push(pt);
            if let Some(ni) = normal_idx {
                let n = [row[ni[0]], row[ni[1]], row[ni[2]]];
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                if !(len.is_finite() && len > 1e-12) {
                    return Err(Error::parse(row_offset, "degenerate vertex normal"));
                }
                normals.push([n[0] / len, n[1] / len, n[2] / len]);
            }
        }
    }
    if normal_idx.is_some() {
        PointCloud::with_normals(points, normals, precision_b)
    } else {
        PointCloud::new(points, precision_b)
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let next_line = |offset: &mut usize| -> Result<(usize, String)> {
        let start = *offset;
        let rest = &bytes[start..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(start, "unterminated header"))?;
        *offset = start + end + 1;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| Error::parse(start, "header is not valid text"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };

    let (_, magic) = next_line(&mut offset)?;
    if magic.trim() != "ply" {
        return Err(Error::parse(0, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut precision_b = None;
    loop {
        let (at, line) = next_line(&mut offset)?;
        let mut words = line.split_whitespace();
        let Some(keyword) = words.next() else {
            continue;
        };
        match keyword {
            "format" => {
                let kind = words.next().unwrap_or("");
                let version = words.next().unwrap_or("");
                if version != "1.0" {
                    return Err(Error::Unsupported(format!("PLY version '{version}' at byte {at}")));
                }
                format = Some(match kind {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    other => return Err(Error::Unsupported(format!("PLY format '{other}' at byte {at}"))),
                });
            }
            "comment" => {
                if words.next() == Some("precision_b") {
                    let v = words
                        .next()
                        .and_then(|w| w.parse::<u32>().ok())
                        .ok_or_else(|| Error::parse(at, "bad precision_b comment"))?;
                    precision_b = Some(v);
                }
            }
            "obj_info" => {}
            "element" => {
                let name = words.next().ok_or_else(|| Error::parse(at, "element without name"))?;
                let count = words
                    .next()
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or_else(|| Error::parse(at, "element without valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    offset: at,
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(at, "property before any element"))?;
                let ty = words.next().unwrap_or("");
                let kind = if ty == "list" {
                    let count = words.next().and_then(ScalarType::parse);
                    let item = words.next().and_then(ScalarType::parse);
                    match (count, item) {
                        (Some(count), Some(item)) => PropertyKind::List { count, item },
                        _ => return Err(Error::parse(at, "bad list property types")),
                    }
                } else {
                    PropertyKind::Scalar(
                        ScalarType::parse(ty).ok_or_else(|| Error::parse(at, format!("unknown type '{ty}'")))?,
                    )
                };
                let name = words.next().ok_or_else(|| Error::parse(at, "property without name"))?;
                element.properties.push(Property {
                    name: name.to_string(),
                    kind,
                });
            }
            "end_header" => break,
            other => return Err(Error::parse(at, format!("unexpected header keyword '{other}'"))),
        }
    }
    let format = format.ok_or_else(|| Error::parse(0, "missing format line"))?;
    Ok(Header {
        format,
        elements,
        precision_b,
        body_offset: offset,
    })
}

struct Body<'a> {
    bytes: &'a [u8],
    pos: usize,
    format: Format,
}

impl<'a> Body<'a> {
    fn new(bytes: &'a [u8], pos: usize, format: Format) -> Self {
        Body { bytes, pos, format }
    }

    fn pos(&self) -> usize {
        self.pos
    }

    fn truncated(&self, element: &Element) -> Error {
        Error::parse(
            self.pos,
            format!(
                "truncated body while reading element '{}' ({} declared)",
                element.name, element.count
            ),
        )
    }

    fn scalar(&mut self, ty: ScalarType, element: &Element) -> Result<f64> {
        match self.format {
            Format::BinaryLe => {
                let n = ty.size();
                if self.pos + n > self.bytes.len() {
                    return Err(self.truncated(element));
                }
                let v = ty.decode_le(&self.bytes[self.pos..self.pos + n]);
                self.pos += n;
                Ok(v)
            }
            Format::Ascii => {
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                    self.pos += 1;
                }
                if self.pos >= self.bytes.len() {
                    return Err(self.truncated(element));
                }
                let start = self.pos;
                while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
                    self.pos += 1;
                }
                let token = std::str::from_utf8(&self.bytes[start..self.pos])
                    .map_err(|_| Error::parse(start, "non-text token in ASCII body"))?;
                token
                    .parse::<f64>()
                    .map_err(|_| Error::parse(start, format!("bad number '{token}'")))
            }
        }
    }

    fn skip_property(&mut self, kind: &PropertyKind, element: &Element) -> Result<()> {
        match *kind {
            PropertyKind::Scalar(t) => {
                self.scalar(t, element)?;
            }
            PropertyKind::List { count, item } => {
                let at = self.pos;
                let n = self.scalar(count, element)?;
                if !(n >= 0.0 && n.fract() == 0.0) {
                    return Err(Error::parse(at, format!("bad list length {n}")));
                }
                for _ in 0..n as usize {
                    self.scalar(item, element)?;
                }
            }
        }
        Ok(())
    }
}

/// Serializes a cloud; coordinates as `float`, normals (if any) as `float`.
pub fn write_ply(pc: &PointCloud, binary: bool) -> Vec<u8> {
    let mut header = String::new();
    header.push_str("ply\n");
    header.push_str(if binary {
        "format binary_little_endian 1.0\n"
    } else {
        "format ascii 1.0\n"
    });
    let _ = writeln!(header, "comment precision_b {}", pc.precision_b());
    let _ = writeln!(header, "element vertex {}", pc.len());
    for axis in ["x", "y", "z"] {
        let _ = writeln!(header, "property float {axis}");
    }
    let normals = pc.normals();
    if normals.is_some() {
        for axis in ["nx", "ny", "nz"] {
            let _ = writeln!(header, "property float {axis}");
        }
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    for (i, p) in pc.points().iter().enumerate() {
        let n = normals.map(|n| n[i]);
        if binary {
            for &c in p {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
            if let Some(n) = n {
                for c in n {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
        } else {
            let mut line = format!("{} {} {}", p[0], p[1], p[2]);
            if let Some(n) = n {
                let _ = write!(line, " {} {} {}", n[0] as f32, n[1] as f32, n[2] as f32);
            }
            line.push('\n');
            out.extend_from_slice(line.as_bytes());
        }
    }
    out
}
