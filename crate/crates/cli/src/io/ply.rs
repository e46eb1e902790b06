//! PLY point clouds: ASCII and binary little-endian reading of the `vertex`
//! element's x/y/z, binary little-endian writing.

use std::fs;
use std::path::Path;

use histoloop::Point3;

use super::write_file;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, Scalar)>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    /// Byte offset of the first data byte.
    body_start: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut pos = 0;
    let mut line_no = 0;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(path, line_no + 1, "header is not terminated"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| Error::parse(path, line_no + 1, "header is not text"))?
            .trim();
        pos += end + 1;
        line_no += 1;
        let mut words = line.split_whitespace();
        let bad = |msg: &str| Error::parse(path, line_no, msg.to_string());
        match words.next() {
            Some("ply") if line_no == 1 => {}
            _ if line_no == 1 => return Err(bad("not a PLY file")),
            Some("format") => {
                format = Some(match words.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLittleEndian,
                    Some(other) => return Err(bad(&format!("unsupported format {other}"))),
                    None => return Err(bad("missing format")),
                })
            }
            Some("element") => {
                let name = words.next().ok_or_else(|| bad("missing element name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| bad("bad element count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let ty = words.next().ok_or_else(|| bad("missing property type"))?;
                if ty == "list" {
                    if element.name == "vertex" {
                        return Err(bad("list properties on vertices are not supported"));
                    }
                    // lists only ever appear in elements we never decode
                    element.properties.push((String::new(), Scalar::U8));
                    continue;
                }
                let scalar = Scalar::parse(ty).ok_or_else(|| bad(&format!("unknown type {ty}")))?;
                let name = words.next().ok_or_else(|| bad("missing property name"))?;
                element.properties.push((name.to_string(), scalar));
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(bad(&format!("unexpected header keyword {other}"))),
        }
    }
    let format = format.ok_or_else(|| Error::parse(path, line_no, "missing format line"))?;
    Ok(Header {
        format,
        elements,
        body_start: pos,
    })
}

/// Parses a PLY file held in memory.
pub fn parse(bytes: &[u8], path: &Path) -> Result<Vec<Point3>> {
    let header = parse_header(bytes, path)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(path, 1, "no vertex element"))?;
    let vertex = &header.elements[vertex_pos];
    let column = |axis: &str| {
        vertex
            .properties
            .iter()
            .position(|(n, _)| n == axis)
            .ok_or_else(|| Error::parse(path, 1, format!("vertex has no {axis} property")))
    };
    let cols = [column("x")?, column("y")?, column("z")?];
    let mut points = Vec::with_capacity(vertex.count);
    match header.format {
        Format::Ascii => {
            let text = std::str::from_utf8(&bytes[header.body_start..])
                .map_err(|_| Error::parse(path, 1, "ASCII body is not text"))?;
            let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            for element in &header.elements[..vertex_pos] {
                for _ in 0..element.count {
                    lines.next();
                }
            }
            for _ in 0..vertex.count {
                let (i, line) = lines
                    .next()
                    .ok_or_else(|| Error::parse(path, 1, "fewer vertices than declared"))?;
                let values: Vec<&str> = line.split_whitespace().collect();
                if values.len() < vertex.properties.len() {
                    return Err(Error::parse(path, i + 1, "vertex line is too short"));
                }
                let mut xyz = [0.0; 3];
                for (v, &c) in xyz.iter_mut().zip(&cols) {
                    *v = values[c]
                        .parse()
                        .map_err(|_| Error::parse(path, i + 1, format!("bad number {:?}", values[c])))?;
                }
                points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
        Format::BinaryLittleEndian => {
            if header.elements[..vertex_pos]
                .iter()
                .any(|e| e.properties.iter().any(|(n, _)| n.is_empty()))
            {
                return Err(Error::parse(path, 1, "list elements before vertices are not supported"));
            }
            let mut offset = header.body_start;
            for element in &header.elements[..vertex_pos] {
                offset += element.count * element.properties.iter().map(|(_, s)| s.size()).sum::<usize>();
            }
            let offsets: Vec<usize> = vertex
                .properties
                .iter()
                .scan(0, |acc, (_, s)| {
                    let at = *acc;
                    *acc += s.size();
                    Some(at)
                })
                .collect();
            let stride: usize = vertex.properties.iter().map(|(_, s)| s.size()).sum();
            let needed = offset + stride * vertex.count;
            if bytes.len() < needed {
                return Err(Error::parse(path, 1, "file is shorter than its header declares"));
            }
            for k in 0..vertex.count {
                let row = &bytes[offset + k * stride..offset + (k + 1) * stride];
                let get = |c: usize| vertex.properties[c].1.read_le(&row[offsets[c]..]);
                points.push(Point3::new(get(cols[0]), get(cols[1]), get(cols[2])));
            }
        }
    }
    Ok(points)
}

pub fn read(path: &Path) -> Result<Vec<Point3>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes, path)
}

/// Binary little-endian PLY with double-precision x, y, z.
pub fn write(path: &Path, points: &[Point3]) -> Result<()> {
    write_file(path, |w| {
        write!(
            w,
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
             property double x\nproperty double y\nproperty double z\nend_header\n",
            points.len()
        )?;
        for p in points {
            for v in [p.x, p.y, p.z] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    })
}

/// One vertex per map cell: the cell mean, its point count and its shape
/// (0 none, 1 plane, 2 line).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellVertex {
    pub mean: Point3,
    pub count: u32,
    pub kind: u8,
}

pub fn write_cells(path: &Path, cells: &[CellVertex]) -> Result<()> {
    write_file(path, |w| {
        write!(
            w,
            "ply\nformat binary_little_endian 1.0\ncomment one vertex per cell\nelement vertex {}\n\
             property double x\nproperty double y\nproperty double z\n\
             property uint count\nproperty uchar kind\nend_header\n",
            cells.len()
        )?;
        for c in cells {
            for v in [c.mean.x, c.mean.y, c.mean.z] {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&c.count.to_le_bytes())?;
            w.write_all(&[c.kind])?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_with_extra_properties_and_faces() {
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float x\n\
                    property float intensity\nproperty float y\nproperty float z\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    1 9 2 3\n-4 9 5.5 6\n3 0 1 2\n";
        let pts = parse(text.as_bytes(), Path::new("a.ply")).unwrap();
        assert_eq!(pts, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-4.0, 5.5, 6.0)]);
    }

    #[test]
    fn binary_float_and_uchar() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\n\
            property uchar r\nproperty float x\nproperty float y\nproperty float z\nend_header\n"
            .to_vec();
        for (r, p) in [(7u8, [1.5f32, -2.0, 3.25]), (8, [0.0, 1.0, 2.0])] {
            bytes.push(r);
            for v in p {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let pts = parse(&bytes, Path::new("b.ply")).unwrap();
        assert_eq!(pts, vec![Point3::new(1.5, -2.0, 3.25), Point3::new(0.0, 1.0, 2.0)]);
        bytes.truncate(bytes.len() - 1);
        assert!(parse(&bytes, Path::new("b.ply")).is_err());
    }

    #[test]
    fn rejects_unsupported_files() {
        assert!(parse(b"not a ply\n", Path::new("c.ply")).is_err());
        let big_endian = b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(parse(big_endian, Path::new("c.ply")).is_err());
        let no_z = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n";
        assert!(parse(no_z, Path::new("c.ply")).is_err());
    }

    #[test]
    fn write_then_read_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ply");
        let pts = vec![Point3::new(0.1, -2.0 / 3.0, 1e-300), Point3::new(1e6, 0.0, -0.0)];
        write(&path, &pts).unwrap();
        assert_eq!(read(&path).unwrap(), pts);
    }
}
