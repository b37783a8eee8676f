//! Mesh file formats: ASCII Wavefront OBJ and binary little-endian PLY.
//!
//! Both loaders fan-triangulate polygonal faces, drop zero-area triangles
//! (reporting how many), and ignore attributes this crate does not use
//! (normals, texture coordinates, colors). Writers emit only positions and
//! triangles.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::TriangleMesh;
use crate::{Error, Result};

/// A mesh fresh from disk, with the number of zero-area triangles that were
/// dropped during loading (real-world exports often contain a few).
#[derive(Clone, Debug)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    pub dropped_degenerate: usize,
}

fn obj_err(line_no: usize, detail: impl std::fmt::Display) -> Error {
    Error::Format {
        format: "OBJ",
        detail: format!("line {line_no}: {detail}"),
    }
}

fn ply_err(detail: impl Into<String>) -> Error {
    Error::Format {
        format: "PLY",
        detail: detail.into(),
    }
}

/// Parses an OBJ face token (`7`, `7/1`, `7//3`, `-1`) into a 0-based index.
fn obj_face_index(token: &str, n_vertices: usize, line_no: usize) -> Result<u32> {
    let lead = token.split('/').next().unwrap_or("");
    let idx: i64 = lead
        .parse()
        .map_err(|_| obj_err(line_no, format!("bad face index {token:?}")))?;
    let resolved = if idx > 0 {
        idx - 1
    } else if idx < 0 {
        n_vertices as i64 + idx
    } else {
        return Err(obj_err(line_no, "face indices are 1-based; 0 is invalid"));
    };
    if resolved < 0 || resolved >= n_vertices as i64 {
        return Err(obj_err(
            line_no,
            format!("face index {idx} outside the {n_vertices} vertices seen so far"),
        ));
    }
    Ok(resolved as u32)
}

/// Loads an ASCII OBJ file (`v` and `f` records; other records are ignored).
pub fn load_obj(path: &Path) -> Result<LoadedMesh> {
    let reader = BufReader::new(File::open(path)?);
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coords = [0f64; 3];
                for c in &mut coords {
                    *c = tokens
                        .next()
                        .ok_or_else(|| obj_err(line_no, "vertex needs 3 coordinates"))?
                        .parse()
                        .map_err(|e| obj_err(line_no, format!("bad coordinate: {e}")))?;
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tokens
                    .map(|t| obj_face_index(t, vertices.len(), line_no))
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(obj_err(line_no, "face needs at least 3 vertices"));
                }
                for w in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[w], idx[w + 1]]);
                }
            }
            _ => {} // comments, normals, groups, materials, ...
        }
    }
    let mut mesh = TriangleMesh::new(vertices, triangles)
        .map_err(|e| ply_to_obj_validation(e))?;
    let dropped_degenerate = mesh.drop_degenerate_triangles();
    Ok(LoadedMesh {
        mesh,
        dropped_degenerate,
    })
}

fn ply_to_obj_validation(e: Error) -> Error {
    match e {
        Error::InvalidInput(detail) => Error::Format {
            format: "OBJ",
            detail,
        },
        other => other,
    }
}

/// Writes an ASCII OBJ file with `v` and `f` records (1-based indices).
pub fn save_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for tri in mesh.triangles() {
        writeln!(w, "f {} {} {}", tri[0] + 1, tri[1] + 1, tri[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => PlyType::I8,
            "uchar" | "uint8" => PlyType::U8,
            "short" | "int16" => PlyType::I16,
            "ushort" | "uint16" => PlyType::U16,
            "int" | "int32" => PlyType::I32,
            "uint" | "uint32" => PlyType::U32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            other => return Err(ply_err(format!("unsupported property type {other:?}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            PlyType::I8 | PlyType::U8 => 1,
            PlyType::I16 | PlyType::U16 => 2,
            PlyType::I32 | PlyType::U32 | PlyType::F32 => 4,
            PlyType::F64 => 8,
        }
    }

    fn read_f64(self, buf: &[u8]) -> f64 {
        match self {
            PlyType::I8 => buf[0] as i8 as f64,
            PlyType::U8 => buf[0] as f64,
            PlyType::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            PlyType::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            PlyType::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            PlyType::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            PlyType::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            PlyType::F64 => f64::from_le_bytes([
                buf[0], buf[1], buf[2], buf[3], buf[4], buf[5], buf[6], buf[7],
            ]),
        }
    }
}

struct PlyProperty {
    name: String,
    ty: PlyType,
    /// Count type for list properties.
    list: Option<PlyType>,
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

/// Loads a binary little-endian PLY file. Vertex `x`/`y`/`z` and a face
/// vertex-index list are required; additional fixed-size properties are
/// skipped. ASCII and big-endian files are rejected.
pub fn load_ply(path: &Path) -> Result<LoadedMesh> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header_line = String::new();
    let mut read_line = |r: &mut BufReader<File>| -> Result<String> {
        header_line.clear();
        if r.read_line(&mut header_line)? == 0 {
            return Err(ply_err("unexpected end of header"));
        }
        Ok(header_line.trim_end().to_string())
    };

    if read_line(&mut reader)? != "ply" {
        return Err(ply_err("missing 'ply' magic line"));
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut format_seen = false;
    loop {
        let line = read_line(&mut reader)?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                let kind = tok.next().unwrap_or("");
                if kind != "binary_little_endian" {
                    return Err(ply_err(format!(
                        "only binary_little_endian is supported, got {kind:?}"
                    )));
                }
                format_seen = true;
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| ply_err("element without name"))?;
                let count: usize = tok
                    .next()
                    .ok_or_else(|| ply_err("element without count"))?
                    .parse()
                    .map_err(|e| ply_err(format!("bad element count: {e}")))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| ply_err("property before any element"))?;
                let first = tok.next().ok_or_else(|| ply_err("property without type"))?;
                if first == "list" {
                    let count_ty = PlyType::parse(
                        tok.next().ok_or_else(|| ply_err("list without count type"))?,
                    )?;
                    let item_ty = PlyType::parse(
                        tok.next().ok_or_else(|| ply_err("list without item type"))?,
                    )?;
                    let name = tok.next().ok_or_else(|| ply_err("list without name"))?;
                    element.properties.push(PlyProperty {
                        name: name.to_string(),
                        ty: item_ty,
                        list: Some(count_ty),
                    });
                } else {
                    let ty = PlyType::parse(first)?;
                    let name = tok.next().ok_or_else(|| ply_err("property without name"))?;
                    element.properties.push(PlyProperty {
                        name: name.to_string(),
                        ty,
                        list: None,
                    });
                }
            }
            Some("end_header") => break,
            other => return Err(ply_err(format!("unexpected header token {other:?}"))),
        }
    }
    if !format_seen {
        return Err(ply_err("header missing format line"));
    }

    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let mut cursor = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor + n > payload.len() {
            return Err(ply_err("payload shorter than the header promises"));
        }
        let s = &payload[cursor..cursor + n];
        cursor += n;
        Ok(s)
    };

    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for element in &elements {
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        if is_vertex {
            let pos = ["x", "y", "z"].map(|axis| {
                element
                    .properties
                    .iter()
                    .position(|p| p.name == axis && p.list.is_none())
            });
            if pos.iter().any(|p| p.is_none()) {
                return Err(ply_err("vertex element lacks scalar x/y/z properties"));
            }
            for _ in 0..element.count {
                let mut coords = [0f64; 3];
                for (pi, prop) in element.properties.iter().enumerate() {
                    if prop.list.is_some() {
                        return Err(ply_err("list property on vertices is unsupported"));
                    }
                    let raw = take(prop.ty.size())?;
                    for (axis, p) in pos.iter().enumerate() {
                        if *p == Some(pi) {
                            coords[axis] = prop.ty.read_f64(raw);
                        }
                    }
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
        } else {
            for _ in 0..element.count {
                for prop in &element.properties {
                    match prop.list {
                        None => {
                            take(prop.ty.size())?;
                        }
                        Some(count_ty) => {
                            let n = count_ty.read_f64(take(count_ty.size())?) as i64;
                            if n < 0 {
                                return Err(ply_err("negative list length"));
                            }
                            let want_indices = is_face
                                && (prop.name == "vertex_indices" || prop.name == "vertex_index");
                            if want_indices {
                                if n < 3 {
                                    return Err(ply_err(format!(
                                        "face with {n} vertices cannot be triangulated"
                                    )));
                                }
                                let mut idx = Vec::with_capacity(n as usize);
                                for _ in 0..n {
                                    let v = prop.ty.read_f64(take(prop.ty.size())?);
                                    if v < 0.0 || v >= vertices.len() as f64 {
                                        return Err(ply_err(format!(
                                            "face index {v} outside the {} vertices",
                                            vertices.len()
                                        )));
                                    }
                                    idx.push(v as u32);
                                }
                                for w in 1..idx.len() - 1 {
                                    triangles.push([idx[0], idx[w], idx[w + 1]]);
                                }
                            } else {
                                take(n as usize * prop.ty.size())?;
                            }
                        }
                    }
                }
            }
        }
    }
    if cursor != payload.len() {
        return Err(ply_err("trailing bytes after the declared elements"));
    }
    let mut mesh = TriangleMesh::new(vertices, triangles).map_err(|e| match e {
        Error::InvalidInput(detail) => ply_err(detail),
        other => other,
    })?;
    let dropped_degenerate = mesh.drop_degenerate_triangles();
    Ok(LoadedMesh {
        mesh,
        dropped_degenerate,
    })
}

/// Writes a binary little-endian PLY file with float32 positions and a
/// `uchar`-counted `int` index list per triangular face.
pub fn save_ply(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertex_count(),
        mesh.triangle_count()
    )?;
    for v in mesh.vertices() {
        for a in 0..3 {
            w.write_all(&(v[a] as f32).to_le_bytes())?;
        }
    }
    for tri in mesh.triangles() {
        w.write_all(&[3u8])?;
        for &i in tri {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
