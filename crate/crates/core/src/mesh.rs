//! Triangle meshes: OBJ and PLY loading, watertightness validation, and
//! the normalization that maps a mesh into the unit cube with margin.
//!
//! Only geometry is read; normals, texture coordinates, and materials are
//! skipped. Faces with more than three vertices are fan triangulated.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    /// Flat xyz positions, `n * 3`.
    pub vertices: Vec<f64>,
    /// Vertex indices, `m * 3`.
    pub triangles: Vec<u32>,
}

/// Uniform scale plus offset: `p' = p * scale + offset`. Signed distances
/// transform by the scale factor alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub scale: f64,
    pub offset: [f64; 3],
}

impl Transform {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        [
            p[0] * self.scale + self.offset[0],
            p[1] * self.scale + self.offset[1],
            p[2] * self.scale + self.offset[2],
        ]
    }

    pub fn invert(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.offset[0]) / self.scale,
            (p[1] - self.offset[1]) / self.scale,
            (p[2] - self.offset[2]) / self.scale,
        ]
    }
}

impl TriangleMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len() / 3
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len() / 3
    }

    pub fn vertex(&self, i: usize) -> [f64; 3] {
        [
            self.vertices[i * 3],
            self.vertices[i * 3 + 1],
            self.vertices[i * 3 + 2],
        ]
    }

    pub fn triangle(&self, t: usize) -> [[f64; 3]; 3] {
        [
            self.vertex(self.triangles[t * 3] as usize),
            self.vertex(self.triangles[t * 3 + 1] as usize),
            self.vertex(self.triangles[t * 3 + 2] as usize),
        ]
    }

    fn validate(self, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::MeshFormat {
            path: path.display().to_string(),
            reason,
        };
        if self.vertices.len() % 3 != 0 || self.triangles.len() % 3 != 0 {
            return Err(bad("ragged vertex or index array".into()));
        }
        if self.triangles.is_empty() {
            return Err(bad("mesh has no triangles".into()));
        }
        if self.vertices.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite vertex coordinate".into()));
        }
        let n = self.vertex_count() as u32;
        if let Some(&i) = self.triangles.iter().find(|&&i| i >= n) {
            return Err(bad(format!("face references vertex {i} of {n}")));
        }
        Ok(self)
    }

    /// Errors unless every undirected edge is shared by exactly two
    /// triangles, which is the closedness precondition for signed distance.
    pub fn check_watertight(&self) -> Result<()> {
        let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
        for t in 0..self.triangle_count() {
            let idx = &self.triangles[t * 3..t * 3 + 3];
            for e in 0..3 {
                let a = idx[e];
                let b = idx[(e + 1) % 3];
                let key = (a.min(b), a.max(b));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &edges {
            if count != 2 {
                return Err(Error::NotWatertight(format!(
                    "edge ({a}, {b}) belongs to {count} triangles, expected 2"
                )));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds as (min, max).
    pub fn bbox(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in self.vertices.chunks(3) {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        (lo, hi)
    }

    /// Uniformly rescales in place so the longest bbox axis spans
    /// [0.05, 0.95] and the mesh is centered in the unit cube. Returns the
    /// applied transform so query points and distances can be mapped both
    /// ways.
    pub fn normalize_to_unit(&mut self) -> Transform {
        let (lo, hi) = self.bbox();
        let extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
        let scale = 0.9 / extent.max(1e-300);
        let mut offset = [0.0; 3];
        for d in 0..3 {
            let center = 0.5 * (lo[d] + hi[d]);
            offset[d] = 0.5 - center * scale;
        }
        let t = Transform { scale, offset };
        for v in self.vertices.chunks_mut(3) {
            let p = t.apply([v[0], v[1], v[2]]);
            v.copy_from_slice(&p);
        }
        t
    }
}

/// Loads a mesh by extension: `.obj`, or `.ply` (ascii or binary little
/// endian).
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("obj") => load_obj(path),
        Some(e) if e.eq_ignore_ascii_case("ply") => load_ply(path),
        _ => Err(Error::MeshFormat {
            path: path.display().to_string(),
            reason: "unknown extension, expected .obj or .ply".into(),
        }),
    }
}

pub fn load_obj(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path)?;
    let bad = |reason: String| Error::MeshFormat {
        path: path.display().to_string(),
        reason,
    };
    let mut vertices: Vec<f64> = Vec::new();
    let mut triangles: Vec<u32> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut got = 0;
                for p in parts.by_ref().take(3) {
                    let v: f64 = p
                        .parse()
                        .map_err(|_| bad(format!("line {}: bad coordinate {p:?}", ln + 1)))?;
                    vertices.push(v);
                    got += 1;
                }
                if got != 3 {
                    return Err(bad(format!("line {}: vertex needs 3 coordinates", ln + 1)));
                }
            }
            Some("f") => {
                let n_before = vertices.len() as i64 / 3;
                let mut face: Vec<u32> = Vec::new();
                for p in parts {
                    // "i", "i/t", "i/t/n", "i//n"; negative counts from the
                    // end of the vertices seen so far.
                    let first = p.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| bad(format!("line {}: bad index {p:?}", ln + 1)))?;
                    let resolved = if i > 0 { i - 1 } else { n_before + i };
                    if resolved < 0 || resolved >= n_before {
                        return Err(bad(format!("line {}: index {i} out of range", ln + 1)));
                    }
                    face.push(resolved as u32);
                }
                if face.len() < 3 {
                    return Err(bad(format!("line {}: face needs 3+ vertices", ln + 1)));
                }
                for i in 1..face.len() - 1 {
                    triangles.extend_from_slice(&[face[0], face[i], face[i + 1]]);
                }
            }
            _ => {} // normals, texcoords, groups, comments
        }
    }
    TriangleMesh {
        vertices,
        triangles,
    }
    .validate(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(s: &str) -> Option<PlyType> {
        Some(match s {
            "char" | "int8" => PlyType::I8,
            "uchar" | "uint8" => PlyType::U8,
            "short" | "int16" => PlyType::I16,
            "ushort" | "uint16" => PlyType::U16,
            "int" | "int32" => PlyType::I32,
            "uint" | "uint32" => PlyType::U32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            _ => return None,
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

    fn read(self, bytes: &[u8]) -> f64 {
        match self {
            PlyType::I8 => bytes[0] as i8 as f64,
            PlyType::U8 => bytes[0] as f64,
            PlyType::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            PlyType::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            PlyType::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyType::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyType::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            PlyType::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum PlyProp {
    Scalar(PlyType, String),
    List(PlyType, PlyType, String),
}

/// Face index lists appear under both historical names.
fn is_index_list(name: &str) -> bool {
    name == "vertex_indices" || name == "vertex_index"
}

pub fn load_ply(path: &Path) -> Result<TriangleMesh> {
    let raw = std::fs::read(path)?;
    let bad = |reason: String| Error::MeshFormat {
        path: path.display().to_string(),
        reason,
    };

    // Header is ASCII lines up to and including "end_header".
    let mut pos = 0usize;
    let next_line = |raw: &[u8], pos: &mut usize| -> Option<String> {
        if *pos >= raw.len() {
            return None;
        }
        let start = *pos;
        let end = raw[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| start + i)
            .unwrap_or(raw.len());
        *pos = end + 1;
        Some(String::from_utf8_lossy(&raw[start..end]).trim_end_matches('\r').to_string())
    };

    match next_line(&raw, &mut pos).as_deref() {
        Some("ply") => {}
        _ => return Err(bad("missing ply magic".into())),
    }
    let mut ascii = None;
    // (name, count, props) in file order.
    let mut elements: Vec<(String, usize, Vec<PlyProp>)> = Vec::new();
    loop {
        let line = next_line(&raw, &mut pos).ok_or_else(|| bad("truncated header".into()))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("format") => {
                ascii = match toks.get(1).copied() {
                    Some("ascii") => Some(true),
                    Some("binary_little_endian") => Some(false),
                    Some(other) => return Err(bad(format!("unsupported format {other}"))),
                    None => return Err(bad("bad format line".into())),
                };
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = toks.get(1).ok_or_else(|| bad("bad element line".into()))?;
                let count: usize = toks
                    .get(2)
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| bad("bad element count".into()))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element".into()))?;
                if toks.get(1).copied() == Some("list") {
                    let ct = toks
                        .get(2)
                        .and_then(|t| PlyType::parse(t))
                        .ok_or_else(|| bad("bad list count type".into()))?;
                    let it = toks
                        .get(3)
                        .and_then(|t| PlyType::parse(t))
                        .ok_or_else(|| bad("bad list item type".into()))?;
                    let name = toks.get(4).ok_or_else(|| bad("unnamed list".into()))?;
                    el.2.push(PlyProp::List(ct, it, name.to_string()));
                } else {
                    let ty = toks
                        .get(1)
                        .and_then(|t| PlyType::parse(t))
                        .ok_or_else(|| bad("bad property type".into()))?;
                    let name = toks.get(2).ok_or_else(|| bad("unnamed property".into()))?;
                    el.2.push(PlyProp::Scalar(ty, name.to_string()));
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(bad(format!("unknown header line {other:?}"))),
            None => {}
        }
    }
    let ascii = ascii.ok_or_else(|| bad("no format line".into()))?;

    let mut vertices: Vec<f64> = Vec::new();
    let mut triangles: Vec<u32> = Vec::new();

    let mut ascii_lines = if ascii {
        Some(
            String::from_utf8_lossy(&raw[pos..])
                .lines()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .into_iter(),
        )
    } else {
        None
    };

    for (name, count, props) in &elements {
        let is_vertex = name == "vertex";
        let is_face = name == "face";
        // Column positions of x, y, z within the vertex properties.
        let mut xyz = [usize::MAX; 3];
        if is_vertex {
            for (i, p) in props.iter().enumerate() {
                if let PlyProp::Scalar(_, n) = p {
                    match n.as_str() {
                        "x" => xyz[0] = i,
                        "y" => xyz[1] = i,
                        "z" => xyz[2] = i,
                        _ => {}
                    }
                }
            }
            if xyz.contains(&usize::MAX) {
                return Err(bad("vertex element lacks x/y/z".into()));
            }
        }
        for _ in 0..*count {
            let mut scalars: Vec<f64> = Vec::with_capacity(props.len());
            let mut list: Vec<f64> = Vec::new();
            if ascii {
                let line = ascii_lines
                    .as_mut()
                    .unwrap()
                    .next()
                    .ok_or_else(|| bad("truncated body".into()))?;
                let mut toks = line.split_whitespace();
                for p in props {
                    match p {
                        PlyProp::Scalar(..) => {
                            let v: f64 = toks
                                .next()
                                .and_then(|t| t.parse().ok())
                                .ok_or_else(|| bad("bad scalar value".into()))?;
                            scalars.push(v);
                        }
                        PlyProp::List(_, _, name) => {
                            let n: usize = toks
                                .next()
                                .and_then(|t| t.parse().ok())
                                .ok_or_else(|| bad("bad list count".into()))?;
                            for _ in 0..n {
                                let v: f64 = toks
                                    .next()
                                    .and_then(|t| t.parse().ok())
                                    .ok_or_else(|| bad("bad list value".into()))?;
                                if is_index_list(name) {
                                    list.push(v);
                                }
                            }
                        }
                    }
                }
            } else {
                for p in props {
                    match p {
                        PlyProp::Scalar(ty, _) => {
                            let sz = ty.size();
                            if pos + sz > raw.len() {
                                return Err(bad("truncated body".into()));
                            }
                            scalars.push(ty.read(&raw[pos..]));
                            pos += sz;
                        }
                        PlyProp::List(ct, it, name) => {
                            let csz = ct.size();
                            if pos + csz > raw.len() {
                                return Err(bad("truncated body".into()));
                            }
                            let n = ct.read(&raw[pos..]) as usize;
                            pos += csz;
                            let isz = it.size();
                            if pos + n * isz > raw.len() {
                                return Err(bad("truncated body".into()));
                            }
                            if is_index_list(name) {
                                for j in 0..n {
                                    list.push(it.read(&raw[pos + j * isz..]));
                                }
                            }
                            pos += n * isz;
                        }
                    }
                }
            }
            if is_vertex {
                for d in 0..3 {
                    vertices.push(scalars[xyz[d]]);
                }
            } else if is_face && !list.is_empty() {
                if list.len() < 3 {
                    return Err(bad("face with fewer than 3 indices".into()));
                }
                let face: Vec<u32> = list.iter().map(|&v| v as u32).collect();
                for i in 1..face.len() - 1 {
                    triangles.extend_from_slice(&[face[0], face[i], face[i + 1]]);
                }
            }
        }
    }
    TriangleMesh {
        vertices,
        triangles,
    }
    .validate(path)
}

/// Unit icosphere centered at the origin: an icosahedron subdivided
/// `subdivisions` times with every vertex projected onto the sphere.
/// Shared midpoints are reused, so the result is watertight.
pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut vertices: Vec<f64> = Vec::new();
    for v in raw {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        vertices.extend_from_slice(&[v[0] / n, v[1] / n, v[2] / n]);
    }
    let mut triangles: Vec<u32> = vec![
        0, 11, 5, 0, 5, 1, 0, 1, 7, 0, 7, 10, 0, 10, 11, //
        1, 5, 9, 5, 11, 4, 11, 10, 2, 10, 7, 6, 7, 1, 8, //
        3, 9, 4, 3, 4, 2, 3, 2, 6, 3, 6, 8, 3, 8, 9, //
        4, 9, 5, 2, 4, 11, 6, 2, 10, 8, 6, 7, 9, 8, 1,
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<f64>| -> u32 {
            let key = (a.min(b), a.max(b));
            if let Some(&m) = midpoints.get(&key) {
                return m;
            }
            let (a, b) = (a as usize, b as usize);
            let mut p = [
                (vertices[a * 3] + vertices[b * 3]) / 2.0,
                (vertices[a * 3 + 1] + vertices[b * 3 + 1]) / 2.0,
                (vertices[a * 3 + 2] + vertices[b * 3 + 2]) / 2.0,
            ];
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            for v in p.iter_mut() {
                *v /= n;
            }
            let idx = (vertices.len() / 3) as u32;
            vertices.extend_from_slice(&p);
            midpoints.insert(key, idx);
            idx
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for t in triangles.chunks(3) {
            let (a, b, c) = (t[0], t[1], t[2]);
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[a, ab, ca, b, bc, ab, c, ca, bc, ab, bc, ca]);
        }
        triangles = next;
    }
    TriangleMesh {
        vertices,
        triangles,
    }
}
