//! Text formats: OFF and OBJ meshes, XYZ / vertex-only OBJ point clouds,
//! JSON contours (`[[x, y], ...]`). Coordinates are written with the
//! shortest round-trip representation, so save/load is lossless.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{Contour, GeometryError, Mesh, PointCloud, Shape, Vec3};

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> GeometryError {
    GeometryError::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default()
}

pub fn load_shape(path: impl AsRef<Path>) -> Result<Shape, GeometryError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let ext = extension(path);
    if !matches!(ext.as_str(), "off" | "obj" | "xyz" | "json") {
        return Err(GeometryError::UnsupportedFormat(ext));
    }
    let text = std::fs::read_to_string(path).map_err(|e| GeometryError::Io {
        path: name.clone(),
        message: e.to_string(),
    })?;
    match ext.as_str() {
        "off" => parse_off(&text, &name),
        "obj" => parse_obj(&text, &name),
        "xyz" => parse_xyz(&text, &name).map(Shape::PointCloud),
        _ => parse_contour_json(&text, &name).map(Shape::Contour),
    }
}

pub fn save_shape(shape: &Shape, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    let path = path.as_ref();
    let ext = extension(path);
    let text = match (shape, ext.as_str()) {
        (Shape::Mesh(m), "off") => write_off(m),
        (Shape::Mesh(m), "obj") => write_obj(m.vertices(), m.faces()),
        (Shape::PointCloud(p), "obj") => write_obj(p.points(), &[]),
        (Shape::PointCloud(p), "xyz") => write_xyz(p.points()),
        (Shape::Contour(c), "json") => write_contour_json(c),
        _ => {
            return Err(GeometryError::UnsupportedFormat(format!(
                "cannot write {} as .{ext}",
                match shape {
                    Shape::Mesh(_) => "a mesh",
                    Shape::Contour(_) => "a contour",
                    Shape::PointCloud(_) => "a point cloud",
                }
            )))
        }
    };
    std::fs::write(path, text).map_err(|e| GeometryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn parse_floats<const N: usize>(
    tokens: &[&str],
    path: &str,
    line: usize,
) -> Result<[f64; N], GeometryError> {
    if tokens.len() < N {
        return Err(parse_err(
            path,
            line,
            format!("expected {N} coordinates, found {}", tokens.len()),
        ));
    }
    let mut out = [0.0; N];
    for (o, t) in out.iter_mut().zip(tokens) {
        *o = t
            .parse::<f64>()
            .map_err(|_| parse_err(path, line, format!("invalid number {t:?}")))?;
    }
    Ok(out)
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

pub fn parse_off(text: &str, path: &str) -> Result<Shape, GeometryError> {
    let mut lines = content_lines(text);
    let (hl, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let mut head_tokens: Vec<&str> = header.split_whitespace().collect();
    if head_tokens.first() != Some(&"OFF") {
        return Err(parse_err(path, hl, "missing OFF header"));
    }
    head_tokens.remove(0);
    let (cl, counts) = if head_tokens.is_empty() {
        let (l, c) = lines
            .next()
            .ok_or_else(|| parse_err(path, hl, "missing vertex/face counts"))?;
        (l, c.split_whitespace().collect::<Vec<_>>())
    } else {
        (hl, head_tokens)
    };
    if counts.len() < 2 {
        return Err(parse_err(path, cl, "expected vertex and face counts"));
    }
    let parse_count = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| parse_err(path, cl, format!("invalid count {t:?}")))
    };
    let (nv, nf) = (parse_count(counts[0])?, parse_count(counts[1])?);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines
            .next()
            .ok_or_else(|| parse_err(path, cl, format!("file ends before {nv} vertices")))?;
        let tokens: Vec<&str> = s.split_whitespace().collect();
        vertices.push(parse_floats::<3>(&tokens, path, l)?);
    }
    let mut faces = Vec::with_capacity(nf);
    for fi in 0..nf {
        let (l, s) = lines
            .next()
            .ok_or_else(|| parse_err(path, cl, format!("file ends before {nf} faces")))?;
        let tokens: Vec<usize> = s
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| parse_err(path, l, format!("invalid index {t:?}")))
            })
            .collect::<Result<_, _>>()?;
        if tokens.first() != Some(&3) || tokens.len() < 4 {
            return Err(parse_err(
                path,
                l,
                format!("face {fi} is not a triangle; only triangle meshes are supported"),
            ));
        }
        let face = [tokens[1], tokens[2], tokens[3]];
        if let Some(&bad) = face.iter().find(|&&i| i >= nv) {
            return Err(parse_err(
                path,
                l,
                format!("face {fi} references vertex {bad}, but the file declares {nv} vertices"),
            ));
        }
        faces.push(face);
    }
    if faces.is_empty() {
        return PointCloud::new(vertices).map(Shape::PointCloud);
    }
    Mesh::new(vertices, faces).map(Shape::Mesh)
}

pub fn parse_obj(text: &str, path: &str) -> Result<Shape, GeometryError> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut ignored: BTreeSet<String> = BTreeSet::new();
    for (l, s) in content_lines(text) {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        match tokens[0] {
            "v" => vertices.push(parse_floats::<3>(&tokens[1..], path, l)?),
            "f" => {
                if tokens.len() != 4 {
                    return Err(parse_err(
                        path,
                        l,
                        format!(
                            "face {} has {} vertices; only triangles are supported",
                            faces.len(),
                            tokens.len() - 1
                        ),
                    ));
                }
                let mut face = [0usize; 3];
                for (slot, t) in face.iter_mut().zip(&tokens[1..]) {
                    let idx_str = t.split('/').next().unwrap_or("");
                    let raw: i64 = idx_str
                        .parse()
                        .map_err(|_| parse_err(path, l, format!("invalid index {t:?}")))?;
                    let nv = vertices.len() as i64;
                    let resolved = if raw > 0 { raw - 1 } else { nv + raw };
                    if raw == 0 || resolved < 0 || resolved >= nv {
                        return Err(parse_err(
                            path,
                            l,
                            format!(
                                "face {} references vertex {raw}, but only {nv} vertices are defined",
                                faces.len()
                            ),
                        ));
                    }
                    *slot = resolved as usize;
                }
                faces.push(face);
            }
            other => {
                ignored.insert(other.to_string());
            }
        }
    }
    if !ignored.is_empty() {
        log::warn!(
            "{path}: ignored OBJ records: {}",
            ignored.into_iter().collect::<Vec<_>>().join(", ")
        );
    }
    if faces.is_empty() {
        return PointCloud::new(vertices).map(Shape::PointCloud);
    }
    Mesh::new(vertices, faces).map(Shape::Mesh)
}

pub fn parse_xyz(text: &str, path: &str) -> Result<PointCloud, GeometryError> {
    let points = content_lines(text)
        .map(|(l, s)| {
            let tokens: Vec<&str> = s.split_whitespace().collect();
            if tokens.len() != 3 {
                return Err(parse_err(
                    path,
                    l,
                    format!("expected 3 columns, found {}", tokens.len()),
                ));
            }
            parse_floats::<3>(&tokens, path, l)
        })
        .collect::<Result<Vec<_>, _>>()?;
    PointCloud::new(points)
}

pub fn parse_contour_json(text: &str, path: &str) -> Result<Contour, GeometryError> {
    let points: Vec<[f64; 2]> = serde_json::from_str(text)
        .map_err(|e| parse_err(path, e.line(), e.to_string()))?;
    Contour::new(points)
}

pub fn write_off(mesh: &Mesh) -> String {
    let mut s = format!("OFF\n{} {} 0\n", mesh.num_vertices(), mesh.num_faces());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn write_obj(vertices: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut s = String::new();
    for v in vertices {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn write_xyz(points: &[Vec3]) -> String {
    let mut s = String::new();
    for p in points {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    s
}

pub fn write_contour_json(contour: &Contour) -> String {
    serde_json::to_string(contour.points()).expect("finite coordinates serialize")
}
