//! Shape carriers (triangle meshes, closed planar contours, point clouds),
//! synthetic shape families with template correspondence, and file I/O.

mod contour;
mod decimate;
mod family;
pub mod io;
mod mesh;
mod pointcloud;
mod sampling;

pub use contour::Contour;
pub use decimate::decimate;
pub use family::{
    generate_blob, generate_contour, DatasetManifest, DrawRanges, FamilyKind, ShapeSample,
    BLOB_POSE_LEN, BLOB_STYLE_LEN, CONTOUR_POSE_LEN, CONTOUR_STYLE_LEN,
};
pub use mesh::{icosphere, point_triangle_distance, Mesh, DEGENERATE_AREA};
pub use pointcloud::PointCloud;
pub use sampling::{sample_pointcloud, SamplingMode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("face {face} references vertex {index}, but the mesh has {n} vertices")]
    FaceIndexOutOfRange { face: usize, index: usize, n: usize },
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("edge ({a}, {b}) is shared by {count} faces; mesh is not edge-manifold")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("edge ({a}, {b}) is traversed twice in the same direction; inconsistent orientation")]
    InconsistentOrientation { a: usize, b: usize },
    #[error("mesh has {components} connected components (vertex {witness} unreachable from vertex 0)")]
    Disconnected { components: usize, witness: usize },
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { got: usize, min: usize },
    #[error("points {a} and {b} coincide")]
    CoincidentPoints { a: usize, b: usize },
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("parameter {name} = {value} outside [{lo}, {hi}]")]
    ParameterOutOfBounds {
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("decimation failed: {0}")]
    Decimation(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("unsupported file extension: {0}")]
    UnsupportedFormat(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Any shape the file layer can produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Mesh(Mesh),
    Contour(Contour),
    PointCloud(PointCloud),
}

impl Shape {
    /// Flattened coordinates, `n * dim` values.
    pub fn flat_coords(&self) -> Vec<f64> {
        match self {
            Shape::Mesh(m) => m.vertices().iter().flatten().copied().collect(),
            Shape::Contour(c) => c.points().iter().flatten().copied().collect(),
            Shape::PointCloud(p) => p.points().iter().flatten().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Shape::Contour(_) => 2,
            _ => 3,
        }
    }

    pub fn num_points(&self) -> usize {
        match self {
            Shape::Mesh(m) => m.num_vertices(),
            Shape::Contour(c) => c.len(),
            Shape::PointCloud(p) => p.len(),
        }
    }
}

impl From<Mesh> for Shape {
    fn from(m: Mesh) -> Self {
        Shape::Mesh(m)
    }
}

impl From<Contour> for Shape {
    fn from(c: Contour) -> Self {
        Shape::Contour(c)
    }
}

impl From<PointCloud> for Shape {
    fn from(p: PointCloud) -> Self {
        Shape::PointCloud(p)
    }
}

pub(crate) fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}
