//! Finite-element discretizations of the Laplace-Beltrami operator as a
//! stiffness/mass pencil `(S, M)`: linear (cotangent) and cubic Lagrange
//! elements on triangle meshes, linear elements on closed contours.

mod contour;
mod cubic;
mod linear;
mod quadrature;
mod sparse;

pub use contour::assemble_contour_fem;
pub use cubic::assemble_cubic_fem;
pub use linear::assemble_linear_fem;
pub use quadrature::{TriangleRule, DUNAVANT_6};
pub use sparse::CsrMatrix;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum face area accepted by the assemblers.
pub const MIN_FACE_AREA: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaplacianError {
    #[error("cannot assemble: face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("cannot assemble: contour edge {edge} has zero length")]
    ZeroLengthEdge { edge: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    LinearFem,
    CubicFem,
    ContourFem,
}

impl Discretization {
    pub fn as_str(self) -> &'static str {
        match self {
            Discretization::LinearFem => "linear_fem",
            Discretization::CubicFem => "cubic_fem",
            Discretization::ContourFem => "contour_fem",
        }
    }
}

/// What a row/column of the pencil stands for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeRole {
    Vertex(usize),
    /// Node on edge `(a, b)`, `a < b`, at parameter `t` measured from `a`.
    EdgeNode { edge: [usize; 2], t: f64 },
    FaceNode(usize),
}

#[derive(Debug, Clone)]
pub struct LaplacianPair {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub node_map: Vec<NodeRole>,
    pub disc: Discretization,
}

impl LaplacianPair {
    pub fn dim(&self) -> usize {
        self.stiffness.dim()
    }

    /// Area (or length) of the domain: `1ᵀ M 1`.
    pub fn measure(&self) -> f64 {
        self.mass.total()
    }
}

/// Element contributions collected as `(row, col, s, m)` and summed in order.
pub(crate) fn build_pair(
    n: usize,
    entries: &[(usize, usize, f64, f64)],
    node_map: Vec<NodeRole>,
    disc: Discretization,
) -> LaplacianPair {
    let s: Vec<_> = entries.iter().map(|&(i, j, s, _)| (i, j, s)).collect();
    let m: Vec<_> = entries.iter().map(|&(i, j, _, m)| (i, j, m)).collect();
    LaplacianPair {
        stiffness: CsrMatrix::from_triplets(n, &s),
        mass: CsrMatrix::from_triplets(n, &m),
        node_map,
        disc,
    }
}
