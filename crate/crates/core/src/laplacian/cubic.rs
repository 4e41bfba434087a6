//! Cubic (P3) Lagrange elements on triangles.
//!
//! Local node order: the three corners, then two nodes per edge for edges
//! (0,1), (1,2), (2,0), each listed nearest-first from the edge's start, then
//! the centroid.

use std::sync::LazyLock;

use super::quadrature::DUNAVANT_6;
use super::{build_pair, Discretization, LaplacianError, LaplacianPair, NodeRole, MIN_FACE_AREA};
use crate::geometry::{cross, dot, norm, sub, Mesh};

const NODES: usize = 10;

#[derive(Clone, Copy)]
enum Local {
    Corner(usize),
    /// Edge node next to corner `near` on the edge towards `far`.
    Edge { near: usize, far: usize },
    Centroid,
}

const LOCAL: [Local; NODES] = [
    Local::Corner(0),
    Local::Corner(1),
    Local::Corner(2),
    Local::Edge { near: 0, far: 1 },
    Local::Edge { near: 1, far: 0 },
    Local::Edge { near: 1, far: 2 },
    Local::Edge { near: 2, far: 1 },
    Local::Edge { near: 2, far: 0 },
    Local::Edge { near: 0, far: 2 },
    Local::Centroid,
];

/// Value and barycentric gradient of every basis function at `l`.
fn basis(l: &[f64; 3]) -> ([f64; NODES], [[f64; 3]; NODES]) {
    let mut val = [0.0; NODES];
    let mut grad = [[0.0; 3]; NODES];
    for (a, node) in LOCAL.iter().enumerate() {
        match *node {
            Local::Corner(i) => {
                let x = l[i];
                val[a] = 0.5 * x * (3.0 * x - 1.0) * (3.0 * x - 2.0);
                grad[a][i] = 0.5 * (27.0 * x * x - 18.0 * x + 2.0);
            }
            Local::Edge { near, far } => {
                let (x, y) = (l[near], l[far]);
                val[a] = 4.5 * x * y * (3.0 * x - 1.0);
                grad[a][near] = 4.5 * y * (6.0 * x - 1.0);
                grad[a][far] = 4.5 * x * (3.0 * x - 1.0);
            }
            Local::Centroid => {
                val[a] = 27.0 * l[0] * l[1] * l[2];
                grad[a] = [27.0 * l[1] * l[2], 27.0 * l[0] * l[2], 27.0 * l[0] * l[1]];
            }
        }
    }
    (val, grad)
}

type Block = [[f64; NODES]; NODES];

/// Reference integrals (weights summing to one) of basis products and of the
/// products of reference derivatives `∂ξ`, `∂η`.
struct Reference {
    mass: Block,
    xx: Block,
    xy: Block,
    yy: Block,
}

static REFERENCE: LazyLock<Reference> = LazyLock::new(|| {
    let mut r = Reference {
        mass: [[0.0; NODES]; NODES],
        xx: [[0.0; NODES]; NODES],
        xy: [[0.0; NODES]; NODES],
        yy: [[0.0; NODES]; NODES],
    };
    let rule = &*DUNAVANT_6;
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        let (val, grad) = basis(p);
        // l0 = 1 - ξ - η, l1 = ξ, l2 = η.
        let dx: Vec<f64> = grad.iter().map(|g| g[1] - g[0]).collect();
        let dy: Vec<f64> = grad.iter().map(|g| g[2] - g[0]).collect();
        for a in 0..NODES {
            for b in 0..NODES {
                r.mass[a][b] += w * val[a] * val[b];
                r.xx[a][b] += w * dx[a] * dx[b];
                r.xy[a][b] += w * dx[a] * dy[b];
                r.yy[a][b] += w * dy[a] * dy[b];
            }
        }
    }
    r
});

/// P3 stiffness and consistent mass on the enriched node set
/// (vertices, two nodes per edge, one per face).
pub fn assemble_cubic_fem(mesh: &Mesh) -> Result<LaplacianPair, LaplacianError> {
    let v = mesh.vertices();
    let nv = mesh.num_vertices();
    let edges = mesh.edges();
    let ne = edges.len();
    let n = nv + 2 * ne + mesh.num_faces();
    let edge_node = |near: usize, far: usize| -> usize {
        let key = [near.min(far), near.max(far)];
        let e = edges.binary_search(&key).expect("edge of a face is in the edge list");
        nv + 2 * e + usize::from(near > far)
    };
    let r = &*REFERENCE;

    let mut entries = Vec::with_capacity(mesh.num_faces() * NODES * NODES);
    for (fi, f) in mesh.faces().iter().enumerate() {
        let e1 = sub(&v[f[1]], &v[f[0]]);
        let e2 = sub(&v[f[2]], &v[f[0]]);
        let twice_area = norm(&cross(&e1, &e2));
        let area = 0.5 * twice_area;
        if !(area >= MIN_FACE_AREA) {
            return Err(LaplacianError::DegenerateFace { face: fi, area });
        }
        // Inverse metric of the affine map, det G = (2A)².
        let (g00, g01, g11) = (dot(&e1, &e1), dot(&e1, &e2), dot(&e2, &e2));
        let det = twice_area * twice_area;
        let (h00, h01, h11) = (g11 / det, -g01 / det, g00 / det);

        let global: [usize; NODES] = std::array::from_fn(|a| match LOCAL[a] {
            Local::Corner(i) => f[i],
            Local::Edge { near, far } => edge_node(f[near], f[far]),
            Local::Centroid => nv + 2 * ne + fi,
        });
        for a in 0..NODES {
            for b in 0..NODES {
                let k = h00 * r.xx[a][b] + h01 * (r.xy[a][b] + r.xy[b][a]) + h11 * r.yy[a][b];
                entries.push((global[a], global[b], area * k, area * r.mass[a][b]));
            }
        }
    }

    let mut node_map: Vec<NodeRole> = (0..nv).map(NodeRole::Vertex).collect();
    for e in &edges {
        node_map.push(NodeRole::EdgeNode {
            edge: *e,
            t: 1.0 / 3.0,
        });
        node_map.push(NodeRole::EdgeNode {
            edge: *e,
            t: 2.0 / 3.0,
        });
    }
    node_map.extend((0..mesh.num_faces()).map(NodeRole::FaceNode));
    Ok(build_pair(n, &entries, node_map, Discretization::CubicFem))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NODE_BARY: [[f64; 3]; NODES] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [2.0 / 3.0, 1.0 / 3.0, 0.0],
        [1.0 / 3.0, 2.0 / 3.0, 0.0],
        [0.0, 2.0 / 3.0, 1.0 / 3.0],
        [0.0, 1.0 / 3.0, 2.0 / 3.0],
        [1.0 / 3.0, 0.0, 2.0 / 3.0],
        [2.0 / 3.0, 0.0, 1.0 / 3.0],
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    ];

    #[test]
    fn basis_is_nodal() {
        for (b, p) in NODE_BARY.iter().enumerate() {
            let (val, _) = basis(p);
            for (a, v) in val.iter().enumerate() {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-14, "phi_{a} at node {b} = {v}");
            }
        }
    }

    #[test]
    fn basis_gradients_match_finite_differences() {
        let l = [0.2, 0.45, 0.35];
        let (_, grad) = basis(&l);
        let h = 1e-6;
        for i in 0..3 {
            let mut lp = l;
            let mut lm = l;
            lp[i] += h;
            lm[i] -= h;
            let (vp, _) = basis(&lp);
            let (vm, _) = basis(&lm);
            for a in 0..NODES {
                let fd = (vp[a] - vm[a]) / (2.0 * h);
                assert!((fd - grad[a][i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn reference_blocks_annihilate_constants() {
        let r = &*REFERENCE;
        for a in 0..NODES {
            let row: f64 = r.xx[a].iter().sum::<f64>() + r.yy[a].iter().sum::<f64>();
            assert!(row.abs() < 1e-12);
        }
        let total: f64 = r.mass.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }
}
