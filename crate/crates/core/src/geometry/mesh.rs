use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{cross, dot, norm, sub, GeometryError, Vec3};

/// Faces with an area at or below this are rejected.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// A validated triangle mesh: indices in range, no degenerate faces,
/// edge-manifold with consistent orientation, and connected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMesh", into = "RawMesh")]
pub struct Mesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

#[derive(Serialize, Deserialize)]
struct RawMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TryFrom<RawMesh> for Mesh {
    type Error = GeometryError;
    fn try_from(raw: RawMesh) -> Result<Self, Self::Error> {
        Mesh::new(raw.vertices, raw.faces)
    }
}

impl From<Mesh> for RawMesh {
    fn from(m: Mesh) -> Self {
        RawMesh {
            vertices: m.vertices,
            faces: m.faces,
        }
    }
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        validate(&vertices, &faces)?;
        Ok(Mesh { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Unique undirected edges as `[min, max]`, sorted.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .faces
            .iter()
            .flat_map(|f| {
                (0..3).map(move |i| {
                    let (a, b) = (f[i], f[(i + 1) % 3]);
                    [a.min(b), a.max(b)]
                })
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Edges used by exactly one face.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let mut count: HashMap<[usize; 2], usize> = HashMap::new();
        for f in &self.faces {
            for i in 0..3 {
                let (a, b) = (f[i], f[(i + 1) % 3]);
                *count.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
        let mut out: Vec<_> = count
            .into_iter()
            .filter(|(_, c)| *c == 1)
            .map(|(e, _)| e)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_closed(&self) -> bool {
        self.boundary_edges().is_empty()
    }

    /// Edge lengths in the order of [`Mesh::edges`].
    pub fn edge_lengths(&self) -> Vec<f64> {
        self.edges()
            .iter()
            .map(|[a, b]| norm(&sub(&self.vertices[*a], &self.vertices[*b])))
            .collect()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Largest pairwise vertex distance (brute force).
    pub fn diameter(&self) -> f64 {
        diameter(&self.vertices)
    }

    /// Same connectivity with every vertex mapped through `f`; revalidated.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Mesh, GeometryError> {
        Mesh::new(self.vertices.iter().map(f).collect(), self.faces.clone())
    }

    pub fn scaled(&self, c: f64) -> Result<Mesh, GeometryError> {
        self.map_vertices(|v| [v[0] * c, v[1] * c, v[2] * c])
    }

    /// Same connectivity with new coordinates (for decoder output).
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Mesh, GeometryError> {
        if vertices.len() != self.vertices.len() {
            return Err(GeometryError::InvalidArgument(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Mesh::new(vertices, self.faces.clone())
    }
}

pub(crate) fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * norm(&cross(&sub(b, a), &sub(c, a)))
}

pub(crate) fn diameter(points: &[Vec3]) -> f64 {
    let mut best = 0.0f64;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            best = best.max(norm(&sub(p, q)));
        }
    }
    best
}

fn validate(vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<(), GeometryError> {
    let n = vertices.len();
    if n < 3 {
        return Err(GeometryError::TooFewPoints { got: n, min: 3 });
    }
    if let Some(index) = vertices.iter().position(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(GeometryError::NonFinite { index });
    }
    if faces.is_empty() {
        return Err(GeometryError::InvalidArgument("mesh has no faces".into()));
    }
    for (fi, f) in faces.iter().enumerate() {
        if let Some(&index) = f.iter().find(|&&i| i >= n) {
            return Err(GeometryError::FaceIndexOutOfRange { face: fi, index, n });
        }
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            return Err(GeometryError::DegenerateFace { face: fi, area: 0.0 });
        }
        let area = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
        if !(area > DEGENERATE_AREA) {
            return Err(GeometryError::DegenerateFace { face: fi, area });
        }
    }

    let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
    let mut undirected: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
    for f in faces {
        for i in 0..3 {
            let (a, b) = (f[i], f[(i + 1) % 3]);
            let d = directed.entry((a, b)).or_default();
            *d += 1;
            if *d > 1 {
                return Err(GeometryError::InconsistentOrientation { a, b });
            }
            *undirected.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    if let Some((&(a, b), &count)) = undirected
        .iter()
        .filter(|(_, &c)| c > 2)
        .min_by_key(|(e, _)| **e)
    {
        return Err(GeometryError::NonManifoldEdge { a, b, count });
    }

    // Connectivity over the face graph; unreferenced vertices count as
    // separate components.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for f in faces {
        for i in 0..2 {
            let (ra, rb) = (find(&mut parent, f[i]), find(&mut parent, f[i + 1]));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let root0 = find(&mut parent, 0);
    let mut roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let witness = roots.iter().position(|&r| r != root0);
    if let Some(witness) = witness {
        roots.sort_unstable();
        roots.dedup();
        return Err(GeometryError::Disconnected {
            components: roots.len(),
            witness,
        });
    }
    Ok(())
}

/// Unit icosphere: the icosahedron refined `subdiv` times by edge midpoint
/// splitting with every vertex projected back to the sphere.
/// Has `10 * 4^s + 2` vertices and `20 * 4^s` faces.
pub fn icosphere(subdiv: usize) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    for v in vertices.iter_mut() {
        let r = norm(v);
        v.iter_mut().for_each(|x| *x /= r);
    }
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                let mut m = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0];
                let r = norm(&m);
                m.iter_mut().for_each(|x| *x /= r);
                vertices.push(m);
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    Mesh::new(vertices, faces).expect("icosphere is a valid closed mesh")
}

/// Euclidean distance from `p` to the closed triangle `abc`.
pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    // Ericson, closest point on triangle by Voronoi regions.
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    let closest = if d1 <= 0.0 && d2 <= 0.0 {
        *a
    } else {
        let bp = sub(p, b);
        let d3 = dot(&ab, &bp);
        let d4 = dot(&ac, &bp);
        let cp = sub(p, c);
        let d5 = dot(&ab, &cp);
        let d6 = dot(&ac, &cp);
        let vc = d1 * d4 - d3 * d2;
        let vb = d5 * d2 - d1 * d6;
        let va = d3 * d6 - d5 * d4;
        let lerp = |o: &Vec3, d: &Vec3, t: f64| [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]];
        if d3 >= 0.0 && d4 <= d3 {
            *b
        } else if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            lerp(a, &ab, d1 / (d1 - d3))
        } else if d6 >= 0.0 && d5 <= d6 {
            *c
        } else if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            lerp(a, &ac, d2 / (d2 - d6))
        } else if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            lerp(b, &sub(c, b), (d4 - d3) / ((d4 - d3) + (d5 - d6)))
        } else {
            let denom = 1.0 / (va + vb + vc);
            let v = vb * denom;
            let w = vc * denom;
            [
                a[0] + ab[0] * v + ac[0] * w,
                a[1] + ab[1] * v + ac[1] * w,
                a[2] + ab[2] * v + ac[2] * w,
            ]
        }
    };
    norm(&sub(p, &closest))
}
