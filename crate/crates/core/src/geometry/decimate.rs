//! Quadric-error edge-collapse decimation.
//!
//! Collapses are applied one at a time, cheapest first (ties broken by vertex
//! index so the result is deterministic). A collapse is only accepted when it
//! passes the link condition and flips no face, so the output stays
//! edge-manifold and connected.

use std::collections::{BTreeSet, HashMap};

use super::{cross, dot, norm, sub, GeometryError, Mesh, Vec3, DEGENERATE_AREA};

type Quadric = [f64; 10];

fn plane_quadric(n: &Vec3, d: f64, w: f64) -> Quadric {
    let [a, b, c] = *n;
    [
        w * a * a,
        w * a * b,
        w * a * c,
        w * a * d,
        w * b * b,
        w * b * c,
        w * b * d,
        w * c * c,
        w * c * d,
        w * d * d,
    ]
}

fn add(q: &mut Quadric, r: &Quadric) {
    q.iter_mut().zip(r).for_each(|(x, y)| *x += y);
}

fn eval(q: &Quadric, p: &Vec3) -> f64 {
    let [x, y, z] = *p;
    q[0] * x * x + 2.0 * q[1] * x * y + 2.0 * q[2] * x * z + 2.0 * q[3] * x
        + q[4] * y * y + 2.0 * q[5] * y * z + 2.0 * q[6] * y
        + q[7] * z * z + 2.0 * q[8] * z
        + q[9]
}

/// Minimiser of the quadric, if the 3x3 system is well conditioned.
fn optimum(q: &Quadric) -> Option<Vec3> {
    let a = nalgebra::Matrix3::new(q[0], q[1], q[2], q[1], q[4], q[5], q[2], q[5], q[7]);
    let b = nalgebra::Vector3::new(-q[3], -q[6], -q[8]);
    let scale = a.abs().max();
    if scale == 0.0 || a.determinant().abs() < 1e-10 * scale.powi(3) {
        return None;
    }
    a.lu().solve(&b).map(|x| [x.x, x.y, x.z])
}

struct Candidate {
    cost: f64,
    u: usize,
    v: usize,
    target: Vec3,
}

/// Reduce `mesh` to exactly `target_n` vertices.
pub fn decimate(mesh: &Mesh, target_n: usize) -> Result<Mesh, GeometryError> {
    let n = mesh.num_vertices();
    if target_n < 4 || target_n >= n {
        return Err(GeometryError::InvalidArgument(format!(
            "decimation target {target_n} must satisfy 4 <= target < {n}"
        )));
    }
    let mut pos: Vec<Vec3> = mesh.vertices().to_vec();
    let mut faces: Vec<[usize; 3]> = mesh.faces().to_vec();
    let mut alive_face = vec![true; faces.len()];
    let mut alive_count = n;

    let mut quadrics: Vec<Quadric> = vec![[0.0; 10]; n];
    for f in &faces {
        let [a, b, c] = f.map(|i| pos[i]);
        let nrm = cross(&sub(&b, &a), &sub(&c, &a));
        let len = norm(&nrm);
        let unit = [nrm[0] / len, nrm[1] / len, nrm[2] / len];
        let q = plane_quadric(&unit, -dot(&unit, &a), 0.5 * len);
        for &i in f {
            add(&mut quadrics[i], &q);
        }
    }
    // Boundary edges get a heavy perpendicular plane so open borders keep
    // their shape.
    for [a, b] in mesh.boundary_edges() {
        let face = faces.iter().find(|f| f.contains(&a) && f.contains(&b)).unwrap();
        let [p, q, r] = face.map(|i| pos[i]);
        let fn_ = cross(&sub(&q, &p), &sub(&r, &p));
        let e = sub(&pos[b], &pos[a]);
        let perp = cross(&e, &fn_);
        let len = norm(&perp);
        if len > 0.0 {
            let unit = [perp[0] / len, perp[1] / len, perp[2] / len];
            let w = 100.0 * dot(&e, &e);
            let q = plane_quadric(&unit, -dot(&unit, &pos[a]), w);
            add(&mut quadrics[a], &q);
            add(&mut quadrics[b], &q);
        }
    }

    while alive_count > target_n {
        let mut vf: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            if !alive_face[fi] {
                continue;
            }
            for i in 0..3 {
                vf[f[i]].push(fi);
                let (a, b, c) = (f[i], f[(i + 1) % 3], f[(i + 2) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push(c);
            }
        }
        let mut boundary_vertex = vec![false; n];
        for (&(a, b), opp) in &edges {
            if opp.len() == 1 {
                boundary_vertex[a] = true;
                boundary_vertex[b] = true;
            }
        }
        let neighbours = |x: usize| -> BTreeSet<usize> {
            vf[x]
                .iter()
                .flat_map(|&fi| faces[fi])
                .filter(|&y| y != x)
                .collect()
        };

        let mut candidates: Vec<Candidate> = edges
            .keys()
            .map(|&(u, v)| {
                let mut q = quadrics[u];
                add(&mut q, &quadrics[v]);
                let mid = [
                    0.5 * (pos[u][0] + pos[v][0]),
                    0.5 * (pos[u][1] + pos[v][1]),
                    0.5 * (pos[u][2] + pos[v][2]),
                ];
                let mut options = vec![mid, pos[u], pos[v]];
                if let Some(p) = optimum(&q) {
                    options.insert(0, p);
                }
                let (target, cost) = options
                    .into_iter()
                    .map(|p| (p, eval(&q, &p)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                Candidate {
                    cost,
                    u,
                    v,
                    target,
                }
            })
            .collect();
        candidates.sort_by(|a, b| {
            a.cost
                .total_cmp(&b.cost)
                .then(a.u.cmp(&b.u))
                .then(a.v.cmp(&b.v))
        });

        let mut applied = false;
        for cand in &candidates {
            let (u, v) = (cand.u, cand.v);
            let opp = &edges[&(u, v)];
            let is_boundary_edge = opp.len() == 1;
            if !is_boundary_edge && boundary_vertex[u] && boundary_vertex[v] {
                continue;
            }
            let common: BTreeSet<usize> = neighbours(u).intersection(&neighbours(v)).copied().collect();
            let opp_set: BTreeSet<usize> = opp.iter().copied().collect();
            if common != opp_set {
                continue;
            }
            // Orientation and area of every surviving face around u and v.
            let mut ok = true;
            for &fi in vf[u].iter().chain(vf[v].iter()) {
                let f = faces[fi];
                if f.contains(&u) && f.contains(&v) {
                    continue;
                }
                let [a, b, c] = f.map(|i| pos[i]);
                let before = cross(&sub(&b, &a), &sub(&c, &a));
                let moved = f.map(|i| if i == u || i == v { cand.target } else { pos[i] });
                let after = cross(&sub(&moved[1], &moved[0]), &sub(&moved[2], &moved[0]));
                let (lb, la) = (norm(&before), norm(&after));
                if 0.5 * la <= 10.0 * DEGENERATE_AREA || dot(&before, &after) <= 0.2 * lb * la {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }

            pos[u] = cand.target;
            let qv = quadrics[v];
            add(&mut quadrics[u], &qv);
            for &fi in &vf[v] {
                if faces[fi].contains(&u) {
                    alive_face[fi] = false;
                } else {
                    for idx in faces[fi].iter_mut() {
                        if *idx == v {
                            *idx = u;
                        }
                    }
                }
            }
            alive_count -= 1;
            applied = true;
            break;
        }
        if !applied {
            return Err(GeometryError::Decimation(format!(
                "no valid collapse left at {alive_count} vertices (target {target_n})"
            )));
        }
    }

    let mut remap = vec![usize::MAX; n];
    let mut vertices = Vec::with_capacity(target_n);
    let mut out_faces = Vec::new();
    for (fi, f) in faces.iter().enumerate() {
        if !alive_face[fi] {
            continue;
        }
        let g = f.map(|i| {
            if remap[i] == usize::MAX {
                remap[i] = vertices.len();
                vertices.push(pos[i]);
            }
            remap[i]
        });
        out_faces.push(g);
    }
    Mesh::new(vertices, out_faces).map_err(|e| GeometryError::Decimation(e.to_string()))
}
