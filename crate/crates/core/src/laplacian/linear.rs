use super::{build_pair, Discretization, LaplacianError, LaplacianPair, NodeRole, MIN_FACE_AREA};
use crate::geometry::{cross, dot, norm, sub, Mesh};

/// Cotangent stiffness and consistent P1 mass.
pub fn assemble_linear_fem(mesh: &Mesh) -> Result<LaplacianPair, LaplacianError> {
    let v = mesh.vertices();
    let mut entries = Vec::with_capacity(mesh.num_faces() * 9);
    for (fi, f) in mesh.faces().iter().enumerate() {
        let [a, b, c] = f.map(|i| v[i]);
        let twice_area = norm(&cross(&sub(&b, &a), &sub(&c, &a)));
        let area = 0.5 * twice_area;
        if !(area >= MIN_FACE_AREA) {
            return Err(LaplacianError::DegenerateFace { face: fi, area });
        }
        for corner in 0..3 {
            let (i, j, k) = (f[corner], f[(corner + 1) % 3], f[(corner + 2) % 3]);
            // Half the cotangent of the angle at i weights the opposite edge.
            let w = 0.5 * dot(&sub(&v[j], &v[i]), &sub(&v[k], &v[i])) / twice_area;
            entries.push((j, k, -w, 0.0));
            entries.push((k, j, -w, 0.0));
            entries.push((j, j, w, 0.0));
            entries.push((k, k, w, 0.0));
        }
        for p in 0..3 {
            for q in 0..3 {
                let m = if p == q { area / 6.0 } else { area / 12.0 };
                entries.push((f[p], f[q], 0.0, m));
            }
        }
    }
    let node_map = (0..mesh.num_vertices()).map(NodeRole::Vertex).collect();
    Ok(build_pair(
        mesh.num_vertices(),
        &entries,
        node_map,
        Discretization::LinearFem,
    ))
}
