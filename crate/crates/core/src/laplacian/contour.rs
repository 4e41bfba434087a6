use super::{build_pair, Discretization, LaplacianError, LaplacianPair, NodeRole};
use crate::geometry::Contour;

/// Linear elements on the closed polyline.
pub fn assemble_contour_fem(contour: &Contour) -> Result<LaplacianPair, LaplacianError> {
    let n = contour.len();
    let lengths = contour.edge_lengths();
    let mut entries = Vec::with_capacity(4 * n);
    for (e, &l) in lengths.iter().enumerate() {
        if !(l > 0.0) {
            return Err(LaplacianError::ZeroLengthEdge { edge: e });
        }
        let (i, j) = (e, (e + 1) % n);
        let (k, d, o) = (1.0 / l, l / 3.0, l / 6.0);
        entries.push((i, i, k, d));
        entries.push((j, j, k, d));
        entries.push((i, j, -k, o));
        entries.push((j, i, -k, o));
    }
    let node_map = (0..n).map(NodeRole::Vertex).collect();
    Ok(build_pair(n, &entries, node_map, Discretization::ContourFem))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_polygon_is_scaled_second_difference() {
        let n = 12;
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        let c = Contour::new(pts).unwrap();
        let l = c.edge_lengths()[0];
        let p = assemble_contour_fem(&c).unwrap();
        for i in 0..n {
            for j in 0..n {
                let d = (i as isize - j as isize).rem_euclid(n as isize);
                let expect = match d {
                    0 => 2.0 / l,
                    1 => -1.0 / l,
                    x if x == n as isize - 1 => -1.0 / l,
                    _ => 0.0,
                };
                assert!((p.stiffness.get(i, j) - expect).abs() < 1e-12 / l);
            }
        }
        assert!((p.measure() - c.perimeter()).abs() < 1e-12);
    }
}
