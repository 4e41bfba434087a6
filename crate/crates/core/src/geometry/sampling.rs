use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::triangle_area;
use super::{GeometryError, Mesh, PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Random subset of the mesh vertices.
    Vertices,
    /// Area-weighted uniform surface samples.
    #[default]
    Uniform,
    /// Surface samples whose density varies smoothly (up to `e^4`) along a
    /// random direction.
    NonUniform,
}

/// Density contrast exponent of [`SamplingMode::NonUniform`].
const NONUNIFORM_BIAS: f64 = 2.0;

/// Draw `ceil(fraction * n)` points from the surface of `mesh`.
pub fn sample_pointcloud(
    mesh: &Mesh,
    fraction: f64,
    seed: u64,
    mode: SamplingMode,
) -> Result<PointCloud, GeometryError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(GeometryError::ParameterOutOfBounds {
            name: "fraction".into(),
            value: fraction,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let count = (fraction * mesh.num_vertices() as f64).ceil() as usize;
    if count < PointCloud::MIN_POINTS {
        return Err(GeometryError::TooFewPoints {
            got: count,
            min: PointCloud::MIN_POINTS,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = mesh.vertices();
    let points: Vec<Vec3> = match mode {
        SamplingMode::Vertices => {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.shuffle(&mut rng);
            idx[..count].iter().map(|&i| v[i]).collect()
        }
        SamplingMode::Uniform | SamplingMode::NonUniform => {
            let weights: Vec<f64> = if mode == SamplingMode::Uniform {
                (0..mesh.num_faces()).map(|f| mesh.face_area(f)).collect()
            } else {
                density_weights(mesh, &mut rng)
            };
            let mut cdf = Vec::with_capacity(weights.len());
            let mut acc = 0.0;
            for w in &weights {
                acc += w;
                cdf.push(acc);
            }
            (0..count)
                .map(|_| {
                    let u = rng.random::<f64>() * acc;
                    let f = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                    let [a, b, c] = mesh.faces()[f].map(|i| v[i]);
                    let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                    let s = r1.sqrt();
                    let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
                    [
                        wa * a[0] + wb * b[0] + wc * c[0],
                        wa * a[1] + wb * b[1] + wc * c[1],
                        wa * a[2] + wb * b[2] + wc * c[2],
                    ]
                })
                .collect()
        }
    };
    PointCloud::new(points)
}

fn density_weights(mesh: &Mesh, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v = mesh.vertices();
    // Random direction, uniform on the sphere.
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi: f64 = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    let r = (1.0 - z * z).sqrt();
    let dir = [r * phi.cos(), r * phi.sin(), z];
    let centroids: Vec<Vec3> = mesh
        .faces()
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| v[i]);
            [
                (a[0] + b[0] + c[0]) / 3.0,
                (a[1] + b[1] + c[1]) / 3.0,
                (a[2] + b[2] + c[2]) / 3.0,
            ]
        })
        .collect();
    let proj: Vec<f64> = centroids
        .iter()
        .map(|c| c[0] * dir[0] + c[1] * dir[1] + c[2] * dir[2])
        .collect();
    let lo = proj.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    mesh.faces()
        .iter()
        .zip(&proj)
        .map(|(f, p)| {
            let t = 2.0 * (p - lo) / span - 1.0;
            triangle_area(&v[f[0]], &v[f[1]], &v[f[2]]) * (NONUNIFORM_BIAS * t).exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{icosphere, point_triangle_distance};

    #[test]
    fn vertex_mode_full_fraction() {
        let m = icosphere(2);
        let pc = sample_pointcloud(&m, 1.0, 3, SamplingMode::Vertices).unwrap();
        assert_eq!(pc.len(), 162);
        for p in pc.points() {
            assert!(m.vertices().contains(p));
        }
    }

    #[test]
    fn uniform_points_lie_on_surface() {
        let m = icosphere(3);
        let pc = sample_pointcloud(&m, 0.2, 11, SamplingMode::Uniform).unwrap();
        assert_eq!(pc.len(), (0.2f64 * 642.0).ceil() as usize);
        for p in pc.points() {
            let d = m
                .faces()
                .iter()
                .map(|f| {
                    let [a, b, c] = f.map(|i| m.vertices()[i]);
                    point_triangle_distance(p, &a, &b, &c)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1e-9);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let m = icosphere(2);
        for mode in [SamplingMode::Vertices, SamplingMode::Uniform, SamplingMode::NonUniform] {
            let a = sample_pointcloud(&m, 0.3, 5, mode).unwrap();
            let b = sample_pointcloud(&m, 0.3, 5, mode).unwrap();
            assert_eq!(a, b);
            let c = sample_pointcloud(&m, 0.3, 6, mode).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn rejects_bad_fraction_and_tiny_result() {
        let m = icosphere(0);
        assert!(sample_pointcloud(&m, 0.0, 1, SamplingMode::Uniform).is_err());
        assert!(sample_pointcloud(&m, 1.5, 1, SamplingMode::Uniform).is_err());
        assert!(matches!(
            sample_pointcloud(&m, 0.1, 1, SamplingMode::Uniform),
            Err(GeometryError::TooFewPoints { .. })
        ));
    }
}
