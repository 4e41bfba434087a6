use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::AppError;
use crate::geometry::Vec3;
use crate::spectral_ae::ModelBundle;

/// Point-to-point assignment from one shape to another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// `map[i]` is the index in the target matched to source point `i`.
    pub map: Vec<usize>,
    /// Mean assignment distance.
    pub quality: f64,
}

/// Index and squared distance of the point of `points` (flat, `dim` per
/// point) nearest to `q`; ties go to the lowest index.
pub fn nearest_point(points: &[f64], dim: usize, q: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, p) in points.chunks_exact(dim).enumerate() {
        let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn decode_spectrum(bundle: &ModelBundle, spectrum: &[f64]) -> Result<Vec<f64>, AppError> {
    Ok(bundle.decode(&bundle.spec_to_latent(spectrum)?)?)
}

/// Correspondence between two shapes known only by their spectra: both are
/// decoded onto the template, whose shared vertex order is the map (always
/// the identity). `quality` is the mean distance between corresponding
/// decoded points.
pub fn match_shapes(bundle: &ModelBundle, spec_a: &[f64], spec_b: &[f64]) -> Result<Correspondence, AppError> {
    let d = bundle.template.dim;
    let a = decode_spectrum(bundle, spec_a)?;
    let b = if spec_a == spec_b { a.clone() } else { decode_spectrum(bundle, spec_b)? };
    let quality = a
        .chunks_exact(d)
        .zip(b.chunks_exact(d))
        .map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .sum::<f64>()
        / bundle.template.n as f64;
    Ok(Correspondence {
        map: (0..bundle.template.n).collect(),
        quality,
    })
}

/// Map every point of an external shape `a` to a point of `b` through the
/// template: nearest decoded vertex of `D(π(λ_a))`, the same template vertex
/// on `D(π(λ_b))`, then the nearest point of `b`. Coordinates are flat with
/// the template's dimension.
pub fn match_points(
    bundle: &ModelBundle,
    a: &[f64],
    spec_a: &[f64],
    b: &[f64],
    spec_b: &[f64],
) -> Result<Correspondence, AppError> {
    let d = bundle.template.dim;
    if a.is_empty() || b.is_empty() || a.len() % d != 0 || b.len() % d != 0 {
        return Err(AppError::InvalidArgument(format!("point sets must be nonempty with {d} coordinates per point")));
    }
    let ta = decode_spectrum(bundle, spec_a)?;
    let tb = decode_spectrum(bundle, spec_b)?;
    let mut map = Vec::with_capacity(a.len() / d);
    let mut total = 0.0;
    for p in a.chunks_exact(d) {
        let (j, d1) = nearest_point(&ta, d, p);
        let (m, d2) = nearest_point(b, d, &tb[j * d..(j + 1) * d]);
        map.push(m);
        total += d1.sqrt() + d2.sqrt();
    }
    let quality = total / map.len() as f64;
    Ok(Correspondence { map, quality })
}

/// Labels for the source points of `corr`, read off the target labels.
/// To move labels from shape A to shape B, match B onto A.
pub fn propagate_labels<L: Clone>(corr: &Correspondence, target_labels: &[L]) -> Result<Vec<L>, AppError> {
    corr.map
        .iter()
        .map(|&j| {
            target_labels
                .get(j)
                .cloned()
                .ok_or_else(|| AppError::InvalidArgument(format!("no label for target point {j}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    /// Row-major rotation `R`; `a` is aligned as `R·a + t`.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    /// Mean squared nearest-neighbour distance before the first fit and
    /// after every iteration.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl IcpResult {
    pub fn residual(&self) -> f64 {
        *self.residuals.last().unwrap()
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        let r = &self.rotation;
        let t = &self.translation;
        [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i])
    }

    /// Rotation angle of `R` in radians.
    pub fn angle(&self) -> f64 {
        let r = &self.rotation;
        (0.5 * (r[0][0] + r[1][1] + r[2][2] - 1.0)).clamp(-1.0, 1.0).acos()
    }
}

fn centroid(p: &[Vec3]) -> Vector3<f64> {
    p.iter().map(|x| Vector3::from(*x)).sum::<Vector3<f64>>() / p.len() as f64
}

fn check_spread(p: &[Vec3], name: &str) -> Result<(), AppError> {
    if p.len() < 3 {
        return Err(AppError::Degenerate(format!("{name} has {} points, need 3", p.len())));
    }
    let c = centroid(p);
    let scatter: Matrix3<f64> = p
        .iter()
        .map(|x| {
            let d = Vector3::from(*x) - c;
            d * d.transpose()
        })
        .sum();
    let s = scatter.symmetric_eigenvalues();
    let (lo, hi) = (s.min(), s.max());
    let mid = s.sum() - lo - hi;
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(AppError::Degenerate(format!("{name} is collinear")));
    }
    Ok(())
}

/// Least-squares rigid motion taking `a[i]` to `b[i]` (Kabsch).
fn kabsch(a: &[Vec3], b: &[Vec3]) -> (Matrix3<f64>, Vector3<f64>) {
    let (ca, cb) = (centroid(a), centroid(b));
    let h: Matrix3<f64> = a
        .iter()
        .zip(b)
        .map(|(p, q)| (Vector3::from(*p) - ca) * (Vector3::from(*q) - cb).transpose())
        .sum();
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    (r, cb - r * ca)
}

/// Point-to-point ICP aligning `a` onto `b`: pair every point of `a` with
/// its nearest point of `b`, fit the rigid motion to the pairs, repeat.
/// Stops early once the pairing no longer changes.
pub fn icp_rigid(a: &[Vec3], b: &[Vec3], iters: usize) -> Result<IcpResult, AppError> {
    check_spread(a, "source")?;
    check_spread(b, "target")?;
    let flat_b: Vec<f64> = b.iter().flatten().copied().collect();
    let (mut r, mut t) = (Matrix3::identity(), Vector3::zeros());
    let pair = |r: &Matrix3<f64>, t: &Vector3<f64>| -> (Vec<usize>, f64) {
        let mut sum = 0.0;
        let idx = a
            .iter()
            .map(|p| {
                let q = r * Vector3::from(*p) + t;
                let (j, d) = nearest_point(&flat_b, 3, q.as_slice());
                sum += d;
                j
            })
            .collect();
        (idx, sum / a.len() as f64)
    };
    let (mut pairs, e0) = pair(&r, &t);
    let mut residuals = vec![e0];
    let mut iterations = 0;
    for _ in 0..iters {
        let targets: Vec<Vec3> = pairs.iter().map(|&j| b[j]).collect();
        let (nr, nt) = kabsch(a, &targets);
        let (next, e) = pair(&nr, &nt);
        iterations += 1;
        // Pairing is a fixed point; a further fit cannot lower the residual.
        let done = next == pairs;
        if e <= *residuals.last().unwrap() {
            r = nr;
            t = nt;
            residuals.push(e);
        } else {
            residuals.push(*residuals.last().unwrap());
            break;
        }
        pairs = next;
        if done {
            break;
        }
    }
    let rotation = [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]);
    Ok(IcpResult {
        rotation,
        translation: [t.x, t.y, t.z],
        residuals,
        iterations,
    })
}
