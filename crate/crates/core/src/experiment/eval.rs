use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ExperimentError, FamilyData};
use crate::apps::{
    estimate_spectrum, icp_rigid, match_points, nearest_point, per_point_mse, shape_from_spectrum, style_transfer,
    super_resolve, LatentIndex, SpectrumIndex, StyleTransferConfig,
};
use crate::eigensolve::FemOrder;
use crate::geometry::{decimate, PointCloud, SamplingMode, Shape, Vec3};
use crate::spectral_ae::{ModelBundle, Template};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-vertex MSE of `D(π(λ))` against the true shape, per held-out shape.
pub fn spectrum_mse(model: &ModelBundle, data: &FamilyData) -> Result<Vec<f64>, ExperimentError> {
    data.test_range()
        .map(|i| {
            let out = shape_from_spectrum(model, data.spectrum(i, model.k))?;
            Ok(per_point_mse(&out.shape.flat_coords(), &data.shapes[i].flat_coords(), model.template.dim))
        })
        .collect()
}

/// Per-vertex MSE of the training shape with the closest spectrum.
pub fn nn_mse(data: &FamilyData, k: usize) -> Result<Vec<f64>, ExperimentError> {
    let index = SpectrumIndex::new(data.train_range().map(|i| data.spectrum(i, k).to_vec()).collect())?;
    let dim = data.shapes[0].dim();
    data.test_range()
        .map(|i| {
            let (j, _) = index.nearest(data.spectrum(i, k))?;
            Ok(per_point_mse(&data.shapes[j].flat_coords(), &data.shapes[i].flat_coords(), dim))
        })
        .collect()
}

/// Per-vertex MSE of the auto-encoder reconstruction `D(E(X))`.
pub fn reconstruction_mse(model: &ModelBundle, data: &FamilyData) -> Result<Vec<f64>, ExperimentError> {
    data.test_range()
        .map(|i| {
            let x = data.shapes[i].flat_coords();
            Ok(per_point_mse(&model.reconstruct(&x)?, &x, model.template.dim))
        })
        .collect()
}

/// Relative ℓ₂ error of `ρ(π(λ))` against `λ`.
pub fn cycle_errors(model: &ModelBundle, data: &FamilyData) -> Result<Vec<f64>, ExperimentError> {
    data.test_range()
        .map(|i| {
            let l = data.spectrum(i, model.k);
            let back = model.latent_to_spec(&model.spec_to_latent(l)?)?;
            Ok(l2(&back, l) / l2(l, &vec![0.0; l.len()]))
        })
        .collect()
}

/// MSE on the template of the super-resolved output, for held-out meshes
/// decimated to `fraction` of their vertices (kept whole at fraction 1),
/// spectra of the given order.
pub fn super_resolution_mse(
    model: &ModelBundle,
    data: &FamilyData,
    fraction: f64,
    order: FemOrder,
) -> Result<Vec<f64>, ExperimentError> {
    data.test_range()
        .map(|i| {
            let Shape::Mesh(m) = &data.shapes[i] else {
                return Err(ExperimentError::Invalid("super-resolution needs a mesh family".into()));
            };
            let target = ((m.num_vertices() as f64) * fraction).round() as usize;
            // Fraction 1 is the full-resolution reference.
            let low = if target >= m.num_vertices() {
                data.shapes[i].clone()
            } else {
                Shape::Mesh(decimate(m, target)?)
            };
            let out = super_resolve(model, &low, order)?;
            Ok(per_point_mse(&out.shape.flat_coords(), &data.shapes[i].flat_coords(), 3))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleOutcome {
    pub initial_gap: f64,
    pub final_gap: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// Style transfer between held-out shapes: the pose of `i`, the spectrum
/// of `j`, for each pair.
pub fn style_outcomes(
    model: &ModelBundle,
    data: &FamilyData,
    pairs: &[(usize, usize)],
    cfg: &StyleTransferConfig,
) -> Result<Vec<StyleOutcome>, ExperimentError> {
    pairs
        .iter()
        .map(|&(i, j)| {
            let st = style_transfer(model, data.spectrum(j, model.k), &data.shapes[i], cfg)?;
            Ok(StyleOutcome {
                initial_gap: st.initial_gap(),
                final_gap: st.final_gap(),
                initial_objective: st.curve[0].objective,
                final_objective: st.curve[st.best_step].objective,
            })
        })
        .collect()
}

/// Held-out index pairs `(n_train + a, n_train + b)`, `a ≠ b`, drawn
/// deterministically.
pub fn test_pairs(data: &FamilyData, count: usize, seed: u64) -> Vec<(usize, usize)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let r = data.test_range();
    let mut out = Vec::with_capacity(count);
    while out.len() < count && r.len() > 1 {
        let (a, b) = (rng.random_range(r.clone()), rng.random_range(r.clone()));
        if a != b {
            out.push((a, b));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudOutcome {
    /// ℓ₂ error of `ρ(E(cloud))` against the mesh spectrum.
    pub ours: f64,
    /// ℓ₂ error of the nearest-latent training spectrum.
    pub nn: f64,
}

/// Spectrum estimates on held-out clouds sampled with `mode`.
pub fn pointcloud_outcomes(
    model: &ModelBundle,
    data: &FamilyData,
    index: &LatentIndex,
    fraction: f64,
    mode: SamplingMode,
    seed: u64,
) -> Result<Vec<CloudOutcome>, ExperimentError> {
    data.test_range()
        .map(|i| {
            let cloud = PointCloud::new(data.cloud(i, fraction, seed, mode)?)?;
            let truth = data.spectrum(i, model.k);
            let est = estimate_spectrum(model, &cloud)?;
            let (_, nn) = index.estimate(model, &cloud)?;
            Ok(CloudOutcome {
                ours: l2(&est, truth),
                nn: l2(nn, truth),
            })
        })
        .collect()
}

/// Nearest-latent index over the training clouds.
pub fn training_latent_index(
    model: &ModelBundle,
    data: &FamilyData,
    fraction: f64,
    seed: u64,
) -> Result<LatentIndex, ExperimentError> {
    let clouds = data
        .train_range()
        .map(|i| Ok(PointCloud::new(data.cloud(i, fraction, seed, SamplingMode::Uniform)?)?))
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let spectra = data.train_range().map(|i| data.spectrum(i, model.k).to_vec()).collect();
    Ok(LatentIndex::build(model, &clouds, spectra)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    /// Fraction of points matched within the tolerance, decoder ordering.
    pub ours: f64,
    /// Same for rigid ICP followed by nearest neighbours.
    pub icp: f64,
    /// Mean matching error of ours over the target diameter.
    pub ours_mean_error: f64,
}

fn points3(flat: &[f64]) -> Vec<Vec3> {
    flat.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect()
}

/// Dense matching between family members whose true correspondence is the
/// shared vertex order. A match is correct within `tol` times the target
/// diameter.
pub fn matching_outcomes(
    model: &ModelBundle,
    data: &FamilyData,
    pairs: &[(usize, usize)],
    tol: f64,
) -> Result<Vec<MatchOutcome>, ExperimentError> {
    pairs
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (data.shapes[i].flat_coords(), data.shapes[j].flat_coords());
            let Shape::Mesh(mb) = &data.shapes[j] else {
                return Err(ExperimentError::Invalid("matching needs a mesh family".into()));
            };
            let diam = mb.diameter();
            let score = |map: &[usize]| -> (f64, f64) {
                let mut hit = 0usize;
                let mut err = 0.0;
                for (v, &m) in map.iter().enumerate() {
                    let e = l2(&b[3 * m..3 * m + 3], &b[3 * v..3 * v + 3]);
                    hit += (e <= tol * diam) as usize;
                    err += e;
                }
                (hit as f64 / map.len() as f64, err / map.len() as f64 / diam)
            };
            let corr = match_points(model, &a, data.spectrum(i, model.k), &b, data.spectrum(j, model.k))?;
            let (ours, ours_mean_error) = score(&corr.map);
            let (pa, pb) = (points3(&a), points3(&b));
            let fit = icp_rigid(&pa, &pb, 100)?;
            let icp_map: Vec<usize> = pa.iter().map(|p| nearest_point(&b, 3, &fit.apply(p)).0).collect();
            let (icp, _) = score(&icp_map);
            Ok(MatchOutcome {
                ours,
                icp,
                ours_mean_error,
            })
        })
        .collect()
}

/// Median wall time of `shape_from_spectrum` for a freshly initialised
/// dense model with an `n`-point 3D template.
pub fn decode_latency(n: usize, k: usize, runs: usize) -> Result<Duration, ExperimentError> {
    let model = ModelBundle::build_dense(Template { n, dim: 3, faces: None }, k, 0)?;
    let spectrum: Vec<f64> = (0..k).map(|i| i as f64).collect();
    shape_from_spectrum(&model, &spectrum)?;
    let mut times: Vec<Duration> = (0..runs.max(1))
        .map(|_| {
            let start = Instant::now();
            shape_from_spectrum(&model, &spectrum).map(|_| start.elapsed())
        })
        .collect::<Result<_, _>>()?;
    times.sort();
    Ok(times[times.len() / 2])
}
