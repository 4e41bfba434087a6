use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{InputKind, LossOptions, LossParts, ModelBundle, ModelError, Normalization};
use crate::neural::{Adam, Mode, NeuralError, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub alpha: f64,
    pub k: usize,
    /// Train `ρ` through the second coupling term; off for the ablation.
    pub rho_term: bool,
    /// Abort when the smoothed epoch loss exceeds this multiple of its best.
    pub divergence_factor: f64,
    /// Epochs in the moving average used by the divergence check.
    pub smoothing_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            lr: 1e-4,
            epochs: 300,
            seed: 0,
            alpha: super::DEFAULT_ALPHA,
            k: super::DEFAULT_K,
            rho_term: true,
            divergence_factor: 4.0,
            smoothing_window: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 (batch norm needs two samples)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.epochs == 0 || self.k == 0 || self.smoothing_window == 0 {
            return bad("epochs, k and smoothing_window must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be nonnegative");
        }
        if !(self.divergence_factor > 1.0) {
            return bad("divergence_factor must exceed 1");
        }
        Ok(())
    }
}

/// Raw training data: flat coordinates (template order, or point clouds
/// sharing one point count) and eigenvalues with exactly `k` entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub inputs: Vec<Vec<f64>>,
    pub spectra: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub recon: f64,
    pub spectral: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub steps: u64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,loss_x,loss_lambda\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", e.epoch, e.loss, e.recon, e.spectral));
        }
        s
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Centroid and RMS radius of all training points; median of `λ_{k−1}`.
fn fit_normalization(data: &TrainingSet, dim: usize) -> Normalization {
    let mut center = vec![0.0; dim];
    let mut count = 0usize;
    for x in &data.inputs {
        for p in x.chunks(dim) {
            center.iter_mut().zip(p).for_each(|(c, v)| *c += v);
            count += 1;
        }
    }
    center.iter_mut().for_each(|c| *c /= count as f64);
    let mut sq = 0.0;
    for x in &data.inputs {
        for p in x.chunks(dim) {
            sq += p.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>();
        }
    }
    let rms = (sq / count as f64).sqrt();
    let top = median(data.spectra.iter().map(|s| *s.last().unwrap()).collect());
    Normalization {
        center,
        coord_scale: if rms > 0.0 { rms } else { 1.0 },
        eigen_scale: if top > 0.0 { top } else { 1.0 },
    }
}

fn check_data(model: &ModelBundle, data: &TrainingSet) -> Result<usize, ModelError> {
    if data.inputs.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if data.inputs.len() != data.spectra.len() {
        return Err(ModelError::DimMismatch {
            context: "spectra per shape".into(),
            expected: data.inputs.len(),
            got: data.spectra.len(),
        });
    }
    if let Some(s) = data.spectra.iter().find(|s| s.len() != model.k) {
        return Err(ModelError::KMismatch {
            expected: model.k,
            got: s.len(),
        });
    }
    let width = match model.kind {
        InputKind::DenseTemplate => model.template.width(),
        InputKind::Pointcloud => data.inputs[0].len(),
    };
    if width == 0 || width % model.template.dim != 0 {
        return Err(ModelError::DimMismatch {
            context: "shape coordinates".into(),
            expected: model.template.dim,
            got: width,
        });
    }
    if let Some(x) = data.inputs.iter().find(|x| x.len() != width) {
        return Err(ModelError::DimMismatch {
            context: "shape coordinates (all training shapes share one size)".into(),
            expected: width,
            got: x.len(),
        });
    }
    Ok(width)
}

/// Fit the normalisation to `data`, then minimise the coupled loss with Adam.
/// Deterministic for a fixed config.
pub fn train(
    mut model: ModelBundle,
    data: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<(ModelBundle, TrainReport), ModelError> {
    cfg.validate()?;
    if cfg.k != model.k {
        return Err(ModelError::KMismatch {
            expected: model.k,
            got: cfg.k,
        });
    }
    let width = check_data(&model, data)?;
    let dim = model.template.dim;
    model.norm = fit_normalization(data, dim);
    model.alpha = cfg.alpha;
    let inputs: Vec<Vec<f32>> = data.inputs.iter().map(|x| model.norm.coords_in(x)).collect();
    let spectra: Vec<Vec<f32>> = data.spectra.iter().map(|s| model.norm.eigen_in(s)).collect();
    let opts = LossOptions {
        alpha: cfg.alpha,
        rho_term: cfg.rho_term,
        chamfer: model.kind == InputKind::Pointcloud,
        mode: Mode::Train,
    };
    let batch_shape = |b: usize| match model.kind {
        InputKind::DenseTemplate => vec![b, width],
        InputKind::Pointcloud => vec![b, width / dim, dim],
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a11_5eed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut adam = Adam::new(cfg.lr);
    let mut report = TrainReport::default();
    let mut best_smoothed = f64::INFINITY;
    log::info!(
        "training {} shapes, {} parameters, {} epochs",
        inputs.len(),
        model.num_params(),
        cfg.epochs
    );
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossParts::default();
        let mut batches = 0usize;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            // A lone trailing sample cannot be batch-normalised.
            if idx.len() < 2 {
                continue;
            }
            let x: Vec<f32> = idx.iter().flat_map(|&i| inputs[i].iter().copied()).collect();
            let l: Vec<f32> = idx.iter().flat_map(|&i| spectra[i].iter().copied()).collect();
            let x = Tensor::new(batch_shape(idx.len()), x)?;
            let l = Tensor::matrix(idx.len(), model.k, l)?;
            let result = model.nets.loss_and_grads(&x, &l, model.template.n, &opts);
            let (parts, grads, tapes) = match result {
                Err(NeuralError::NonFinite { .. }) => (LossParts { total: f64::NAN, ..Default::default() }, Vec::new(), None),
                r => {
                    let (p, g, t) = r?;
                    (p, g, Some(t))
                }
            };
            let finite = parts.total.is_finite() && grads.iter().all(|g| g.iter().all(|v| v.is_finite()));
            if !finite {
                log::error!("non-finite loss at epoch {epoch}, step {step}");
                return Err(ModelError::NonFinite {
                    epoch,
                    step,
                    last_good: Box::new(model),
                });
            }
            adam.step(model.nets.params_mut(), &grads)?;
            if let Some(t) = &tapes {
                model.nets.update_running_stats(t);
            }
            sum.total += parts.total;
            sum.recon += parts.recon;
            sum.spectral += parts.spectral;
            batches += 1;
        }
        let m = batches.max(1) as f64;
        let entry = EpochLog {
            epoch,
            loss: sum.total / m,
            recon: sum.recon / m,
            spectral: sum.spectral / m,
        };
        log::debug!(
            "epoch {epoch}: loss {:.4e} (x {:.4e}, lambda {:.4e})",
            entry.loss,
            entry.recon,
            entry.spectral
        );
        report.epochs.push(entry);

        let w = cfg.smoothing_window.min(report.epochs.len());
        let smoothed = report.epochs[report.epochs.len() - w..].iter().map(|e| e.loss).sum::<f64>() / w as f64;
        if report.epochs.len() >= cfg.smoothing_window && smoothed > cfg.divergence_factor * best_smoothed {
            return Err(ModelError::Diverged {
                epoch,
                smoothed,
                best: best_smoothed,
                factor: cfg.divergence_factor,
            });
        }
        best_smoothed = best_smoothed.min(smoothed);
    }
    report.steps = adam.steps();
    model.metadata = json!({
        "train": cfg,
        "steps": report.steps,
        "final": report.epochs.last(),
        "input_kind": model.kind,
    });
    log::info!("training done after {} steps", report.steps);
    Ok((model, report))
}
