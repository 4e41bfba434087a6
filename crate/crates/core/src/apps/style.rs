use serde::{Deserialize, Serialize};

use super::AppError;
use crate::geometry::Shape;
use crate::neural::Adam;
use crate::spectral_ae::{ModelBundle, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StyleTransferConfig {
    /// Weight of the pull towards the pose shape's latent code.
    pub w: f64,
    pub steps: usize,
    pub lr: f64,
    /// Abort after this many consecutive increases of the objective.
    pub patience: usize,
}

impl Default for StyleTransferConfig {
    fn default() -> Self {
        StyleTransferConfig {
            w: 1e-2,
            steps: 500,
            lr: 1e-2,
            patience: 50,
        }
    }
}

impl StyleTransferConfig {
    pub fn validate(&self) -> Result<(), AppError> {
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(AppError::InvalidArgument(format!("w must be nonnegative, got {}", self.w)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.steps == 0 || self.patience == 0 {
            return Err(AppError::InvalidArgument("lr, steps and patience must be positive".into()));
        }
        Ok(())
    }
}

/// One optimizer step of the alignment curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPoint {
    pub step: usize,
    pub objective: f64,
    /// `‖ρ(v) − λ_style‖`.
    pub gap: f64,
    /// `‖v − v_init‖`.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleTransfer {
    pub shape: Shape,
    pub latent: Vec<f64>,
    pub init_latent: Vec<f64>,
    /// `ρ(v*)`.
    pub spectrum: Vec<f64>,
    /// Entry 0 is the initial point; one entry per step after that.
    pub curve: Vec<AlignmentPoint>,
    /// Step whose iterate was returned (the best objective seen).
    pub best_step: usize,
}

impl StyleTransfer {
    pub fn initial_gap(&self) -> f64 {
        self.curve[0].gap
    }

    pub fn final_gap(&self) -> f64 {
        self.curve[self.best_step].gap
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("step,objective,gap,drift\n");
        for p in &self.curve {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", p.step, p.objective, p.gap, p.drift));
        }
        s
    }
}

/// Search the latent space for a code whose spectrum `ρ(v)` matches
/// `style_spectrum` while staying close to the pose shape's code:
/// minimise `‖λ_style − ρ(v)‖² + w‖v − E(X_pose)‖²` with Adam from
/// `E(X_pose)`. The best iterate is returned, so the objective never ends
/// above its initial value.
pub fn style_transfer(
    bundle: &ModelBundle,
    style_spectrum: &[f64],
    pose: &Shape,
    cfg: &StyleTransferConfig,
) -> Result<StyleTransfer, AppError> {
    cfg.validate()?;
    if style_spectrum.len() != bundle.k {
        return Err(ModelError::KMismatch {
            expected: bundle.k,
            got: style_spectrum.len(),
        }
        .into());
    }
    let v0 = bundle.encode_shape(pose)?;
    let mut v = v0.clone();
    let mut adam = Adam::new(cfg.lr);

    let evaluate = |v: &[f64]| -> Result<(f64, f64, f64, Vec<f64>, Vec<f64>), AppError> {
        let s = bundle.latent_to_spec(v)?;
        let r: Vec<f64> = s.iter().zip(style_spectrum).map(|(a, b)| a - b).collect();
        let gap2: f64 = r.iter().map(|x| x * x).sum();
        let drift2: f64 = v.iter().zip(&v0).map(|(a, b)| (a - b) * (a - b)).sum();
        let g: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
        let (_, mut grad) = bundle.latent_to_spec_vjp(v, &g)?;
        grad.iter_mut().zip(v.iter().zip(&v0)).for_each(|(gi, (a, b))| *gi += 2.0 * cfg.w * (a - b));
        Ok((gap2 + cfg.w * drift2, gap2.sqrt(), drift2.sqrt(), grad, s))
    };

    let (obj, gap, drift, mut grad, mut spectrum) = evaluate(&v)?;
    let mut curve = vec![AlignmentPoint { step: 0, objective: obj, gap, drift }];
    let mut best = (obj, 0usize, v.clone());
    let mut increases = 0usize;
    let mut last = obj;
    for step in 1..=cfg.steps {
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let mut p = vec![std::mem::take(&mut v)];
        adam.step(p.iter_mut().collect(), std::slice::from_ref(&grad)).map_err(ModelError::from)?;
        v = p.pop().unwrap();
        let (obj, gap, drift, g, s) = evaluate(&v)?;
        if !obj.is_finite() {
            return Err(AppError::Diverged { steps: increases + 1, at: step });
        }
        curve.push(AlignmentPoint { step, objective: obj, gap, drift });
        grad = g;
        if obj < best.0 {
            best = (obj, step, v.clone());
            spectrum = s;
        }
        increases = if obj > last { increases + 1 } else { 0 };
        last = obj;
        if increases >= cfg.patience {
            return Err(AppError::Diverged { steps: increases, at: step });
        }
    }
    let (_, best_step, latent) = best;
    Ok(StyleTransfer {
        shape: bundle.decode_shape(&latent)?,
        latent,
        init_latent: v0,
        spectrum,
        curve,
        best_step,
    })
}
