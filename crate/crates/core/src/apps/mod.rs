//! Everything built on a trained model: shape from spectrum,
//! super-resolution, style transfer, exploration, point-cloud spectra,
//! matching, and the nearest-neighbour and ICP baselines.
//!
//! All procedures are pure functions of the frozen model and their inputs.

mod explore;
mod matching;
mod pointcloud;
mod style;

pub use explore::{band_modify, interpolate_latent, interpolate_spectra};
pub use matching::{icp_rigid, match_points, match_shapes, nearest_point, propagate_labels, Correspondence, IcpResult};
pub use pointcloud::{estimate_spectrum, LatentIndex};
pub use style::{style_transfer, AlignmentPoint, StyleTransferConfig, StyleTransfer};

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::eigensolve::{spectrum_of, EigenError, FemOrder};
use crate::geometry::{GeometryError, Shape};
use crate::spectral_ae::{ModelBundle, ModelError};

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("this operation needs a {expected} model")]
    WrongModelKind { expected: &'static str },
    #[error("optimization diverged: objective increased for {steps} consecutive steps (at step {at})")]
    Diverged { steps: usize, at: usize },
    #[error("degenerate point set: {0}")]
    Degenerate(String),
}

/// A decoded shape with its latent code and the wall time of the forward
/// pass that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub shape: Shape,
    pub latent: Vec<f64>,
    pub elapsed: Duration,
}

/// `D(π(λ))`: one forward pass through the spectrum-to-latent map and the
/// decoder.
pub fn shape_from_spectrum(bundle: &ModelBundle, spectrum: &[f64]) -> Result<Reconstruction, AppError> {
    let start = Instant::now();
    let latent = bundle.spec_to_latent(spectrum)?;
    let coords = bundle.decode(&latent)?;
    let elapsed = start.elapsed();
    Ok(Reconstruction {
        shape: bundle.template.shape_from(&coords)?,
        latent,
        elapsed,
    })
}

/// Spectrum of a shape of any resolution and connectivity, decoded onto the
/// template.
pub fn super_resolve(bundle: &ModelBundle, low: &Shape, order: FemOrder) -> Result<Reconstruction, AppError> {
    let spectrum = spectrum_of(low, bundle.k, order, None)?;
    shape_from_spectrum(bundle, &spectrum.values)
}

/// Nearest training spectrum: the baseline that answers a spectrum query
/// with the closest shape seen in training.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumIndex {
    spectra: Vec<Vec<f64>>,
    /// Distances are reported in units of this scale (median top eigenvalue).
    scale: f64,
}

impl SpectrumIndex {
    pub fn new(spectra: Vec<Vec<f64>>) -> Result<SpectrumIndex, AppError> {
        let k = spectra.first().map(Vec::len).unwrap_or(0);
        if k == 0 {
            return Err(AppError::InvalidArgument("empty spectrum index".into()));
        }
        if spectra.iter().any(|s| s.len() != k) {
            return Err(AppError::InvalidArgument("indexed spectra differ in length".into()));
        }
        let mut top: Vec<f64> = spectra.iter().map(|s| s[k - 1]).collect();
        top.sort_by(f64::total_cmp);
        let scale = top[top.len() / 2];
        Ok(SpectrumIndex {
            spectra,
            scale: if scale > 0.0 { scale } else { 1.0 },
        })
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    pub fn k(&self) -> usize {
        self.spectra[0].len()
    }

    /// Index of the closest spectrum and its normalised ℓ₂ distance; ties go
    /// to the lowest index.
    pub fn nearest(&self, spectrum: &[f64]) -> Result<(usize, f64), AppError> {
        if spectrum.len() != self.k() {
            return Err(ModelError::KMismatch {
                expected: self.k(),
                got: spectrum.len(),
            }
            .into());
        }
        let mut best = (0, f64::INFINITY);
        for (i, s) in self.spectra.iter().enumerate() {
            let d = s.iter().zip(spectrum).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok((best.0, best.1.sqrt() / self.scale))
    }
}

/// Mean squared distance between corresponding points.
pub fn per_point_mse(a: &[f64], b: &[f64], dim: usize) -> f64 {
    assert_eq!(a.len(), b.len(), "coordinate arrays differ in length");
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    sq / (a.len() / dim) as f64
}
