//! Smallest eigenpairs of the symmetric-definite pencil `(S, M)` and the
//! spectrum pipeline built on it.

mod envelope;
mod krylov;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Shape;
use crate::laplacian::{
    assemble_contour_fem, assemble_cubic_fem, assemble_linear_fem, Discretization, LaplacianError,
    LaplacianPair,
};

/// Default residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("invalid eigenproblem: {0}")]
    InvalidArgument(String),
    #[error("factorization of S - sigma*M failed at row {row} (mass matrix not positive definite?)")]
    Factorization { row: usize },
    #[error("multiplicity of zero eigenvalue is {count} > 1, mesh likely disconnected")]
    ZeroMultiplicity { count: usize },
    #[error("eigensolver did not converge after {restarts} restarts (worst relative residual {residual:e})")]
    NonConvergence { restarts: usize, residual: f64 },
    #[error(transparent)]
    Laplacian(#[from] LaplacianError),
    #[error("{0}")]
    Unsupported(String),
    #[error("spectrum cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub tol: f64,
    pub block_size: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: DEFAULT_TOL,
            block_size: 8,
            max_restarts: 60,
            seed: 0x5eed,
        }
    }
}

/// First `k` eigenvalues, nondecreasing, with the discretization they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpectrum")]
pub struct Spectrum {
    pub k: usize,
    pub disc: Discretization,
    pub values: Vec<f64>,
    /// Residual tolerance the values were computed to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Deserialize)]
struct RawSpectrum {
    k: usize,
    disc: Discretization,
    values: Vec<f64>,
    #[serde(default)]
    tol: Option<f64>,
}

impl TryFrom<RawSpectrum> for Spectrum {
    type Error = String;
    fn try_from(r: RawSpectrum) -> Result<Self, String> {
        if r.k != r.values.len() {
            return Err(format!("k = {} but {} values given", r.k, r.values.len()));
        }
        Spectrum::new(r.disc, r.values, r.tol)
    }
}

impl Spectrum {
    pub fn new(disc: Discretization, values: Vec<f64>, tol: Option<f64>) -> Result<Self, String> {
        if values.is_empty() {
            return Err("spectrum has no values".into());
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(format!("value {i} is not finite"));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] < w[0] - 1e-12) {
            return Err(format!("values decrease at index {}", i + 1));
        }
        let last = *values.last().unwrap();
        if values[0] < -1e-8 * last.abs() {
            return Err(format!("first value {} is negative", values[0]));
        }
        Ok(Spectrum {
            k: values.len(),
            disc,
            values,
            tol,
        })
    }

    /// The first `k` values of a longer spectrum.
    pub fn truncated(&self, k: usize) -> Spectrum {
        let k = k.min(self.k);
        Spectrum {
            k,
            disc: self.disc,
            values: self.values[..k].to_vec(),
            tol: self.tol,
        }
    }
}

/// Spectrum plus M-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub spectrum: Spectrum,
    /// One column of length `N` per eigenvalue.
    pub vectors: Vec<Vec<f64>>,
    /// `‖Sφ − λMφ‖ / max(‖Sφ‖, λ_{k−1}‖Mφ‖)` per pair.
    pub residuals: Vec<f64>,
}

/// The `k` algebraically smallest generalized eigenpairs of `pair`.
pub fn smallest_k(
    pair: &LaplacianPair,
    k: usize,
    opts: &EigenOptions,
) -> Result<EigenPairs, EigenError> {
    let n = pair.dim();
    if k == 0 || k >= n {
        return Err(EigenError::InvalidArgument(format!(
            "need 1 <= k < N, got k = {k}, N = {n}"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(EigenError::InvalidArgument(format!("tolerance {} must be positive", opts.tol)));
    }
    // One extra pair when k = 1 so a repeated zero eigenvalue is still visible.
    let want = k.max(2).min(n);
    let raw = krylov::lowest_eigenpairs(pair, want, opts)?;
    let shift = 1e-6 * pair.stiffness.trace() / pair.mass.trace();
    let top = raw.values[want - 1].abs().max(shift);
    let zeros = raw.values.iter().filter(|v| v.abs() < 1e-9 * top).count();
    if zeros > 1 {
        return Err(EigenError::ZeroMultiplicity { count: zeros });
    }
    let values: Vec<f64> = raw.values[..k]
        .iter()
        .map(|&v| if v.abs() < 1e-9 * top { 0.0 } else { v })
        .collect();
    let spectrum = Spectrum::new(pair.disc, values, Some(opts.tol)).map_err(|e| {
        EigenError::InvalidArgument(format!("eigensolver produced an invalid spectrum: {e}"))
    })?;
    let mut vectors = raw.vectors;
    vectors.truncate(k);
    let mut residuals = raw.residuals;
    residuals.truncate(k);
    Ok(EigenPairs {
        spectrum,
        vectors,
        residuals,
    })
}

/// Element order used for triangle meshes; contours always use linear ring
/// elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FemOrder {
    Linear,
    #[default]
    Cubic,
}

pub fn assemble(shape: &Shape, order: FemOrder) -> Result<LaplacianPair, EigenError> {
    match shape {
        Shape::Mesh(m) => Ok(match order {
            FemOrder::Linear => assemble_linear_fem(m)?,
            FemOrder::Cubic => assemble_cubic_fem(m)?,
        }),
        Shape::Contour(c) => Ok(assemble_contour_fem(c)?),
        Shape::PointCloud(_) => Err(EigenError::Unsupported(
            "point clouds have no Laplacian; estimate their spectrum with the trained model".into(),
        )),
    }
}

/// Content hash identifying a spectrum computation.
pub fn spectrum_key(shape: &Shape, k: usize, order: FemOrder, tol: f64) -> String {
    let mut h = Sha256::new();
    let disc = match shape {
        Shape::Contour(_) => Discretization::ContourFem,
        _ if order == FemOrder::Linear => Discretization::LinearFem,
        _ => Discretization::CubicFem,
    };
    h.update(disc.as_str().as_bytes());
    h.update((k as u64).to_le_bytes());
    h.update(tol.to_bits().to_le_bytes());
    for x in shape.flat_coords() {
        h.update(x.to_bits().to_le_bytes());
    }
    if let Shape::Mesh(m) = shape {
        for f in m.faces() {
            for i in f {
                h.update((*i as u64).to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

/// Memoises spectra in memory and, optionally, as JSON files in a directory.
#[derive(Debug, Default)]
pub struct SpectrumCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, Spectrum>>,
    hits: AtomicUsize,
}

impl SpectrumCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, EigenError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| EigenError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(SpectrumCache {
            dir: Some(dir),
            ..Self::default()
        })
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    fn get(&self, key: &str) -> Option<Spectrum> {
        if let Some(s) = self.mem.lock().unwrap().get(key) {
            return Some(s.clone());
        }
        let path = self.dir.as_ref()?.join(format!("{key}.json"));
        let text = std::fs::read_to_string(path).ok()?;
        let s: Spectrum = serde_json::from_str(&text).ok()?;
        self.mem.lock().unwrap().insert(key.to_string(), s.clone());
        Some(s)
    }

    fn put(&self, key: &str, s: &Spectrum) -> Result<(), EigenError> {
        self.mem.lock().unwrap().insert(key.to_string(), s.clone());
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{key}.json"));
            let tmp = dir.join(format!("{key}.json.tmp"));
            let text = serde_json::to_string(s).map_err(|e| EigenError::Cache(e.to_string()))?;
            std::fs::write(&tmp, text)
                .and_then(|_| std::fs::rename(&tmp, &path))
                .map_err(|e| EigenError::Cache(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Assemble, solve and keep only the eigenvalues.
pub fn spectrum_of(
    shape: &Shape,
    k: usize,
    order: FemOrder,
    cache: Option<&SpectrumCache>,
) -> Result<Spectrum, EigenError> {
    let opts = EigenOptions::default();
    let key = spectrum_key(shape, k, order, opts.tol);
    if let Some(c) = cache {
        if let Some(s) = c.get(&key) {
            c.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(s);
        }
    }
    let pair = assemble(shape, order)?;
    let spectrum = smallest_k(&pair, k, &opts)?.spectrum;
    if let Some(c) = cache {
        c.put(&key, &spectrum)?;
    }
    Ok(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplacian::CsrMatrix;

    #[test]
    fn spectrum_json_shape() {
        let s = Spectrum::new(Discretization::CubicFem, vec![0.0, 2.0, 2.0], None).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"k":3,"disc":"cubic_fem","values":[0.0,2.0,2.0]}"#);
        let back: Spectrum = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Spectrum>(r#"{"k":2,"disc":"cubic_fem","values":[3.0,1.0]}"#).is_err());
        assert!(serde_json::from_str::<Spectrum>(r#"{"k":3,"disc":"cubic_fem","values":[0.0,1.0]}"#).is_err());
    }

    #[test]
    fn two_disjoint_rings_are_rejected() {
        // Two 5-node cycles in one pencil.
        let mut s = Vec::new();
        let mut m = Vec::new();
        for base in [0, 5] {
            for e in 0..5 {
                let (i, j) = (base + e, base + (e + 1) % 5);
                for (a, b, sv, mv) in [(i, i, 1.0, 2.0 / 6.0), (j, j, 1.0, 2.0 / 6.0), (i, j, -1.0, 1.0 / 6.0), (j, i, -1.0, 1.0 / 6.0)] {
                    s.push((a, b, sv));
                    m.push((a, b, mv));
                }
            }
        }
        let pair = LaplacianPair {
            stiffness: CsrMatrix::from_triplets(10, &s),
            mass: CsrMatrix::from_triplets(10, &m),
            node_map: Vec::new(),
            disc: Discretization::ContourFem,
        };
        let err = smallest_k(&pair, 1, &EigenOptions::default()).unwrap_err();
        assert_eq!(err, EigenError::ZeroMultiplicity { count: 2 });
        assert!(err.to_string().contains("mesh likely disconnected"));
    }

    #[test]
    fn rejects_bad_k() {
        let c = crate::geometry::generate_contour(&[], &[], 8).unwrap();
        let pair = assemble_contour_fem(&c).unwrap();
        assert!(smallest_k(&pair, 0, &EigenOptions::default()).is_err());
        assert!(smallest_k(&pair, 8, &EigenOptions::default()).is_err());
    }
}
