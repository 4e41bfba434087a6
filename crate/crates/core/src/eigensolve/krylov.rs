//! Block shift-invert Krylov iteration with full M-orthogonalisation,
//! Rayleigh-Ritz on the original pencil and thick restarts.
//!
//! Basis vectors are stored column-major in one buffer so projections and
//! restarts run as matrix-matrix products.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::envelope::EnvelopeCholesky;
use super::{EigenError, EigenOptions};
use crate::laplacian::{CsrMatrix, LaplacianPair};

/// `Aᵀ B` for column-major `A` (`n×p`) and `B` (`n×q`); result `p×q`.
fn gemm_tn(a: &[f64], b: &[f64], n: usize, p: usize, q: usize) -> Vec<f64> {
    let mut c = vec![0.0; p * q];
    if p == 0 || q == 0 {
        return c;
    }
    assert!(a.len() >= n * p && b.len() >= n * q);
    // SAFETY: all slices are sized for the dimensions and strides passed.
    unsafe {
        matrixmultiply::dgemm(
            p, n, q, 1.0,
            a.as_ptr(), n as isize, 1,
            b.as_ptr(), 1, n as isize,
            0.0,
            c.as_mut_ptr(), 1, p as isize,
        );
    }
    c
}

/// `out = beta·out + alpha·A C` for column-major `A` (`n×p`), `C` (`p×q`).
#[allow(clippy::too_many_arguments)]
fn gemm_nn(alpha: f64, a: &[f64], c: &[f64], beta: f64, out: &mut [f64], n: usize, p: usize, q: usize) {
    if q == 0 {
        return;
    }
    assert!(a.len() >= n * p && c.len() >= p * q && out.len() >= n * q);
    if p == 0 {
        out[..n * q].iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: bounds asserted above.
    unsafe {
        matrixmultiply::dgemm(
            n, p, q, alpha,
            a.as_ptr(), 1, n as isize,
            c.as_ptr(), 1, p as isize,
            beta,
            out.as_mut_ptr(), 1, n as isize,
        );
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Basis<'a> {
    s: &'a CsrMatrix,
    m: &'a CsrMatrix,
    n: usize,
    len: usize,
    /// Columns `q_j`, M-orthonormal.
    q: Vec<f64>,
    /// Columns `M q_j`.
    mq: Vec<f64>,
    /// Projected stiffness `QᵀSQ`, dense `cap×cap` column-major.
    h: Vec<f64>,
    cap: usize,
}

impl<'a> Basis<'a> {
    /// Orthogonalise the block `w` (column-major, `b` columns) against the
    /// basis, then column by column against itself, appending the columns
    /// that are not numerically dependent. Returns how many were added.
    fn extend(&mut self, mut w: Vec<f64>, b: usize) -> usize {
        let n = self.n;
        let b = b.min(self.cap - self.len);
        w.truncate(n * b);
        let norms0: Vec<f64> = w
            .chunks(n)
            .map(|col| dot(col, &self.m.mul_vec(col)).max(0.0).sqrt())
            .collect();
        let old = self.len;
        for _ in 0..2 {
            let c = gemm_tn(&self.mq[..n * old], &w, n, old, b);
            gemm_nn(-1.0, &self.q[..n * old], &c, 1.0, &mut w, n, old, b);
        }
        for (j, col) in w.chunks(n).enumerate() {
            let mut col = col.to_vec();
            for _ in 0..2 {
                for t in old..self.len {
                    let c = dot(&self.mq[t * n..(t + 1) * n], &col);
                    let qt = &self.q[t * n..(t + 1) * n];
                    col.iter_mut().zip(qt).for_each(|(x, y)| *x -= c * y);
                }
            }
            let mut mcol = self.m.mul_vec(&col);
            let nrm = dot(&col, &mcol).max(0.0).sqrt();
            if !(norms0[j] > 0.0) || nrm <= 1e-10 * norms0[j] {
                continue;
            }
            col.iter_mut().for_each(|x| *x /= nrm);
            mcol.iter_mut().for_each(|x| *x /= nrm);
            let at = self.len * n;
            self.q[at..at + n].copy_from_slice(&col);
            self.mq[at..at + n].copy_from_slice(&mcol);
            self.len += 1;
        }
        let added = self.len - old;
        if added > 0 {
            let mut sw = vec![0.0; n * added];
            for (j, chunk) in sw.chunks_mut(n).enumerate() {
                self.s.mul_vec_into(&self.q[(old + j) * n..(old + j + 1) * n], chunk);
            }
            let hc = gemm_tn(&self.q[..n * self.len], &sw, n, self.len, added);
            for j in 0..added {
                for i in 0..self.len {
                    let v = hc[j * self.len + i];
                    self.h[(old + j) * self.cap + i] = v;
                    self.h[i * self.cap + old + j] = v;
                }
            }
        }
        added
    }

    /// Ritz values (ascending) and their coefficient vectors (column-major
    /// `len×len`).
    fn ritz(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.len;
        let h = DMatrix::from_fn(d, d, |i, j| {
            0.5 * (self.h[j * self.cap + i] + self.h[i * self.cap + j])
        });
        let eig = SymmetricEigen::new(h);
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut coefs = Vec::with_capacity(d * d);
        for &i in &idx {
            coefs.extend(eig.eigenvectors.column(i).iter());
        }
        (values, coefs)
    }

    /// `Q C` for `cols` coefficient columns.
    fn combine(&self, coefs: &[f64], cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n * cols];
        gemm_nn(1.0, &self.q[..self.n * self.len], coefs, 0.0, &mut out, self.n, self.len, cols);
        out
    }

    /// Replace the basis by the leading `keep` Ritz vectors.
    fn restart(&mut self, values: &[f64], coefs: &[f64], keep: usize) {
        let n = self.n;
        let c = &coefs[..self.len * keep];
        let y = self.combine(c, keep);
        let mut my = vec![0.0; n * keep];
        gemm_nn(1.0, &self.mq[..n * self.len], c, 0.0, &mut my, n, self.len, keep);
        self.q[..n * keep].copy_from_slice(&y);
        self.mq[..n * keep].copy_from_slice(&my);
        self.len = keep;
        self.h.iter_mut().for_each(|x| *x = 0.0);
        for (i, v) in values.iter().take(keep).enumerate() {
            self.h[i * self.cap + i] = *v;
        }
    }
}

pub(crate) struct RawEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Relative residual of the Ritz pair `(theta, y)`.
fn relative_residual(s: &CsrMatrix, m: &CsrMatrix, theta: f64, y: &[f64], top: f64) -> f64 {
    let sy = s.mul_vec(y);
    let my = m.mul_vec(y);
    let r = sy
        .iter()
        .zip(&my)
        .map(|(a, b)| (a - theta * b).powi(2))
        .sum::<f64>()
        .sqrt();
    r / norm(&sy).max(top * norm(&my))
}

/// The `want` smallest eigenpairs of `(S, M)`.
pub(crate) fn lowest_eigenpairs(
    pair: &LaplacianPair,
    want: usize,
    opts: &EigenOptions,
) -> Result<RawEigen, EigenError> {
    let (s, m) = (&pair.stiffness, &pair.mass);
    let n = s.dim();
    let scale = s.trace() / m.trace();
    let sigma = -1e-6 * scale;
    let shifted = CsrMatrix::combine(1.0, s, -sigma, m);
    let chol = EnvelopeCholesky::factor(&shifted).map_err(|row| EigenError::Factorization { row })?;
    let mut work = Vec::new();
    let mut apply = |block: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; block.len()];
        for (x, y) in block.chunks(n).zip(out.chunks_mut(n)) {
            m.mul_vec_into(x, y);
        }
        chol.solve_block(&mut out, &mut work);
        out
    };

    let b = opts.block_size.clamp(1, n);
    let cap = (2 * want + 2 * b).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random_block = |rng: &mut ChaCha8Rng, cols: usize| -> Vec<f64> {
        (0..n * cols).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    let mut basis = Basis {
        s,
        m,
        n,
        len: 0,
        q: vec![0.0; n * cap],
        mq: vec![0.0; n * cap],
        h: vec![0.0; cap * cap],
        cap,
    };

    let mut block = random_block(&mut rng, b);
    let mut prev: Option<Vec<f64>> = None;
    let mut worst = f64::INFINITY;
    for _restart in 0..=opts.max_restarts {
        loop {
            let before = basis.len;
            let cols = block.len() / n;
            let mut added = basis.extend(apply(&block), cols);
            // Invariant subspace hit: continue from fresh random directions.
            let mut tries = 0;
            while added == 0 && basis.len < cap && tries < 4 {
                let r = random_block(&mut rng, b);
                added = basis.extend(apply(&r), b);
                tries += 1;
            }
            block = basis.q[before * n..basis.len * n].to_vec();
            let full = basis.len >= cap || added == 0;
            if basis.len < want {
                if added == 0 {
                    break;
                }
                continue;
            }
            let (theta, coefs) = basis.ritz();
            let d = basis.len;
            // The shift magnitude floors the scale when every wanted value is ~0.
            let top = theta[want - 1].abs().max(sigma.abs());
            let settled = prev.as_ref().is_some_and(|p| {
                p.iter().zip(&theta).all(|(a, t)| (a - t).abs() <= 1e-11 * top)
            });
            if settled || full {
                // The highest wanted pair converges last; check it first.
                let y = basis.combine(&coefs[(want - 1) * d..want * d], 1);
                worst = relative_residual(s, m, theta[want - 1], &y, top);
                if worst <= opts.tol {
                    let ys = basis.combine(&coefs[..want * d], want);
                    let vectors: Vec<Vec<f64>> = ys.chunks(n).map(|c| c.to_vec()).collect();
                    let residuals: Vec<f64> = vectors
                        .iter()
                        .zip(&theta)
                        .map(|(y, &t)| relative_residual(s, m, t, y, top))
                        .collect();
                    worst = residuals.iter().cloned().fold(0.0, f64::max);
                    if worst <= opts.tol {
                        return Ok(RawEigen {
                            values: theta[..want].to_vec(),
                            vectors,
                            residuals,
                        });
                    }
                }
            }
            prev = Some(theta[..want].to_vec());
            if full {
                let keep = (want + b).min(cap.saturating_sub(b)).max(want).min(d);
                basis.restart(&theta, &coefs, keep);
                // Expand from the upper end of the wanted range, which lags.
                let lo = want.saturating_sub(b);
                block = basis.q[lo * n..want * n].to_vec();
                break;
            }
        }
    }
    Err(EigenError::NonConvergence {
        restarts: opts.max_restarts,
        residual: worst,
    })
}
