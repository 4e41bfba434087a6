//! Small reverse-mode neural toolkit: sequential nets of dense, tanh, SELU,
//! batch-norm, shared per-point dense and point max-pool layers, with MSE and
//! Chamfer losses, Adam, and a single-file checkpoint format.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

mod adam;
mod checkpoint;
mod loss;
mod net;

pub use adam::Adam;
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointNet};
pub use loss::{chamfer, squared_error};
pub use net::{LayerSpec, Mode, Net, NetSpec, Tape, BN_EPS, BN_MOMENTUM, SELU_ALPHA, SELU_LAMBDA};

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },
    #[error("batch norm in train mode needs at least 2 samples, got {0}; use eval mode or a larger batch")]
    BatchTooSmall(usize),
    #[error("non-finite value after layer {layer} ({kind})")]
    NonFinite { layer: usize, kind: String },
    #[error("empty point set")]
    EmptySet,
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Floating-point element type of tensors and parameters.
pub trait Real:
    num_traits::Float + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C = alpha·A·B + beta·C` with explicit strides (see `matrixmultiply`).
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major matrix products used by the layers. `ta`/`tb` read the operand
/// transposed; `c` has shape `m×n` and is overwritten.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul<T: Real>(
    a: &[T],
    ta: bool,
    b: &[T],
    tb: bool,
    c: &mut [T],
    m: usize,
    k: usize,
    n: usize,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x = T::zero());
        return;
    }
    // Row-major A is m×k (or k×m when transposed), likewise B.
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserted lengths cover every index reachable with these strides.
    unsafe {
        T::gemm_raw(
            m, k, n,
            T::one(),
            a.as_ptr(), rsa, csa,
            b.as_ptr(), rsb, csb,
            T::zero(),
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Dense row-major tensor of rank 1 to 3 (`batch × points × channels`).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NeuralError> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(NeuralError::InvalidSpec(format!("tensor rank {} not in 1..=3", shape.len())));
        }
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(NeuralError::ShapeMismatch {
                context: "tensor storage".into(),
                expected: format!("{want} values for shape {shape:?}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); len],
        }
    }

    /// `rows × cols` matrix.
    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, NeuralError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Size of the last axis.
    pub fn channels(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, NeuralError> {
        let want: usize = shape.iter().product();
        if want != self.data.len() {
            return Err(NeuralError::ShapeMismatch {
                context: "reshape".into(),
                expected: format!("{} values", self.data.len()),
                actual: format!("shape {shape:?}"),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// One batch row as a slice (all trailing axes).
    pub fn row(&self, i: usize) -> &[T] {
        let w = self.data.len() / self.shape[0];
        &self.data[i * w..(i + 1) * w]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::from_f64(x.as_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
