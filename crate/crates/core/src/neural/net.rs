use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{matmul, NeuralError, Real, Tensor};

pub const SELU_ALPHA: f64 = 1.6732632423543772;
pub const SELU_LAMBDA: f64 = 1.0507009873554805;
/// Weight kept on the old running statistic at every training step.
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `(batch, in) → (batch, out)`.
    Dense { input: usize, output: usize },
    Tanh,
    Selu,
    /// Normalises the last axis over every other axis.
    Batchnorm { channels: usize },
    /// `(batch, points, in) → (batch, points, out)`, same weights per point.
    SharedDense { input: usize, output: usize },
    /// `(batch, points, c) → (batch, c)`.
    MaxpoolPoints,
}

impl LayerSpec {
    fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Selu => "selu",
            LayerSpec::Batchnorm { .. } => "batchnorm",
            LayerSpec::SharedDense { .. } => "shared_dense",
            LayerSpec::MaxpoolPoints => "maxpool_points",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub layers: Vec<LayerSpec>,
}

/// Activation width flowing between layers, and whether a points axis exists.
#[derive(Clone, Copy, PartialEq)]
struct Flow {
    width: Option<usize>,
    points: bool,
}

impl NetSpec {
    /// Multilayer perceptron `dims[0] → … → dims[last]` with `act` after
    /// every layer but the last. With `batchnorm`, each hidden dense layer
    /// is followed by batch norm before the activation.
    pub fn mlp(dims: &[usize], act: LayerSpec, batchnorm: bool) -> NetSpec {
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            layers.push(LayerSpec::Dense {
                input: w[0],
                output: w[1],
            });
            if i + 2 < dims.len() {
                if batchnorm {
                    layers.push(LayerSpec::Batchnorm { channels: w[1] });
                }
                layers.push(act);
            }
        }
        NetSpec { layers }
    }

    /// Check that adjacent layers agree; returns (input width, input has
    /// points axis, output width).
    pub fn validate(&self) -> Result<(usize, bool, usize), NeuralError> {
        let mut flow: Option<Flow> = None;
        let mut input = None;
        for (i, l) in self.layers.iter().enumerate() {
            let bad = |msg: String| NeuralError::InvalidSpec(format!("layer {i} ({}): {msg}", l.name()));
            let cur = flow.unwrap_or(Flow {
                width: None,
                points: matches!(l, LayerSpec::SharedDense { .. } | LayerSpec::MaxpoolPoints),
            });
            let need = |w: usize| -> Result<(), NeuralError> {
                match cur.width {
                    Some(have) if have != w => Err(bad(format!("expects width {w}, receives {have}"))),
                    _ => Ok(()),
                }
            };
            let next = match *l {
                LayerSpec::Dense { input: a, output: b } => {
                    if cur.points {
                        return Err(bad("dense layer needs (batch, features); pool points first".into()));
                    }
                    if a == 0 || b == 0 {
                        return Err(bad("zero width".into()));
                    }
                    need(a)?;
                    Flow { width: Some(b), points: false }
                }
                LayerSpec::SharedDense { input: a, output: b } => {
                    if !cur.points {
                        return Err(bad("shared dense layer needs a points axis".into()));
                    }
                    if a == 0 || b == 0 {
                        return Err(bad("zero width".into()));
                    }
                    need(a)?;
                    Flow { width: Some(b), points: true }
                }
                LayerSpec::Batchnorm { channels } => {
                    need(channels)?;
                    Flow { width: Some(channels), points: cur.points }
                }
                LayerSpec::MaxpoolPoints => {
                    if !cur.points {
                        return Err(bad("no points axis to pool".into()));
                    }
                    Flow { width: cur.width, points: false }
                }
                LayerSpec::Tanh | LayerSpec::Selu => cur,
            };
            if input.is_none() {
                if let Some(w) = match *l {
                    LayerSpec::Dense { input, .. } | LayerSpec::SharedDense { input, .. } => Some(input),
                    LayerSpec::Batchnorm { channels } => Some(channels),
                    _ => None,
                } {
                    input = Some((w, cur.points));
                }
            }
            flow = Some(next);
        }
        match (input, flow.and_then(|f| f.width)) {
            (Some((w, p)), Some(o)) => Ok((w, p, o)),
            _ => Err(NeuralError::InvalidSpec("network has no sized layer".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; recorded for the running averages.
    Train,
    /// Running statistics in batch norm; any batch size.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
enum Layer<T> {
    Dense { w: Vec<T>, b: Vec<T>, input: usize, output: usize, shared: bool },
    Tanh,
    Selu,
    Batchnorm { gamma: Vec<T>, beta: Vec<T>, mean: Vec<T>, var: Vec<T> },
    MaxpoolPoints,
}

/// Per-layer values kept by a forward pass for the backward pass.
#[derive(Debug, Clone)]
enum Cache<T> {
    Dense { input: Tensor<T> },
    Tanh { output: Tensor<T> },
    Selu { input: Tensor<T>, output: Tensor<T> },
    Batchnorm { xhat: Vec<T>, inv_std: Vec<f64>, batch_mean: Vec<f64>, batch_var: Vec<f64>, train: bool },
    Maxpool { argmax: Vec<usize>, in_shape: Vec<usize> },
}

/// Record of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
}

/// Sequential network with its parameters and batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Net<T> {
    spec: NetSpec,
    layers: Vec<Layer<T>>,
}

impl<T: Real> Net<T> {
    /// Initialise weights and biases uniformly in `±1/sqrt(fan_in)`.
    pub fn new(spec: NetSpec, seed: u64) -> Result<Self, NeuralError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Dense { input, output } | LayerSpec::SharedDense { input, output } => {
                    let bound = 1.0 / (input as f64).sqrt();
                    let mut draw = |len: usize| -> Vec<T> {
                        (0..len).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect()
                    };
                    let w = draw(input * output);
                    let b = draw(output);
                    Layer::Dense {
                        w,
                        b,
                        input,
                        output,
                        shared: matches!(l, LayerSpec::SharedDense { .. }),
                    }
                }
                LayerSpec::Tanh => Layer::Tanh,
                LayerSpec::Selu => Layer::Selu,
                LayerSpec::Batchnorm { channels } => Layer::Batchnorm {
                    gamma: vec![T::one(); channels],
                    beta: vec![T::zero(); channels],
                    mean: vec![T::zero(); channels],
                    var: vec![T::one(); channels],
                },
                LayerSpec::MaxpoolPoints => Layer::MaxpoolPoints,
            })
            .collect();
        Ok(Net { spec, layers })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn input_width(&self) -> usize {
        self.spec.validate().map(|v| v.0).unwrap_or(0)
    }

    pub fn output_width(&self) -> usize {
        self.spec.validate().map(|v| v.2).unwrap_or(0)
    }

    /// Trainable parameter groups in a fixed order (per layer: weight then
    /// bias, or gamma then beta).
    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Dense { w, b, .. } => {
                    out.push(w);
                    out.push(b);
                }
                Layer::Batchnorm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Dense { w, b, .. } => {
                    out.push(w);
                    out.push(b);
                }
                Layer::Batchnorm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                _ => {}
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Every stored array (parameters and running statistics) with a name,
    /// in checkpoint order.
    pub fn named_arrays(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out: Vec<(String, Vec<usize>, &[T])> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Layer::Dense { w, b, input, output, .. } => {
                    out.push((format!("{i}.weight"), vec![*input, *output], w));
                    out.push((format!("{i}.bias"), vec![*output], b));
                }
                Layer::Batchnorm { gamma, beta, mean, var } => {
                    let c = gamma.len();
                    out.push((format!("{i}.gamma"), vec![c], gamma));
                    out.push((format!("{i}.beta"), vec![c], beta));
                    out.push((format!("{i}.running_mean"), vec![c], mean));
                    out.push((format!("{i}.running_var"), vec![c], var));
                }
                _ => {}
            }
        }
        out
    }

    /// Mutable counterpart of [`Net::named_arrays`], same order.
    pub(crate) fn arrays_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Dense { w, b, .. } => {
                    out.push(w);
                    out.push(b);
                }
                Layer::Batchnorm { gamma, beta, mean, var } => {
                    out.push(gamma);
                    out.push(beta);
                    out.push(mean);
                    out.push(var);
                }
                _ => {}
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Net<U> {
        let conv = |v: &Vec<T>| -> Vec<U> { v.iter().map(|x| U::from_f64(x.as_f64())).collect() };
        Net {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Dense { w, b, input, output, shared } => Layer::Dense {
                        w: conv(w),
                        b: conv(b),
                        input: *input,
                        output: *output,
                        shared: *shared,
                    },
                    Layer::Tanh => Layer::Tanh,
                    Layer::Selu => Layer::Selu,
                    Layer::Batchnorm { gamma, beta, mean, var } => Layer::Batchnorm {
                        gamma: conv(gamma),
                        beta: conv(beta),
                        mean: conv(mean),
                        var: conv(var),
                    },
                    Layer::MaxpoolPoints => Layer::MaxpoolPoints,
                })
                .collect(),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NeuralError> {
        let (w, points, _) = self.spec.validate()?;
        let rank = if points { 3 } else { 2 };
        if x.shape().len() != rank || x.channels() != w {
            let expected = if points {
                format!("(batch, points, {w})")
            } else {
                format!("(batch, {w})")
            };
            return Err(NeuralError::ShapeMismatch {
                context: "network input".into(),
                expected,
                actual: format!("{:?}", x.shape()),
            });
        }
        Ok(())
    }

    /// Eval-mode forward pass without recording.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NeuralError> {
        self.run(x, Mode::Eval, false).map(|(y, _)| y)
    }

    /// Forward pass recording a tape for [`Net::backward`].
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Tape<T>), NeuralError> {
        self.run(x, mode, true)
    }

    fn run(&self, x: &Tensor<T>, mode: Mode, record: bool) -> Result<(Tensor<T>, Tape<T>), NeuralError> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(if record { self.layers.len() } else { 0 });
        let mut cur = x.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            let (next, cache) = match layer {
                Layer::Dense { w, b, input, output, .. } => {
                    let rows = cur.data().len() / input;
                    let mut out = vec![T::zero(); rows * output];
                    matmul(cur.data(), false, w, false, &mut out, rows, *input, *output);
                    for r in out.chunks_mut(*output) {
                        r.iter_mut().zip(b).for_each(|(o, bi)| *o += *bi);
                    }
                    let mut shape = cur.shape().to_vec();
                    *shape.last_mut().unwrap() = *output;
                    let y = Tensor::new(shape, out)?;
                    (y, record.then(|| Cache::Dense { input: cur }))
                }
                Layer::Tanh => {
                    let mut y = cur;
                    y.data_mut().iter_mut().for_each(|v| *v = v.tanh());
                    let c = record.then(|| Cache::Tanh { output: y.clone() });
                    (y, c)
                }
                Layer::Selu => {
                    let (l, la) = (T::from_f64(SELU_LAMBDA), T::from_f64(SELU_LAMBDA * SELU_ALPHA));
                    let mut y = cur.clone();
                    y.data_mut().iter_mut().for_each(|v| {
                        *v = if *v > T::zero() { l * *v } else { la * v.exp_m1() }
                    });
                    let c = record.then(|| Cache::Selu { input: cur, output: y.clone() });
                    (y, c)
                }
                Layer::Batchnorm { gamma, beta, mean, var } => {
                    let c = gamma.len();
                    let rows = cur.data().len() / c;
                    let (bm, bv, train) = if mode == Mode::Train {
                        if cur.batch() < 2 {
                            return Err(NeuralError::BatchTooSmall(cur.batch()));
                        }
                        let mut m = vec![0.0f64; c];
                        for r in cur.data().chunks(c) {
                            m.iter_mut().zip(r).for_each(|(a, x)| *a += x.as_f64());
                        }
                        m.iter_mut().for_each(|a| *a /= rows as f64);
                        let mut v = vec![0.0f64; c];
                        for r in cur.data().chunks(c) {
                            v.iter_mut()
                                .zip(r)
                                .zip(&m)
                                .for_each(|((a, x), mu)| *a += (x.as_f64() - mu).powi(2));
                        }
                        v.iter_mut().for_each(|a| *a /= rows as f64);
                        (m, v, true)
                    } else {
                        (
                            mean.iter().map(|x| x.as_f64()).collect(),
                            var.iter().map(|x| x.as_f64()).collect(),
                            false,
                        )
                    };
                    let inv_std: Vec<f64> = bv.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                    let mut xhat = cur.data().to_vec();
                    for r in xhat.chunks_mut(c) {
                        for (j, x) in r.iter_mut().enumerate() {
                            *x = T::from_f64((x.as_f64() - bm[j]) * inv_std[j]);
                        }
                    }
                    let mut out = xhat.clone();
                    for r in out.chunks_mut(c) {
                        for (j, x) in r.iter_mut().enumerate() {
                            *x = gamma[j] * *x + beta[j];
                        }
                    }
                    let y = Tensor::new(cur.shape().to_vec(), out)?;
                    let cache = record.then(|| Cache::Batchnorm {
                        xhat,
                        inv_std,
                        batch_mean: bm,
                        batch_var: bv,
                        train,
                    });
                    (y, cache)
                }
                Layer::MaxpoolPoints => {
                    let s = cur.shape().to_vec();
                    let (b, p, c) = (s[0], s[1], s[2]);
                    if p == 0 {
                        return Err(NeuralError::EmptySet);
                    }
                    let mut out = vec![T::neg_infinity(); b * c];
                    let mut argmax = vec![0usize; b * c];
                    let d = cur.data();
                    for bi in 0..b {
                        for pi in 0..p {
                            let row = &d[(bi * p + pi) * c..(bi * p + pi + 1) * c];
                            for (j, &v) in row.iter().enumerate() {
                                if v > out[bi * c + j] {
                                    out[bi * c + j] = v;
                                    argmax[bi * c + j] = pi;
                                }
                            }
                        }
                    }
                    let y = Tensor::new(vec![b, c], out)?;
                    (y, record.then(|| Cache::Maxpool { argmax, in_shape: s }))
                }
            };
            if cfg!(debug_assertions) && !next.is_finite() {
                return Err(NeuralError::NonFinite {
                    layer: li,
                    kind: self.spec.layers[li].name().into(),
                });
            }
            if let Some(c) = cache {
                caches.push(c);
            }
            cur = next;
        }
        Ok((cur, Tape { caches }))
    }

    /// Fold the batch statistics of a train-mode tape into the running
    /// averages.
    pub fn update_running_stats(&mut self, tape: &Tape<T>) {
        let mut caches = tape.caches.iter();
        for layer in &mut self.layers {
            let cache = caches.next();
            if let (Layer::Batchnorm { mean, var, .. }, Some(Cache::Batchnorm { batch_mean, batch_var, train: true, .. })) =
                (layer, cache)
            {
                for (r, b) in mean.iter_mut().zip(batch_mean) {
                    *r = T::from_f64(BN_MOMENTUM * r.as_f64() + (1.0 - BN_MOMENTUM) * b);
                }
                for (r, b) in var.iter_mut().zip(batch_var) {
                    *r = T::from_f64(BN_MOMENTUM * r.as_f64() + (1.0 - BN_MOMENTUM) * b);
                }
            }
        }
    }

    /// Gradients of a scalar loss: given `∂ℓ/∂output`, return `∂ℓ/∂input`
    /// and `∂ℓ/∂params` in [`Net::params`] order.
    pub fn backward(&self, tape: &Tape<T>, dout: &Tensor<T>) -> Result<(Tensor<T>, Vec<Vec<T>>), NeuralError> {
        if tape.caches.len() != self.layers.len() {
            return Err(NeuralError::InvalidSpec("tape was recorded without caches".into()));
        }
        let mut grads: Vec<Vec<T>> = Vec::new();
        let mut g = dout.clone();
        for (layer, cache) in self.layers.iter().zip(&tape.caches).rev() {
            g = match (layer, cache) {
                (Layer::Dense { w, input, output, .. }, Cache::Dense { input: x }) => {
                    let rows = x.data().len() / input;
                    if g.data().len() != rows * output {
                        return Err(NeuralError::ShapeMismatch {
                            context: "dense backward".into(),
                            expected: format!("{rows}x{output}"),
                            actual: format!("{:?}", g.shape()),
                        });
                    }
                    let mut dw = vec![T::zero(); input * output];
                    matmul(x.data(), true, g.data(), false, &mut dw, *input, rows, *output);
                    let mut db = vec![0.0f64; *output];
                    for r in g.data().chunks(*output) {
                        db.iter_mut().zip(r).for_each(|(a, v)| *a += v.as_f64());
                    }
                    let mut dx = vec![T::zero(); rows * input];
                    matmul(g.data(), false, w, true, &mut dx, rows, *output, *input);
                    grads.push(db.into_iter().map(T::from_f64).collect());
                    grads.push(dw);
                    Tensor::new(x.shape().to_vec(), dx)?
                }
                (Layer::Tanh, Cache::Tanh { output }) => {
                    let mut d = g;
                    d.data_mut()
                        .iter_mut()
                        .zip(output.data())
                        .for_each(|(gi, y)| *gi *= T::one() - *y * *y);
                    d
                }
                (Layer::Selu, Cache::Selu { input, output }) => {
                    let (l, la) = (T::from_f64(SELU_LAMBDA), T::from_f64(SELU_LAMBDA * SELU_ALPHA));
                    let mut d = g;
                    for ((gi, x), y) in d.data_mut().iter_mut().zip(input.data()).zip(output.data()) {
                        *gi *= if *x > T::zero() { l } else { *y + la };
                    }
                    d
                }
                (Layer::Batchnorm { gamma, .. }, Cache::Batchnorm { xhat, inv_std, train, .. }) => {
                    let c = gamma.len();
                    let rows = xhat.len() / c;
                    let mut dgamma = vec![0.0f64; c];
                    let mut dbeta = vec![0.0f64; c];
                    for (gr, xr) in g.data().chunks(c).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            dgamma[j] += gr[j].as_f64() * xr[j].as_f64();
                            dbeta[j] += gr[j].as_f64();
                        }
                    }
                    let mut dx = g.data().to_vec();
                    if *train {
                        // dx = inv/R · (R·dxhat − Σdxhat − xhat·Σ(dxhat·xhat)), dxhat = γ·dy.
                        let r = rows as f64;
                        for (dr, xr) in dx.chunks_mut(c).zip(xhat.chunks(c)) {
                            for j in 0..c {
                                let gj = gamma[j].as_f64();
                                let v = inv_std[j] / r
                                    * (r * gj * dr[j].as_f64() - gj * dbeta[j] - xr[j].as_f64() * gj * dgamma[j]);
                                dr[j] = T::from_f64(v);
                            }
                        }
                    } else {
                        for dr in dx.chunks_mut(c) {
                            for j in 0..c {
                                dr[j] = T::from_f64(dr[j].as_f64() * gamma[j].as_f64() * inv_std[j]);
                            }
                        }
                    }
                    grads.push(dbeta.into_iter().map(T::from_f64).collect());
                    grads.push(dgamma.into_iter().map(T::from_f64).collect());
                    Tensor::new(g.shape().to_vec(), dx)?
                }
                (Layer::MaxpoolPoints, Cache::Maxpool { argmax, in_shape }) => {
                    let (b, p, c) = (in_shape[0], in_shape[1], in_shape[2]);
                    let mut dx = vec![T::zero(); b * p * c];
                    for bi in 0..b {
                        for j in 0..c {
                            let pi = argmax[bi * c + j];
                            dx[(bi * p + pi) * c + j] = g.data()[bi * c + j];
                        }
                    }
                    Tensor::new(in_shape.clone(), dx)?
                }
                _ => return Err(NeuralError::InvalidSpec("tape does not match network".into())),
            };
        }
        grads.reverse();
        Ok((g, grads))
    }
}
