use super::{NeuralError, Real, Tensor};

/// `Σ (pred − target)²` and its gradient with respect to `pred`.
pub fn squared_error<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>), NeuralError> {
    if pred.data().len() != target.data().len() {
        return Err(NeuralError::ShapeMismatch {
            context: "squared error".into(),
            expected: format!("{:?}", pred.shape()),
            actual: format!("{:?}", target.shape()),
        });
    }
    let mut sum = 0.0f64;
    let grad: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p.as_f64() - t.as_f64();
            sum += d * d;
            T::from_f64(2.0 * d)
        })
        .collect();
    Ok((sum, Tensor::new(pred.shape().to_vec(), grad)?))
}

fn nearest(p: &[f64], set: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, q) in set.chunks_exact(dim).enumerate() {
        let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Mean nearest-neighbour squared distance from `src` to `dst`, adding its
/// gradient into `gs` and `gd`.
fn one_way(src: &[f64], dst: &[f64], dim: usize, gs: &mut [f64], gd: &mut [f64]) -> f64 {
    let w = 1.0 / (src.len() / dim) as f64;
    let mut part = 0.0;
    for (i, p) in src.chunks_exact(dim).enumerate() {
        let (j, d) = nearest(p, dst, dim);
        part += d;
        let q = &dst[j * dim..(j + 1) * dim];
        for c in 0..dim {
            let diff = 2.0 * w * (p[c] - q[c]);
            gs[i * dim + c] += diff;
            gd[j * dim + c] -= diff;
        }
    }
    part * w
}

/// Symmetric Chamfer distance between two point sets given as flat
/// `points × dim` slices: the mean squared distance from each point of `a`
/// to its nearest point of `b`, plus the same from `b` to `a`. Returns the
/// value and the gradients with respect to `a` and `b`.
pub fn chamfer<T: Real>(a: &[T], b: &[T], dim: usize) -> Result<(f64, Vec<T>, Vec<T>), NeuralError> {
    if dim == 0 || a.len() % dim != 0 || b.len() % dim != 0 {
        return Err(NeuralError::InvalidSpec(format!(
            "point sets of {} and {} values are not multiples of dimension {dim}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(NeuralError::EmptySet);
    }
    let af: Vec<f64> = a.iter().map(|x| x.as_f64()).collect();
    let bf: Vec<f64> = b.iter().map(|x| x.as_f64()).collect();
    let mut ga = vec![0.0f64; af.len()];
    let mut gb = vec![0.0f64; bf.len()];
    let total = one_way(&af, &bf, dim, &mut ga, &mut gb) + one_way(&bf, &af, dim, &mut gb, &mut ga);
    let conv = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect();
    Ok((total, conv(ga), conv(gb)))
}
