use super::{NeuralError, Real};

/// Adam with bias correction. Moment estimates are kept in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Update every parameter group in place. Groups are matched by position;
    /// the state is sized on the first call.
    pub fn step<T: Real>(&mut self, params: Vec<&mut Vec<T>>, grads: &[Vec<T>]) -> Result<(), NeuralError> {
        if params.len() != grads.len() {
            return Err(NeuralError::ShapeMismatch {
                context: "adam parameter groups".into(),
                expected: params.len().to_string(),
                actual: grads.len().to_string(),
            });
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if self.m.get(i).map(Vec::len) != Some(p.len()) || g.len() != p.len() {
                return Err(NeuralError::ShapeMismatch {
                    context: format!("adam group {i}"),
                    expected: p.len().to_string(),
                    actual: g.len().to_string(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((w, gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gi = gi.as_f64();
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let upd = self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
                *w = T::from_f64(w.as_f64() - upd);
            }
        }
        Ok(())
    }
}
