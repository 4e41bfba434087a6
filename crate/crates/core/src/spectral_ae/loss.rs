use crate::neural::{chamfer, Mode, Net, NetSpec, NeuralError, Real, Tape, Tensor};

/// The four networks of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks<T> {
    pub encoder: Net<T>,
    pub decoder: Net<T>,
    /// Spectrum → latent.
    pub pi: Net<T>,
    /// Latent → spectrum.
    pub rho: Net<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    pub alpha: f64,
    /// Include `‖ρ(E(X)) − λ‖²`; off for the ablation.
    pub rho_term: bool,
    /// Chamfer reconstruction (point clouds) instead of the vertex-wise error.
    pub chamfer: bool,
    /// Batch-norm mode of the coupling networks and the encoder.
    pub mode: Mode,
}

/// Batch-averaged loss and its two terms: `total = recon + alpha·spectral`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub spectral: f64,
}

/// Tapes of one loss evaluation, for the batch-norm running averages.
#[derive(Debug, Clone)]
pub struct LossTapes<T> {
    encoder: Tape<T>,
    pi: Tape<T>,
    rho: Option<Tape<T>>,
}

fn sub<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Vec<f64> {
    a.data().iter().zip(b.data()).map(|(x, y)| x.as_f64() - y.as_f64()).collect()
}

fn scaled<T: Real>(shape: &[usize], v: &[f64], c: f64) -> Result<Tensor<T>, NeuralError> {
    Tensor::new(shape.to_vec(), v.iter().map(|x| T::from_f64(c * x)).collect())
}

impl<T: Real> Networks<T> {
    /// Initialise each network from its own seed derived from `seed`.
    pub fn new(encoder: NetSpec, decoder: NetSpec, pi: NetSpec, rho: NetSpec, seed: u64) -> Result<Self, NeuralError> {
        let s = |i: u64| seed.wrapping_mul(4).wrapping_add(i);
        Ok(Networks {
            encoder: Net::new(encoder, s(0))?,
            decoder: Net::new(decoder, s(1))?,
            pi: Net::new(pi, s(2))?,
            rho: Net::new(rho, s(3))?,
        })
    }

    pub fn cast<U: Real>(&self) -> Networks<U> {
        Networks {
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
            pi: self.pi.cast(),
            rho: self.rho.cast(),
        }
    }

    /// Parameter groups of encoder, decoder, `π`, `ρ` in that order.
    pub fn params(&self) -> Vec<&[T]> {
        let mut out = self.encoder.params();
        out.extend(self.decoder.params());
        out.extend(self.pi.params());
        out.extend(self.rho.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = self.encoder.params_mut();
        out.extend(self.decoder.params_mut());
        out.extend(self.pi.params_mut());
        out.extend(self.rho.params_mut());
        out
    }

    /// Group counts per network, to split a flat gradient list.
    pub fn group_counts(&self) -> [usize; 4] {
        [
            self.encoder.params().len(),
            self.decoder.params().len(),
            self.pi.params().len(),
            self.rho.params().len(),
        ]
    }

    pub fn update_running_stats(&mut self, tapes: &LossTapes<T>) {
        self.encoder.update_running_stats(&tapes.encoder);
        self.pi.update_running_stats(&tapes.pi);
        if let Some(t) = &tapes.rho {
            self.rho.update_running_stats(t);
        }
    }

    /// Loss of a batch in network space and its gradient with respect to
    /// every parameter group (see [`Networks::params`]).
    ///
    /// `x` is `(batch, n·d)` for template shapes or `(batch, points, 3)` for
    /// point clouds; `lambda` is `(batch, k)`. `n_points` is the template
    /// point count `n` that divides the squared reconstruction error.
    pub fn loss_and_grads(
        &self,
        x: &Tensor<T>,
        lambda: &Tensor<T>,
        n_points: usize,
        opts: &LossOptions,
    ) -> Result<(LossParts, Vec<Vec<T>>, LossTapes<T>), NeuralError> {
        let b = x.batch();
        let k = lambda.channels();
        if lambda.shape().len() != 2 || lambda.batch() != b {
            return Err(NeuralError::ShapeMismatch {
                context: "spectra batch".into(),
                expected: format!("({b}, k)"),
                actual: format!("{:?}", lambda.shape()),
            });
        }
        let bf = b as f64;
        let (z, tape_e) = self.encoder.forward(x, opts.mode)?;
        let (xr, tape_d) = self.decoder.forward(&z, opts.mode)?;

        let (recon, dxr) = if opts.chamfer {
            let d = x.channels();
            let mut total = 0.0;
            let mut grad = Vec::with_capacity(xr.data().len());
            for i in 0..b {
                let (v, ga, _) = chamfer(xr.row(i), x.row(i), d)?;
                total += v;
                grad.extend(ga.into_iter().map(|g| g.as_f64()));
            }
            (total / bf, scaled(xr.shape(), &grad, 1.0 / bf)?)
        } else {
            if xr.shape() != x.shape() {
                return Err(NeuralError::ShapeMismatch {
                    context: "reconstruction".into(),
                    expected: format!("{:?}", x.shape()),
                    actual: format!("{:?}", xr.shape()),
                });
            }
            let diff = sub(&xr, x);
            let c = 1.0 / (n_points as f64 * bf);
            let v = diff.iter().map(|d| d * d).sum::<f64>() * c;
            (v, scaled(xr.shape(), &diff, 2.0 * c)?)
        };

        let (zp, tape_pi) = self.pi.forward(lambda, opts.mode)?;
        let c = 1.0 / (k as f64 * bf);
        let dpi = sub(&zp, &z);
        let mut spectral = dpi.iter().map(|d| d * d).sum::<f64>();
        let dzp = scaled::<T>(zp.shape(), &dpi, 2.0 * opts.alpha * c)?;
        let mut dz: Vec<f64> = dpi.iter().map(|d| -2.0 * opts.alpha * c * d).collect();

        let (dx_d, grads_d) = self.decoder.backward(&tape_d, &dxr)?;
        dz.iter_mut().zip(dx_d.data()).for_each(|(a, g)| *a += g.as_f64());

        let (tape_rho, grads_rho) = if opts.rho_term {
            let (lr, tape) = self.rho.forward(&z, opts.mode)?;
            let drho = sub(&lr, lambda);
            spectral += drho.iter().map(|d| d * d).sum::<f64>();
            let dlr = scaled::<T>(lr.shape(), &drho, 2.0 * opts.alpha * c)?;
            let (dz_rho, g) = self.rho.backward(&tape, &dlr)?;
            dz.iter_mut().zip(dz_rho.data()).for_each(|(a, g)| *a += g.as_f64());
            (Some(tape), g)
        } else {
            let zeros = self.rho.params().iter().map(|p| vec![T::zero(); p.len()]).collect();
            (None, zeros)
        };
        spectral *= c;

        let dz = scaled::<T>(z.shape(), &dz, 1.0)?;
        let (_, grads_e) = self.encoder.backward(&tape_e, &dz)?;
        let (_, grads_pi) = self.pi.backward(&tape_pi, &dzp)?;

        let mut grads = grads_e;
        grads.extend(grads_d);
        grads.extend(grads_pi);
        grads.extend(grads_rho);
        let parts = LossParts {
            total: recon + opts.alpha * spectral,
            recon,
            spectral,
        };
        Ok((
            parts,
            grads,
            LossTapes {
                encoder: tape_e,
                pi: tape_pi,
                rho: tape_rho,
            },
        ))
    }
}
