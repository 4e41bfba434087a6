use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::loss::Networks;
use super::{ModelError, LATENT_DIM};
use crate::geometry::{Contour, Mesh, PointCloud, Shape};
use crate::neural::{read_checkpoint, write_checkpoint, LayerSpec, NetSpec, Tensor};

/// What the encoder consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InputKind {
    /// Shapes in dense correspondence with the template, flattened.
    DenseTemplate,
    /// Unordered point sets of any size.
    Pointcloud,
}

/// Output layout of the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    /// Point count.
    pub n: usize,
    /// 2 for contours, 3 otherwise.
    pub dim: usize,
    /// Triangles for mesh templates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces: Option<Vec<[usize; 3]>>,
}

impl Template {
    pub fn of_shape(shape: &Shape) -> Template {
        Template {
            n: shape.num_points(),
            dim: shape.dim(),
            faces: match shape {
                Shape::Mesh(m) => Some(m.faces().to_vec()),
                _ => None,
            },
        }
    }

    /// Unstructured output of `n` points in 3D.
    pub fn points(n: usize) -> Template {
        Template { n, dim: 3, faces: None }
    }

    pub fn width(&self) -> usize {
        self.n * self.dim
    }

    /// Wrap decoded coordinates as a shape of the template's kind.
    pub fn shape_from(&self, coords: &[f64]) -> Result<Shape, ModelError> {
        if coords.len() != self.width() {
            return Err(ModelError::DimMismatch {
                context: "template coordinates".into(),
                expected: self.width(),
                got: coords.len(),
            });
        }
        Ok(match (self.dim, &self.faces) {
            (2, _) => Shape::Contour(Contour::new(coords.chunks(2).map(|c| [c[0], c[1]]).collect())?),
            (_, Some(f)) => Shape::Mesh(Mesh::new(
                coords.chunks(3).map(|c| [c[0], c[1], c[2]]).collect(),
                f.clone(),
            )?),
            _ => Shape::PointCloud(PointCloud::new(coords.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())?),
        })
    }
}

/// Dataset-level affine maps applied before the networks and inverted after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Subtracted from every point.
    pub center: Vec<f64>,
    /// Coordinates are divided by this after centring.
    pub coord_scale: f64,
    /// Eigenvalues are divided by this.
    pub eigen_scale: f64,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Normalization {
            center: vec![0.0; dim],
            coord_scale: 1.0,
            eigen_scale: 1.0,
        }
    }

    pub fn coords_in(&self, raw: &[f64]) -> Vec<f32> {
        let d = self.center.len();
        raw.iter()
            .enumerate()
            .map(|(i, x)| ((x - self.center[i % d]) / self.coord_scale) as f32)
            .collect()
    }

    pub fn coords_out(&self, net: &[f32]) -> Vec<f64> {
        let d = self.center.len();
        net.iter()
            .enumerate()
            .map(|(i, x)| *x as f64 * self.coord_scale + self.center[i % d])
            .collect()
    }

    pub fn eigen_in(&self, raw: &[f64]) -> Vec<f32> {
        raw.iter().map(|x| (x / self.eigen_scale) as f32).collect()
    }

    pub fn eigen_out(&self, net: &[f32]) -> Vec<f64> {
        net.iter().map(|x| *x as f64 * self.eigen_scale).collect()
    }
}

/// A complete model: the four networks plus everything needed to map raw
/// shapes and spectra in and out of network space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: InputKind,
    pub k: usize,
    pub latent_dim: usize,
    /// Weight of the spectral coupling term.
    pub alpha: f64,
    pub template: Template,
    pub norm: Normalization,
    pub nets: Networks<f32>,
    /// Free-form provenance (training config, seeds), stored in checkpoints.
    pub metadata: Value,
}

fn coupling_spec(k: usize, latent: usize) -> NetSpec {
    NetSpec::mlp(&[k, 80, 160, 320, 640, 320, 160, 80, latent], LayerSpec::Selu, true)
}

fn coupling_spec_back(k: usize, latent: usize) -> NetSpec {
    NetSpec::mlp(&[latent, 80, 160, 320, 640, 320, 160, 80, k], LayerSpec::Selu, true)
}

/// Dense decoder: `latent → 200 → n·d`, tanh on the hidden layer.
fn decoder_spec(latent: usize, width: usize) -> NetSpec {
    NetSpec::mlp(&[latent, 200, width], LayerSpec::Tanh, false)
}

/// Append an activation after the final layer (the encoder's bottleneck is
/// an inner layer of the auto-encoder, so it is activated too).
fn with_final_tanh(mut spec: NetSpec) -> NetSpec {
    spec.layers.push(LayerSpec::Tanh);
    spec
}

impl ModelBundle {
    /// Encoder `n·d → 300 → 200 → latent`, decoder `latent → 200 → n·d`, and
    /// the two coupling networks, all freshly initialised.
    pub fn build_dense(template: Template, k: usize, seed: u64) -> Result<ModelBundle, ModelError> {
        if template.n == 0 || k == 0 || !(2..=3).contains(&template.dim) {
            return Err(ModelError::InvalidConfig(format!(
                "need n > 0, k > 0 and dim 2 or 3 (n = {}, k = {k}, dim = {})",
                template.n, template.dim
            )));
        }
        let latent = LATENT_DIM;
        let w = template.width();
        let encoder = with_final_tanh(NetSpec::mlp(&[w, 300, 200, latent], LayerSpec::Tanh, false));
        let nets = Networks::new(encoder, decoder_spec(latent, w), coupling_spec(k, latent), coupling_spec_back(k, latent), seed)?;
        Ok(ModelBundle {
            kind: InputKind::DenseTemplate,
            k,
            latent_dim: latent,
            alpha: super::DEFAULT_ALPHA,
            norm: Normalization::identity(template.dim),
            template,
            nets,
            metadata: Value::Null,
        })
    }

    /// Point-set encoder (shared `3 → 64 → 128` with batch norm, max-pool,
    /// `128 → 64 → latent`) and a dense decoder to `n_out` points.
    pub fn build_pointcloud(n_out: usize, k: usize, seed: u64) -> Result<ModelBundle, ModelError> {
        if n_out == 0 || k == 0 {
            return Err(ModelError::InvalidConfig("need n_out > 0 and k > 0".into()));
        }
        let latent = LATENT_DIM;
        let template = Template::points(n_out);
        let encoder = NetSpec {
            layers: vec![
                LayerSpec::SharedDense { input: 3, output: 64 },
                LayerSpec::Batchnorm { channels: 64 },
                LayerSpec::Selu,
                LayerSpec::SharedDense { input: 64, output: 128 },
                LayerSpec::Batchnorm { channels: 128 },
                LayerSpec::Selu,
                LayerSpec::MaxpoolPoints,
                LayerSpec::Dense { input: 128, output: 64 },
                LayerSpec::Tanh,
                LayerSpec::Dense { input: 64, output: latent },
                LayerSpec::Tanh,
            ],
        };
        let nets = Networks::new(
            encoder,
            decoder_spec(latent, template.width()),
            coupling_spec(k, latent),
            coupling_spec_back(k, latent),
            seed,
        )?;
        Ok(ModelBundle {
            kind: InputKind::Pointcloud,
            k,
            latent_dim: latent,
            alpha: super::DEFAULT_ALPHA,
            norm: Normalization::identity(3),
            template,
            nets,
            metadata: Value::Null,
        })
    }

    fn check_k(&self, spectrum: &[f64]) -> Result<(), ModelError> {
        if spectrum.len() != self.k {
            return Err(ModelError::KMismatch {
                expected: self.k,
                got: spectrum.len(),
            });
        }
        Ok(())
    }

    fn check_latent(&self, v: &[f64]) -> Result<(), ModelError> {
        if v.len() != self.latent_dim {
            return Err(ModelError::DimMismatch {
                context: "latent vector".into(),
                expected: self.latent_dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Network-space input tensor for one raw shape (flat coordinates).
    pub(crate) fn input_tensor(&self, coords: &[f64]) -> Result<Tensor<f32>, ModelError> {
        let d = self.template.dim;
        match self.kind {
            InputKind::DenseTemplate => {
                if coords.len() != self.template.width() {
                    return Err(ModelError::DimMismatch {
                        context: "shape coordinates (template size)".into(),
                        expected: self.template.width(),
                        got: coords.len(),
                    });
                }
                Ok(Tensor::matrix(1, coords.len(), self.norm.coords_in(coords))?)
            }
            InputKind::Pointcloud => {
                if coords.is_empty() || coords.len() % d != 0 {
                    return Err(ModelError::DimMismatch {
                        context: "point cloud coordinates".into(),
                        expected: d,
                        got: coords.len(),
                    });
                }
                Ok(Tensor::new(vec![1, coords.len() / d, d], self.norm.coords_in(coords))?)
            }
        }
    }

    /// `E(X)` for flat raw coordinates.
    pub fn encode(&self, coords: &[f64]) -> Result<Vec<f64>, ModelError> {
        let x = self.input_tensor(coords)?;
        let z = self.nets.encoder.infer(&x)?;
        Ok(z.data().iter().map(|v| *v as f64).collect())
    }

    pub fn encode_shape(&self, shape: &Shape) -> Result<Vec<f64>, ModelError> {
        if shape.dim() != self.template.dim {
            return Err(ModelError::DimMismatch {
                context: "shape dimension".into(),
                expected: self.template.dim,
                got: shape.dim(),
            });
        }
        self.encode(&shape.flat_coords())
    }

    /// `D(v)` as raw flat coordinates.
    pub fn decode(&self, v: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_latent(v)?;
        let z = Tensor::matrix(1, v.len(), v.iter().map(|x| *x as f32).collect())?;
        Ok(self.norm.coords_out(self.nets.decoder.infer(&z)?.data()))
    }

    pub fn decode_shape(&self, v: &[f64]) -> Result<Shape, ModelError> {
        self.template.shape_from(&self.decode(v)?)
    }

    /// `π(λ)`.
    pub fn spec_to_latent(&self, spectrum: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_k(spectrum)?;
        let l = Tensor::matrix(1, self.k, self.norm.eigen_in(spectrum))?;
        Ok(self.nets.pi.infer(&l)?.data().iter().map(|x| *x as f64).collect())
    }

    /// `ρ(v)` in raw eigenvalue units.
    pub fn latent_to_spec(&self, v: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_latent(v)?;
        let z = Tensor::matrix(1, v.len(), v.iter().map(|x| *x as f32).collect())?;
        Ok(self.norm.eigen_out(self.nets.rho.infer(&z)?.data()))
    }

    /// `ρ(v)` and the vector-Jacobian product `Jᵀ g` for a cotangent `g` on
    /// the raw spectrum.
    pub fn latent_to_spec_vjp(&self, v: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        self.check_latent(v)?;
        self.check_k(g)?;
        let z = Tensor::matrix(1, v.len(), v.iter().map(|x| *x as f32).collect())?;
        let (y, tape) = self.nets.rho.forward(&z, crate::neural::Mode::Eval)?;
        let s = self.norm.eigen_scale;
        let dy = Tensor::matrix(1, self.k, g.iter().map(|x| (x * s) as f32).collect())?;
        let (dz, _) = self.nets.rho.backward(&tape, &dy)?;
        Ok((
            self.norm.eigen_out(y.data()),
            dz.data().iter().map(|x| *x as f64).collect(),
        ))
    }

    /// `D(E(X))`.
    pub fn reconstruct(&self, coords: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.decode(&self.encode(coords)?)
    }

    pub fn num_params(&self) -> usize {
        [&self.nets.encoder, &self.nets.decoder, &self.nets.pi, &self.nets.rho]
            .iter()
            .map(|n| n.num_params())
            .sum()
    }

    fn manifest(&self) -> Value {
        json!({
            "kind": self.kind,
            "k": self.k,
            "latent_dim": self.latent_dim,
            "alpha": self.alpha,
            "template": self.template,
            "normalization": self.norm,
            "metadata": self.metadata,
        })
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<(), ModelError> {
        let n = &self.nets;
        write_checkpoint(
            out,
            &[("encoder", &n.encoder), ("decoder", &n.decoder), ("pi", &n.pi), ("rho", &n.rho)],
            self.manifest(),
        )?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<ModelBundle, ModelError> {
        let (nets, meta) = read_checkpoint(input)?;
        let bad = |m: String| ModelError::Checkpoint(m);
        let names: Vec<&str> = nets.iter().map(|n| n.name.as_str()).collect();
        if names != ["encoder", "decoder", "pi", "rho"] {
            return Err(bad(format!("expected encoder, decoder, pi, rho; found {names:?}")));
        }
        let field = |key: &str| meta.get(key).cloned().ok_or_else(|| bad(format!("manifest lacks '{key}'")));
        let parse = |e: serde_json::Error| bad(e.to_string());
        let mut it = nets.into_iter().map(|n| n.net);
        let networks = Networks {
            encoder: it.next().unwrap(),
            decoder: it.next().unwrap(),
            pi: it.next().unwrap(),
            rho: it.next().unwrap(),
        };
        let bundle = ModelBundle {
            kind: serde_json::from_value(field("kind")?).map_err(parse)?,
            k: serde_json::from_value(field("k")?).map_err(parse)?,
            latent_dim: serde_json::from_value(field("latent_dim")?).map_err(parse)?,
            alpha: serde_json::from_value(field("alpha")?).map_err(parse)?,
            template: serde_json::from_value(field("template")?).map_err(parse)?,
            norm: serde_json::from_value(field("normalization")?).map_err(parse)?,
            nets: networks,
            metadata: meta.get("metadata").cloned().unwrap_or(Value::Null),
        };
        bundle.check_consistency()?;
        Ok(bundle)
    }

    /// Network widths agree with `k`, the latent size and the template.
    pub fn check_consistency(&self) -> Result<(), ModelError> {
        let n = &self.nets;
        let bad = |what: &str| Err(ModelError::Checkpoint(format!("inconsistent bundle: {what}")));
        if n.pi.input_width() != self.k || n.rho.output_width() != self.k {
            return bad("coupling networks do not match k");
        }
        if n.encoder.output_width() != self.latent_dim
            || n.pi.output_width() != self.latent_dim
            || n.rho.input_width() != self.latent_dim
            || n.decoder.input_width() != self.latent_dim
        {
            return bad("latent widths differ");
        }
        if n.decoder.output_width() != self.template.width() {
            return bad("decoder output does not match the template");
        }
        if self.norm.center.len() != self.template.dim {
            return bad("normalisation centre has the wrong dimension");
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        self.write_to(BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelBundle, ModelError> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::read_from(BufReader::new(f))
    }
}
