//! Synthetic datasets with cached spectra, cached trained models, and the
//! evaluation metrics shared by the acceptance suite, the CLI and the server.

mod dataset;
mod eval;

pub use dataset::DATASET_FILE;
pub use eval::*;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::apps::AppError;
use crate::eigensolve::{spectrum_of, EigenError, FemOrder, SpectrumCache};
use crate::geometry::{sample_pointcloud, DatasetManifest, DrawRanges, FamilyKind, GeometryError, SamplingMode, Shape};
use crate::spectral_ae::{train, ModelBundle, ModelError, Template, TrainConfig, TrainReport, TrainingSet};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    App(#[from] AppError),
    #[error("{0}")]
    Invalid(String),
    #[error("model store: {0}")]
    Store(String),
}

/// Family members with their spectra; the first `n_train` form the
/// training split, the rest are held out.
#[derive(Debug, Clone)]
pub struct FamilyData {
    pub manifest: DatasetManifest,
    pub shapes: Vec<Shape>,
    /// `k_max` eigenvalues per shape.
    pub spectra: Vec<Vec<f64>>,
    pub n_train: usize,
    pub order: FemOrder,
}

impl FamilyData {
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        kind: FamilyKind,
        resolution: usize,
        count: usize,
        n_train: usize,
        seed: u64,
        k_max: usize,
        order: FemOrder,
        cache: Option<&SpectrumCache>,
    ) -> Result<FamilyData, ExperimentError> {
        if n_train > count {
            return Err(ExperimentError::Invalid(format!("{n_train} training shapes out of {count}")));
        }
        let manifest = DatasetManifest::draw(kind, resolution, count, seed, DrawRanges::default_for(kind));
        let shapes = manifest.realize()?;
        let mut spectra = Vec::with_capacity(count);
        for (i, s) in shapes.iter().enumerate() {
            spectra.push(spectrum_of(s, k_max, order, cache)?.values);
            if (i + 1) % 50 == 0 {
                log::info!("spectra: {}/{count}", i + 1);
            }
        }
        Ok(FamilyData {
            manifest,
            shapes,
            spectra,
            n_train,
            order,
        })
    }

    pub fn k_max(&self) -> usize {
        self.spectra.first().map_or(0, Vec::len)
    }

    pub fn train_range(&self) -> std::ops::Range<usize> {
        0..self.n_train
    }

    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.n_train..self.shapes.len()
    }

    /// First `k` eigenvalues of shape `i`.
    pub fn spectrum(&self, i: usize, k: usize) -> &[f64] {
        &self.spectra[i][..k]
    }

    /// Training split with spectra cut to `k`.
    pub fn training_set(&self, k: usize) -> Result<TrainingSet, ExperimentError> {
        self.check_k(k)?;
        Ok(TrainingSet {
            inputs: self.train_range().map(|i| self.shapes[i].flat_coords()).collect(),
            spectra: self.train_range().map(|i| self.spectrum(i, k).to_vec()).collect(),
        })
    }

    /// Point clouds sampled from the surface of each training mesh
    /// (`fraction` of the vertex count, one seed per shape).
    pub fn pointcloud_training_set(&self, k: usize, fraction: f64, seed: u64) -> Result<TrainingSet, ExperimentError> {
        self.check_k(k)?;
        let inputs = self
            .train_range()
            .map(|i| Ok(self.cloud(i, fraction, seed, SamplingMode::Uniform)?.into_iter().flatten().collect()))
            .collect::<Result<Vec<Vec<f64>>, ExperimentError>>()?;
        Ok(TrainingSet {
            inputs,
            spectra: self.train_range().map(|i| self.spectrum(i, k).to_vec()).collect(),
        })
    }

    /// Surface sample of shape `i`.
    pub fn cloud(&self, i: usize, fraction: f64, seed: u64, mode: SamplingMode) -> Result<Vec<[f64; 3]>, ExperimentError> {
        let Shape::Mesh(m) = &self.shapes[i] else {
            return Err(ExperimentError::Invalid("point clouds need a mesh family".into()));
        };
        let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        Ok(sample_pointcloud(m, fraction, s, mode)?.points().to_vec())
    }

    fn check_k(&self, k: usize) -> Result<(), ExperimentError> {
        if k > self.k_max() {
            return Err(ExperimentError::Invalid(format!("k = {k} exceeds the {} cached eigenvalues", self.k_max())));
        }
        Ok(())
    }
}

/// Dataset and training settings of an evaluation run. Missing fields
/// take the desk-scale values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub kind: FamilyKind,
    pub resolution: usize,
    pub count: usize,
    pub n_train: usize,
    pub seed: u64,
    pub k_max: usize,
    pub order: FemOrder,
    pub train: TrainConfig,
    /// Point fraction of the training and test clouds.
    pub cloud_fraction: f64,
}

impl Protocol {
    /// 700 deformed spheres (642 vertices), 600 for training, cubic-FEM
    /// spectra up to k = 60.
    pub fn desk_blob() -> Protocol {
        Protocol {
            kind: FamilyKind::Blob3d,
            resolution: 3,
            count: 700,
            n_train: 600,
            seed: 2024,
            k_max: 60,
            order: FemOrder::Cubic,
            train: TrainConfig {
                lr: 1e-3,
                epochs: 300,
                alpha: 1e-4,
                ..Default::default()
            },
            cloud_fraction: 0.2,
        }
    }

    pub fn data(&self, cache: Option<&SpectrumCache>) -> Result<FamilyData, ExperimentError> {
        FamilyData::generate(
            self.kind,
            self.resolution,
            self.count,
            self.n_train,
            self.seed,
            self.k_max,
            self.order,
            cache,
        )
    }
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol::desk_blob()
    }
}

/// Which model of the evaluation suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Variant {
    /// Full model with bandwidth `k`.
    Ours { k: usize },
    /// Ablation without the latent-to-spectrum term.
    NoRho { k: usize },
    /// Point-set encoder trained on surface samples.
    Pointcloud { k: usize },
}

impl Variant {
    pub fn k(&self) -> usize {
        match *self {
            Variant::Ours { k } | Variant::NoRho { k } | Variant::Pointcloud { k } => k,
        }
    }
}

/// Trains models on demand and keeps them, keyed by everything that
/// determines the result, in an optional directory.
#[derive(Debug, Clone, Default)]
pub struct ModelStore {
    dir: Option<PathBuf>,
}

/// Bumped whenever training changes in a way the key cannot see.
const STORE_VERSION: u32 = 1;

impl ModelStore {
    pub fn in_memory() -> ModelStore {
        ModelStore { dir: None }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<ModelStore, ExperimentError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| ExperimentError::Store(format!("{}: {e}", dir.display())))?;
        Ok(ModelStore { dir: Some(dir) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn key(protocol: &Protocol, variant: Variant) -> String {
        let desc = serde_json::json!({
            "version": STORE_VERSION,
            "protocol": protocol,
            "variant": variant,
        });
        hex::encode(&Sha256::digest(desc.to_string().as_bytes())[..12])
    }

    /// The trained model of `variant`, from the store when present. The
    /// report is `None` on a store hit.
    pub fn get_or_train(
        &self,
        protocol: &Protocol,
        variant: Variant,
        data: &FamilyData,
    ) -> Result<(ModelBundle, Option<TrainReport>), ExperimentError> {
        let path = self
            .dir
            .as_ref()
            .map(|d| d.join(format!("model-{}.spsh", Self::key(protocol, variant))));
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            log::info!("loading {variant:?} from {}", p.display());
            return Ok((ModelBundle::load(p)?, None));
        }
        let k = variant.k();
        let mut cfg = protocol.train.clone();
        cfg.k = k;
        let (model, set) = match variant {
            Variant::Ours { .. } | Variant::NoRho { .. } => {
                cfg.rho_term = matches!(variant, Variant::Ours { .. });
                let template = Template::of_shape(&data.shapes[0]);
                (ModelBundle::build_dense(template, k, cfg.seed)?, data.training_set(k)?)
            }
            Variant::Pointcloud { .. } => {
                let n_out = data.shapes[0].num_points();
                (
                    ModelBundle::build_pointcloud(n_out, k, cfg.seed)?,
                    data.pointcloud_training_set(k, protocol.cloud_fraction, cfg.seed)?,
                )
            }
        };
        log::info!("training {variant:?}");
        let (mut model, report) = train(model, &set, &cfg)?;
        if let serde_json::Value::Object(m) = &mut model.metadata {
            m.insert("variant".into(), serde_json::to_value(variant).unwrap_or_default());
            m.insert("dataset".into(), serde_json::to_value(&data.manifest.seed).unwrap_or_default());
        }
        if let Some(p) = &path {
            model.save(p)?;
        }
        Ok((model, Some(report)))
    }
}
