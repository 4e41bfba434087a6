use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentError, FamilyData};
use crate::eigensolve::FemOrder;
use crate::geometry::io::{load_shape, save_shape};
use crate::geometry::{DatasetManifest, FamilyKind};

/// Index file of a dataset directory; shapes live next to it in `shapes/`.
pub const DATASET_FILE: &str = "dataset.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetIndex {
    manifest: DatasetManifest,
    n_train: usize,
    order: FemOrder,
    /// Empty when the spectra were not computed.
    spectra: Vec<Vec<f64>>,
}

fn shape_path(dir: &Path, id: usize, kind: FamilyKind) -> PathBuf {
    let ext = match kind {
        FamilyKind::Contour2d => "json",
        FamilyKind::Blob3d => "off",
    };
    dir.join("shapes").join(format!("{id:05}.{ext}"))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Store(format!("{}: {e}", path.display()))
}

impl FamilyData {
    /// Write `dataset.json` and one file per shape under `dir/shapes`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), ExperimentError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("shapes")).map_err(|e| io_err(dir, e))?;
        for (sample, shape) in self.manifest.samples.iter().zip(&self.shapes) {
            save_shape(shape, shape_path(dir, sample.id, self.manifest.kind))?;
        }
        let index = DatasetIndex {
            manifest: self.manifest.clone(),
            n_train: self.n_train,
            order: self.order,
            spectra: self.spectra.clone(),
        };
        let path = dir.join(DATASET_FILE);
        let text = serde_json::to_string(&index).map_err(|e| io_err(&path, e))?;
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    /// Read a directory written by [`FamilyData::save`]. Shapes come from
    /// the files, so hand-edited shapes are honoured.
    pub fn load(dir: impl AsRef<Path>) -> Result<FamilyData, ExperimentError> {
        let dir = dir.as_ref();
        let path = dir.join(DATASET_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let index: DatasetIndex = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
        let count = index.manifest.len();
        if index.n_train > count {
            return Err(ExperimentError::Invalid(format!("{} training shapes out of {count}", index.n_train)));
        }
        if !index.spectra.is_empty() && index.spectra.len() != count {
            return Err(ExperimentError::Invalid(format!(
                "{} spectra for {count} shapes",
                index.spectra.len()
            )));
        }
        let shapes = index
            .manifest
            .samples
            .iter()
            .map(|s| Ok(load_shape(shape_path(dir, s.id, index.manifest.kind))?))
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        Ok(FamilyData {
            manifest: index.manifest,
            shapes,
            spectra: index.spectra,
            n_train: index.n_train,
            order: index.order,
        })
    }
}
