use super::AppError;
use crate::geometry::PointCloud;
use crate::spectral_ae::{InputKind, ModelBundle};

fn check_pointcloud_model(bundle: &ModelBundle) -> Result<(), AppError> {
    if bundle.kind != InputKind::Pointcloud {
        return Err(AppError::WrongModelKind { expected: "point-cloud" });
    }
    Ok(())
}

fn flat(cloud: &PointCloud) -> Vec<f64> {
    cloud.points().iter().flatten().copied().collect()
}

/// `ρ(E(X))` for an unordered point set: the spectrum estimate of a shape
/// that has no mesh.
pub fn estimate_spectrum(bundle: &ModelBundle, cloud: &PointCloud) -> Result<Vec<f64>, AppError> {
    check_pointcloud_model(bundle)?;
    if cloud.is_empty() {
        return Err(AppError::InvalidArgument("empty point cloud".into()));
    }
    let z = bundle.encode(&flat(cloud))?;
    Ok(bundle.latent_to_spec(&z)?)
}

/// Baseline for [`estimate_spectrum`]: encode the query and return the
/// spectrum of the training cloud with the nearest latent code.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentIndex {
    latents: Vec<Vec<f64>>,
    spectra: Vec<Vec<f64>>,
}

impl LatentIndex {
    pub fn build(bundle: &ModelBundle, clouds: &[PointCloud], spectra: Vec<Vec<f64>>) -> Result<LatentIndex, AppError> {
        check_pointcloud_model(bundle)?;
        if clouds.is_empty() || clouds.len() != spectra.len() {
            return Err(AppError::InvalidArgument(format!(
                "{} clouds and {} spectra",
                clouds.len(),
                spectra.len()
            )));
        }
        let latents = clouds
            .iter()
            .map(|c| bundle.encode(&flat(c)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LatentIndex { latents, spectra })
    }

    /// Spectrum of the nearest indexed cloud in latent space; ties go to the
    /// lowest index.
    pub fn estimate(&self, bundle: &ModelBundle, cloud: &PointCloud) -> Result<(usize, &[f64]), AppError> {
        check_pointcloud_model(bundle)?;
        let z = bundle.encode(&flat(cloud))?;
        let mut best = (0, f64::INFINITY);
        for (i, l) in self.latents.iter().enumerate() {
            let d: f64 = l.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok((best.0, &self.spectra[best.0]))
    }
}
