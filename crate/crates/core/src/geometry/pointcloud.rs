use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec3};

/// Unordered 3D point set without connectivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec3>", into = "Vec<Vec3>")]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl TryFrom<Vec<Vec3>> for PointCloud {
    type Error = GeometryError;
    fn try_from(points: Vec<Vec3>) -> Result<Self, Self::Error> {
        PointCloud::new(points)
    }
}

impl From<PointCloud> for Vec<Vec3> {
    fn from(p: PointCloud) -> Self {
        p.points
    }
}

impl PointCloud {
    pub const MIN_POINTS: usize = 4;

    pub fn new(points: Vec<Vec3>) -> Result<Self, GeometryError> {
        if points.len() < Self::MIN_POINTS {
            return Err(GeometryError::TooFewPoints {
                got: points.len(),
                min: Self::MIN_POINTS,
            });
        }
        if let Some(index) = points.iter().position(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(GeometryError::NonFinite { index });
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
