use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Closed planar polyline; point `i` joins point `(i + 1) % n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Contour {
    points: Vec<[f64; 2]>,
}

impl TryFrom<Vec<[f64; 2]>> for Contour {
    type Error = GeometryError;
    fn try_from(points: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Contour::new(points)
    }
}

impl From<Contour> for Vec<[f64; 2]> {
    fn from(c: Contour) -> Self {
        c.points
    }
}

impl Contour {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self, GeometryError> {
        let n = points.len();
        if n < 3 {
            return Err(GeometryError::TooFewPoints { got: n, min: 3 });
        }
        if let Some(index) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(GeometryError::NonFinite { index });
        }
        for i in 0..n {
            let j = (i + 1) % n;
            if points[i] == points[j] {
                return Err(GeometryError::CoincidentPoints { a: i, b: j });
            }
        }
        Ok(Contour { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Length of edge `i` (from point `i` to point `i + 1`).
    pub fn edge_lengths(&self) -> Vec<f64> {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (p, q) = (self.points[i], self.points[(i + 1) % n]);
                (q[0] - p[0]).hypot(q[1] - p[1])
            })
            .collect()
    }

    pub fn perimeter(&self) -> f64 {
        self.edge_lengths().iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Result<Contour, GeometryError> {
        Contour::new(self.points.iter().map(|p| [p[0] * c, p[1] * c]).collect())
    }

    pub fn with_points(&self, points: Vec<[f64; 2]>) -> Result<Contour, GeometryError> {
        if points.len() != self.points.len() {
            return Err(GeometryError::InvalidArgument(format!(
                "expected {} points, got {}",
                self.points.len(),
                points.len()
            )));
        }
        Contour::new(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_and_repeated() {
        assert!(matches!(
            Contour::new(vec![[0.0, 0.0], [1.0, 0.0]]),
            Err(GeometryError::TooFewPoints { got: 2, min: 3 })
        ));
        assert_eq!(
            Contour::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]),
            Err(GeometryError::CoincidentPoints { a: 2, b: 0 })
        );
    }

    #[test]
    fn square_perimeter() {
        let c = Contour::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(c.perimeter(), 4.0);
    }
}
