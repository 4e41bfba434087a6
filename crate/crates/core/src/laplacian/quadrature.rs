/// Symmetric quadrature rule on the reference triangle `(0,0),(1,0),(0,1)`.
/// Points are barycentric `(l0, l1, l2)`; weights sum to one, so an integral
/// over a triangle of area `A` is `A * Σ w f(p)`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl TriangleRule {
    /// `∫ f` over the reference triangle, `f` given in `(ξ, η) = (l1, l2)`.
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        0.5 * self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[1], p[2]))
            .sum::<f64>()
    }
}

fn orbit3(a: f64, b: f64) -> [[f64; 3]; 3] {
    [[a, b, b], [b, a, b], [b, b, a]]
}

fn orbit6(a: f64, b: f64, c: f64) -> [[f64; 3]; 6] {
    [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
}

/// Dunavant's 12-point rule, exact up to degree 6.
pub static DUNAVANT_6: std::sync::LazyLock<TriangleRule> = std::sync::LazyLock::new(|| {
    let mut points = Vec::with_capacity(12);
    let mut weights = Vec::with_capacity(12);
    for (w, a, b) in [
        (0.116786275726379, 0.501426509658179, 0.249286745170910),
        (0.050844906370207, 0.873821971016996, 0.063089014491502),
    ] {
        points.extend(orbit3(a, b));
        weights.extend([w; 3]);
    }
    points.extend(orbit6(0.053145049844817, 0.310352451033784, 0.636502499121399));
    weights.extend([0.082851075618374; 6]);
    TriangleRule {
        points,
        weights,
        degree: 6,
    }
});
