//! Parametric shape families. Every sample of a family shares the template
//! connectivity (point `i` of one sample corresponds to point `i` of any
//! other), which is what the dense auto-encoder and the matching code rely on.
//!
//! Parameters split into *style* (intrinsic: axis lengths, radial bumps) and
//! *pose* (small smooth bends/twists that change edge lengths by at most a
//! few percent, plus a rigid motion).

use std::f64::consts::PI;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::icosphere;
use super::{Contour, GeometryError, Mesh, Shape, Vec3};

/// `[a, b, c2, ..., c7]`: ellipse semi-axes then radial cosine amplitudes.
pub const CONTOUR_STYLE_LEN: usize = 8;
/// `[bend, rotation, tx, ty]`.
pub const CONTOUR_POSE_LEN: usize = 4;
/// `[sx, sy, sz, a1, a2, a3, a4]`: per-axis scale then bump amplitudes.
pub const BLOB_STYLE_LEN: usize = 7;
/// `[twist, bend, rx, ry, rz, tx, ty, tz]`; `r*` is a rotation vector.
pub const BLOB_POSE_LEN: usize = 8;

const CONTOUR_STYLE_BOUNDS: [(f64, f64); CONTOUR_STYLE_LEN] = [
    (0.05, 20.0),
    (0.05, 20.0),
    (-0.15, 0.15),
    (-0.15, 0.15),
    (-0.15, 0.15),
    (-0.15, 0.15),
    (-0.15, 0.15),
    (-0.15, 0.15),
];
const CONTOUR_POSE_BOUNDS: [(f64, f64); CONTOUR_POSE_LEN] = [
    (-0.5, 0.5),
    (-2.0 * PI, 2.0 * PI),
    (-100.0, 100.0),
    (-100.0, 100.0),
];
const BLOB_STYLE_BOUNDS: [(f64, f64); BLOB_STYLE_LEN] = [
    (0.2, 5.0),
    (0.2, 5.0),
    (0.2, 5.0),
    (-0.3, 1.5),
    (-0.3, 1.5),
    (-0.3, 1.5),
    (-0.3, 1.5),
];
const BLOB_POSE_BOUNDS: [(f64, f64); BLOB_POSE_LEN] = [
    (-1.0, 1.0),
    (-0.5, 0.5),
    (-2.0 * PI, 2.0 * PI),
    (-2.0 * PI, 2.0 * PI),
    (-2.0 * PI, 2.0 * PI),
    (-100.0, 100.0),
    (-100.0, 100.0),
    (-100.0, 100.0),
];

const CONTOUR_STYLE_NEUTRAL: [f64; CONTOUR_STYLE_LEN] = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
const BLOB_STYLE_NEUTRAL: [f64; BLOB_STYLE_LEN] = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];

/// Bump centres and angular sharpness. No sign flip of the axes (the
/// symmetries of the scaled sphere) maps one centre near another, so two
/// different amplitude vectors never give congruent, hence isospectral,
/// shapes. Tetrahedral centres would: a half turn about an axis permutes them.
const BUMP_SHARPNESS: f64 = 4.0;
const BUMP_DIRECTIONS: [Vec3; 4] = [
    [0.9, 0.35, 0.25],
    [-0.3, 0.85, 0.4],
    [0.2, -0.45, 0.85],
    [-0.55, -0.6, -0.55],
];

fn complete<const N: usize>(
    name: &str,
    given: &[f64],
    neutral: [f64; N],
    bounds: &[(f64, f64); N],
) -> Result<[f64; N], GeometryError> {
    if given.len() > N {
        return Err(GeometryError::InvalidArgument(format!(
            "{name} vector has {} entries, at most {N} allowed",
            given.len()
        )));
    }
    let mut out = neutral;
    out[..given.len()].copy_from_slice(given);
    for (i, (&v, &(lo, hi))) in out.iter().zip(bounds.iter()).enumerate() {
        if !(v >= lo && v <= hi) {
            return Err(GeometryError::ParameterOutOfBounds {
                name: format!("{name}[{i}]"),
                value: v,
                lo,
                hi,
            });
        }
    }
    Ok(out)
}

/// Circular bend of the plane about the horizontal axis: the line `v = 0`
/// is mapped isometrically onto a circle of curvature `kappa`.
fn bend(u: f64, v: f64, kappa: f64) -> (f64, f64) {
    if kappa == 0.0 {
        return (u, v);
    }
    let r = 1.0 / kappa;
    let phi = u / r;
    ((r - v) * phi.sin(), r - (r - v) * phi.cos())
}

/// Sample a closed contour at `n` points. Missing trailing parameters take
/// their neutral value (unit circle, no pose).
pub fn generate_contour(style: &[f64], pose: &[f64], n: usize) -> Result<Contour, GeometryError> {
    if n < 3 {
        return Err(GeometryError::TooFewPoints { got: n, min: 3 });
    }
    let style = complete("style", style, CONTOUR_STYLE_NEUTRAL, &CONTOUR_STYLE_BOUNDS)?;
    let pose = complete("pose", pose, [0.0; CONTOUR_POSE_LEN], &CONTOUR_POSE_BOUNDS)?;
    let (a, b) = (style[0], style[1]);
    let (cos_r, sin_r) = (pose[1].cos(), pose[1].sin());
    let points = (0..n)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / n as f64;
            let radial = 1.0
                + style[2..]
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * ((j + 2) as f64 * theta).cos())
                    .sum::<f64>();
            let x = a * radial * theta.cos();
            let y = b * radial * theta.sin();
            let (x, y) = bend(x, y, pose[0]);
            [
                cos_r * x - sin_r * y + pose[2],
                sin_r * x + cos_r * y + pose[3],
            ]
        })
        .collect();
    Contour::new(points)
}

/// Deform the icosphere template at subdivision level `subdiv` (0..=4).
/// Missing trailing parameters take their neutral value.
pub fn generate_blob(style: &[f64], pose: &[f64], subdiv: usize) -> Result<Mesh, GeometryError> {
    if subdiv > 4 {
        return Err(GeometryError::ParameterOutOfBounds {
            name: "subdiv".into(),
            value: subdiv as f64,
            lo: 0.0,
            hi: 4.0,
        });
    }
    let style = complete("style", style, BLOB_STYLE_NEUTRAL, &BLOB_STYLE_BOUNDS)?;
    let pose = complete("pose", pose, [0.0; BLOB_POSE_LEN], &BLOB_POSE_BOUNDS)?;
    let template = icosphere(subdiv);
    let dirs: Vec<Vector3<f64>> = BUMP_DIRECTIONS
        .iter()
        .map(|d| Vector3::from(*d).normalize())
        .collect();
    let rotation = Rotation3::new(Vector3::new(pose[2], pose[3], pose[4]));
    let translation = Vector3::new(pose[5], pose[6], pose[7]);

    let deform = |x: &Vec3| -> Vec3 {
        let unit = Vector3::from(*x);
        let radial = 1.0
            + dirs
                .iter()
                .zip(&style[3..])
                .map(|(d, amp)| amp * (BUMP_SHARPNESS * (unit.dot(d) - 1.0)).exp())
                .sum::<f64>();
        let mut p = [
            style[0] * radial * x[0],
            style[1] * radial * x[1],
            style[2] * radial * x[2],
        ];
        // Twist about z, angle proportional to height.
        let ang = pose[0] * p[2];
        let (c, s) = (ang.cos(), ang.sin());
        p = [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];
        // Bend the z axis towards +x.
        let (z, xx) = bend(p[2], -p[0], pose[1]);
        p = [-xx, p[1], z];
        let q = rotation * Vector3::from(p) + translation;
        [q.x, q.y, q.z]
    };

    let mut vertices: Vec<Vec3> = template.vertices().iter().map(deform).collect();
    let faces = template.faces().to_vec();
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(0x6a17);
    let mut attempt = 0;
    loop {
        match Mesh::new(vertices.clone(), faces.clone()) {
            Ok(m) => return Ok(m),
            Err(GeometryError::DegenerateFace { .. }) if attempt < 3 => {
                attempt += 1;
                let scale = 1e-9 * 10f64.powi(attempt);
                for v in vertices.iter_mut() {
                    for x in v.iter_mut() {
                        *x += scale * (jitter_rng.random::<f64>() - 0.5);
                    }
                }
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Contour2d,
    Blob3d,
}

/// Uniform sampling intervals for style and pose draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRanges {
    pub style: Vec<(f64, f64)>,
    pub pose: Vec<(f64, f64)>,
}

impl DrawRanges {
    /// Default desk-scale ranges. Pose ranges keep edge-length changes
    /// under 3% for every style in the style range.
    pub fn default_for(kind: FamilyKind) -> Self {
        match kind {
            FamilyKind::Contour2d => DrawRanges {
                style: vec![
                    (0.7, 1.4),
                    (0.7, 1.4),
                    (-0.1, 0.1),
                    (-0.1, 0.1),
                    (-0.06, 0.06),
                    (-0.06, 0.06),
                    (0.0, 0.0),
                    (0.0, 0.0),
                ],
                pose: vec![(-0.015, 0.015), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)],
            },
            FamilyKind::Blob3d => DrawRanges {
                style: vec![
                    (0.75, 1.35),
                    (0.75, 1.35),
                    (0.75, 1.35),
                    (0.0, 0.45),
                    (0.0, 0.45),
                    (0.0, 0.45),
                    (0.0, 0.45),
                ],
                pose: vec![
                    (-0.02, 0.02),
                    (-0.005, 0.005),
                    (0.0, 0.0),
                    (0.0, 0.0),
                    (0.0, 0.0),
                    (0.0, 0.0),
                    (0.0, 0.0),
                    (0.0, 0.0),
                ],
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSample {
    pub id: usize,
    pub style: Vec<f64>,
    pub pose: Vec<f64>,
}

/// Everything needed to regenerate a dataset bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub kind: FamilyKind,
    /// Point count for contours, subdivision level for blobs.
    pub resolution: usize,
    pub seed: u64,
    pub ranges: DrawRanges,
    pub samples: Vec<ShapeSample>,
}

impl DatasetManifest {
    pub fn draw(
        kind: FamilyKind,
        resolution: usize,
        count: usize,
        seed: u64,
        ranges: DrawRanges,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |(lo, hi): (f64, f64)| {
            let u: f64 = rng.random();
            lo + (hi - lo) * u
        };
        let samples = (0..count)
            .map(|id| ShapeSample {
                id,
                style: ranges.style.iter().map(|&r| uniform(r)).collect(),
                pose: ranges.pose.iter().map(|&r| uniform(r)).collect(),
            })
            .collect();
        DatasetManifest {
            kind,
            resolution,
            seed,
            ranges,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn generate(&self, sample: &ShapeSample) -> Result<Shape, GeometryError> {
        generate(self.kind, &sample.style, &sample.pose, self.resolution)
    }

    pub fn realize(&self) -> Result<Vec<Shape>, GeometryError> {
        self.samples.iter().map(|s| self.generate(s)).collect()
    }
}

pub(crate) fn generate(
    kind: FamilyKind,
    style: &[f64],
    pose: &[f64],
    resolution: usize,
) -> Result<Shape, GeometryError> {
    Ok(match kind {
        FamilyKind::Contour2d => Shape::Contour(generate_contour(style, pose, resolution)?),
        FamilyKind::Blob3d => Shape::Mesh(generate_blob(style, pose, resolution)?),
    })
}
