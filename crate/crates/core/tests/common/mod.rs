#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use specshape::geometry::Mesh;
use specshape::laplacian::LaplacianPair;

/// Generalized eigenvalues of a small pencil via dense Cholesky reduction:
/// `M = L Lᵀ`, eigenvalues of `L⁻¹ S L⁻ᵀ`.
pub fn dense_generalized_eigenvalues(pair: &LaplacianPair) -> Vec<f64> {
    let n = pair.dim();
    let s = DMatrix::from_row_slice(n, n, &pair.stiffness.to_dense());
    let m = DMatrix::from_row_slice(n, n, &pair.mass.to_dense());
    let l = m.cholesky().expect("mass matrix is SPD").l();
    let linv = l.clone().try_inverse().unwrap();
    let c = &linv * s * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Unit square `[0,1]²` split into `m×m` cells, two triangles each.
pub fn square_grid(m: usize) -> Mesh {
    let h = 1.0 / m as f64;
    let mut v = Vec::new();
    for j in 0..=m {
        for i in 0..=m {
            v.push([i as f64 * h, j as f64 * h, 0.0]);
        }
    }
    let id = |i: usize, j: usize| j * (m + 1) + i;
    let mut f = Vec::new();
    for j in 0..m {
        for i in 0..m {
            f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Mesh::new(v, f).unwrap()
}

/// Analytic sphere spectrum `l(l+1)` with multiplicity `2l+1`.
pub fn sphere_spectrum(k: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut l = 0usize;
    while out.len() < k {
        for _ in 0..(2 * l + 1) {
            out.push((l * (l + 1)) as f64);
        }
        l += 1;
    }
    out.truncate(k);
    out
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        (got - want).abs() / want.abs()
    }
}

/// Apply a rotation (axis-angle) and translation.
pub fn rigid(p: [f64; 3], axis: [f64; 3], angle: f64, t: [f64; 3]) -> [f64; 3] {
    let r = nalgebra::Rotation3::from_axis_angle(
        &nalgebra::Unit::new_normalize(nalgebra::Vector3::from(axis)),
        angle,
    );
    let q = r * nalgebra::Vector3::from(p);
    [q.x + t[0], q.y + t[1], q.z + t[2]]
}

/// Relative gradient error; `floor` keeps near-zero components from
/// dominating.
pub fn grad_rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Worst relative error between `analytic` gradient groups and central
/// differences with step `h` of `eval(group, index, offset)` at `probes`
/// random entries. Near-zero components are measured against 1e-3 of the
/// largest gradient entry. Probes whose stencil straddles a kink (max-pool
/// switch, SELU branch) are detected by the second differences failing to
/// scale with the step, and redrawn. `fourth_order` uses the five-point
/// stencil, needed where batch statistics add strong curvature.
pub fn fd_gradient_error(
    analytic: &[Vec<f64>],
    eval: impl Fn(usize, usize, f64) -> f64,
    probes: usize,
    seed: u64,
    h: f64,
    fourth_order: bool,
) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let scale = analytic.iter().flatten().fold(0.0f64, |a, g| a.max(g.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    let groups: Vec<usize> = (0..analytic.len()).filter(|&g| !analytic[g].is_empty()).collect();
    let mut worst = 0.0f64;
    let mut done = 0;
    let mut attempts = 0;
    while done < probes {
        attempts += 1;
        assert!(attempts < 10 * probes, "too many probes straddle kinks");
        let g = groups[rng.random_range(0..groups.len())];
        let i = rng.random_range(0..analytic[g].len());
        let f = |d: f64| eval(g, i, d);
        let (up, down, mid) = (f(h), f(-h), f(0.0));
        let d1 = (up - 2.0 * mid + down) / h;
        let q = h / 4.0;
        let d2 = (f(q) - 2.0 * mid + f(-q)) / q;
        let noise = 1e-9 * mid.abs().max(1.0) / h;
        if (d1 - 4.0 * d2).abs() > 0.25 * d1.abs() + noise {
            continue;
        }
        let numeric = if fourth_order {
            let (up2, down2) = (f(2.0 * h), f(-2.0 * h));
            let d0 = (up2 - 2.0 * mid + down2) / (2.0 * h);
            if (d0 - 2.0 * d1).abs() > 0.25 * d0.abs() + noise {
                continue;
            }
            (8.0 * (up - down) - (up2 - down2)) / (12.0 * h)
        } else {
            (up - down) / (2.0 * h)
        };
        worst = worst.max(grad_rel_err(analytic[g][i], numeric, floor));
        done += 1;
    }
    worst
}

/// [`fd_gradient_error`] for `Σ r ⊙ net(x)` with random `r`, probing the
/// parameter groups and the input (the input as one extra group).
pub fn net_gradient_error(
    net: &specshape::neural::Net<f64>,
    x: &specshape::neural::Tensor<f64>,
    mode: specshape::neural::Mode,
    probes: usize,
    seed: u64,
    fourth_order: bool,
) -> f64 {
    use rand::{Rng, SeedableRng};
    use specshape::neural::Tensor;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let (y, tape) = net.forward(x, mode).unwrap();
    let r: Vec<f64> = (0..y.data().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dout = Tensor::new(y.shape().to_vec(), r.clone()).unwrap();
    let (dx, mut grads) = net.backward(&tape, &dout).unwrap();
    let groups = grads.len();
    grads.push(dx.data().to_vec());
    let objective = |n: &specshape::neural::Net<f64>, x: &Tensor<f64>| -> f64 {
        let y = n.forward(x, mode).unwrap().0;
        y.data().iter().zip(&r).map(|(a, b)| a * b).sum()
    };
    let eval = |g: usize, i: usize, d: f64| {
        if g < groups {
            let mut p = net.clone();
            p.params_mut()[g][i] += d;
            objective(&p, x)
        } else {
            let mut xp = x.clone();
            xp.data_mut()[i] += d;
            objective(net, &xp)
        }
    };
    fd_gradient_error(&grads, eval, probes, seed, 1e-3, fourth_order)
}

pub fn random_tensor(shape: Vec<usize>, seed: u64) -> specshape::neural::Tensor<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let len = shape.iter().product();
    specshape::neural::Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}
