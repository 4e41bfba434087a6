use super::{shape_from_spectrum, AppError, Reconstruction};
use crate::spectral_ae::ModelBundle;

/// Decode a `g×g` grid of bilinear blends of the latents `π(λ)` of four
/// corner spectra. `corners` are `[c00, c10, c01, c11]`; cell `(i, j)` sits
/// at `(i/(g−1), j/(g−1))`. Returned row-major over `i`.
pub fn interpolate_latent(
    bundle: &ModelBundle,
    corners: [&[f64]; 4],
    g: usize,
) -> Result<Vec<Vec<Reconstruction>>, AppError> {
    if g < 2 {
        return Err(AppError::InvalidArgument(format!("grid size must be at least 2, got {g}")));
    }
    let latents = corners
        .iter()
        .map(|c| bundle.spec_to_latent(c))
        .collect::<Result<Vec<_>, _>>()?;
    let mut grid = Vec::with_capacity(g);
    for i in 0..g {
        let s = i as f64 / (g - 1) as f64;
        let mut row = Vec::with_capacity(g);
        for j in 0..g {
            let t = j as f64 / (g - 1) as f64;
            let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t];
            // Exact corners reuse the corner code so they match shape_from_spectrum bit for bit.
            let v: Vec<f64> = match w.iter().position(|&x| x == 1.0) {
                Some(c) => latents[c].clone(),
                None => (0..bundle.latent_dim)
                    .map(|d| w.iter().zip(&latents).map(|(wc, l)| wc * l[d]).sum())
                    .collect(),
            };
            let start = std::time::Instant::now();
            let coords = bundle.decode(&v)?;
            row.push(Reconstruction {
                shape: bundle.template.shape_from(&coords)?,
                elapsed: start.elapsed(),
                latent: v,
            });
        }
        grid.push(row);
    }
    Ok(grid)
}

/// Decode the linear blend `(1−t)·a + t·b` of two spectra.
pub fn interpolate_spectra(bundle: &ModelBundle, a: &[f64], b: &[f64], t: f64) -> Result<Reconstruction, AppError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(AppError::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    if a.len() != b.len() {
        return Err(AppError::InvalidArgument(format!("spectra of length {} and {}", a.len(), b.len())));
    }
    let blend: Vec<f64> = a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect();
    shape_from_spectrum(bundle, &blend)
}

/// Scale eigenvalues `lo..=hi` by `factor`, then restore a valid spectrum:
/// negatives clamped, values re-sorted, `λ₀` pinned to zero.
pub fn band_modify(spectrum: &[f64], lo: usize, hi: usize, factor: f64) -> Result<Vec<f64>, AppError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(AppError::InvalidArgument(format!("factor must be positive, got {factor}")));
    }
    if lo > hi || hi >= spectrum.len() {
        return Err(AppError::InvalidArgument(format!(
            "band {lo}..={hi} does not fit a spectrum of {} values",
            spectrum.len()
        )));
    }
    let mut out = spectrum.to_vec();
    out[lo..=hi].iter_mut().for_each(|v| *v *= factor);
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    out.sort_by(f64::total_cmp);
    out[0] = 0.0;
    Ok(out)
}
