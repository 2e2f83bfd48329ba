//! Central finite-difference checks for reverse-mode gradients.

/// Outcome of [`gradcheck`].
#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub coords: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub rel_errors: Vec<f64>,
    pub max_rel_error: f64,
}

/// `|a − b| / max(|a|, |b|, floor)`; the floor keeps exact zeros comparable.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / scale
}

pub fn central_difference(f: &impl Fn(&[f64]) -> f64, x: &[f64], coord: usize, step: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[coord] += step;
    let mut xm = x.to_vec();
    xm[coord] -= step;
    (f(&xp) - f(&xm)) / (2.0 * step)
}

/// Compare the gradient returned by `f` with central differences at `coords`.
/// The step is scaled by `max(1, |x_i|)`.
pub fn gradcheck(f: &impl Fn(&[f64]) -> (f64, Vec<f64>), x: &[f64], coords: &[usize], step: f64) -> GradcheckReport {
    let (_, grad) = f(x);
    let value_only = |p: &[f64]| f(p).0;
    let mut analytic = Vec::with_capacity(coords.len());
    let mut numeric = Vec::with_capacity(coords.len());
    let mut rel_errors = Vec::with_capacity(coords.len());
    for &c in coords {
        let h = step * x[c].abs().max(1.0);
        let fd = central_difference(&value_only, x, c, h);
        analytic.push(grad[c]);
        numeric.push(fd);
        rel_errors.push(relative_error(grad[c], fd));
    }
    let max_rel_error = rel_errors.iter().cloned().fold(0.0, f64::max);
    GradcheckReport {
        coords: coords.to_vec(),
        analytic,
        numeric,
        rel_errors,
        max_rel_error,
    }
}
