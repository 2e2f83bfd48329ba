//! Darcy flow `−∇·(a∇u) = f` on the unit square with `u = 0` on the boundary.

use serde::{Deserialize, Serialize};

use super::grf::grf_2d;
use crate::error::{Error, Result};
use crate::field::{AxisTag, Field};
use crate::residual::darcy_apply;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarcySpec {
    /// Nodes per side including the boundary; `h = 1/(n − 1)`.
    pub n: usize,
    pub forcing: f64,
    pub a_low: f64,
    pub a_high: f64,
    /// Spectral exponent and shift of the permeability GRF, `(|k|² + τ²)^(−α)`.
    pub grf_alpha: f64,
    pub grf_tau: f64,
    pub cg_tol: f64,
    pub max_iter: usize,
}

impl DarcySpec {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            forcing: 1.0,
            a_low: 3.0,
            a_high: 12.0,
            grf_alpha: 2.0,
            grf_tau: 3.0,
            cg_tol: 1e-10,
            max_iter: 20_000,
        }
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 5 {
            return Err(Error::InvalidArgument(format!("Darcy grid needs n >= 5, got {}", self.n)));
        }
        if !(self.a_low > 0.0 && self.a_high > 0.0) {
            return Err(Error::InvalidArgument("Darcy permeability values must be positive".into()));
        }
        Ok(())
    }
}

/// Two-valued permeability from a smooth GRF thresholded at its median.
pub fn sample_darcy_permeability(rng: &mut RngStream, spec: &DarcySpec) -> Result<Field> {
    spec.validate()?;
    let n = spec.n;
    let g = grf_2d(rng, n, n, spec.grf_alpha, spec.grf_tau);
    let mut sorted = g.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 0 {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    } else {
        sorted[m / 2]
    };
    let a = g.iter().map(|&v| if v > median { spec.a_high } else { spec.a_low }).collect();
    Field::new(vec![n, n], a).map(|f| f.with_tags(&[AxisTag::Row, AxisTag::Col]))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients on the interior unknowns.
pub fn solve_darcy(a: &Field, spec: &DarcySpec) -> Result<Field> {
    spec.validate()?;
    let n = spec.n;
    if a.dims() != [n, n] {
        return Err(Error::ShapeMismatch {
            expected: vec![n, n],
            got: a.dims().to_vec(),
        });
    }
    if let Some(k) = a.values().iter().position(|&v| v <= 0.0) {
        return Err(Error::InvalidArgument(format!("permeability must be positive (index {k})")));
    }
    let h = spec.h();
    let av = a.values();
    let interior = |k: usize| {
        let (i, j) = (k / n, k % n);
        i > 0 && j > 0 && i + 1 < n && j + 1 < n
    };
    let b: Vec<f64> = (0..n * n).map(|k| if interior(k) { spec.forcing } else { 0.0 }).collect();
    let b_norm = dot(&b, &b).sqrt();
    let tags = [AxisTag::Row, AxisTag::Col];
    if b_norm == 0.0 {
        return Field::zeros(vec![n, n]).map(|f| f.with_tags(&tags));
    }
    // Diagonal of the stencil: sum of the four harmonic-mean face coefficients.
    let hm = |x: f64, y: f64| 2.0 * x * y / (x + y);
    let diag: Vec<f64> = (0..n * n)
        .map(|k| {
            if !interior(k) {
                return 1.0;
            }
            (hm(av[k], av[k + 1]) + hm(av[k], av[k - 1]) + hm(av[k], av[k + n]) + hm(av[k], av[k - n])) / (h * h)
        })
        .collect();
    let apply = |u: &[f64]| darcy_apply(u, av, n, h);
    let mut u = vec![0.0; n * n];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(x, d)| x / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..spec.max_iter {
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n * n {
            u[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if dot(&r, &r).sqrt() <= spec.cg_tol * b_norm {
            // Confirm on the true residual to guard against drift.
            let au = apply(&u);
            let true_res = au.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            if true_res <= spec.cg_tol * b_norm {
                return Field::new(vec![n, n], u).map(|f| f.with_tags(&tags));
            }
            r = b.iter().zip(&au).map(|(x, y)| x - y).collect();
        }
        z = r.iter().zip(&diag).map(|(x, d)| x / d).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n * n {
            p[k] = z[k] + beta * p[k];
        }
        if !rz.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it + 1,
                residual: f64::NAN,
            });
        }
    }
    let au = apply(&u);
    let res = au.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() / b_norm;
    Err(Error::NoConvergence {
        iterations: spec.max_iter,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residual::{residual_darcy, residual_norm};

    #[test]
    fn two_valued_median_split() {
        let spec = DarcySpec::new(32);
        let mut rng = RngStream::new(1, 0);
        let a = sample_darcy_permeability(&mut rng, &spec).unwrap();
        assert!(a.values().iter().all(|&v| v == 3.0 || v == 12.0));
        let frac = a.values().iter().filter(|&&v| v == 12.0).count() as f64 / 1024.0;
        assert!((frac - 0.5).abs() < 0.05);
        let b = sample_darcy_permeability(&mut RngStream::new(1, 0), &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn poisson_center_value() {
        let spec = DarcySpec::new(65);
        let a = Field::filled(vec![65, 65], 1.0).unwrap();
        let u = solve_darcy(&a, &spec).unwrap();
        assert!((u.get(&[32, 32]) - 0.0737).abs() < 1e-3);
    }

    #[test]
    fn solver_meets_residual_tolerance_and_max_principle() {
        let spec = DarcySpec::new(24);
        let a = sample_darcy_permeability(&mut RngStream::new(2, 0), &spec).unwrap();
        let u = solve_darcy(&a, &spec).unwrap();
        let r = residual_darcy(&u, &a, 1.0, spec.h()).unwrap();
        assert!(residual_norm(&r) <= 1e-8);
        assert!(u.values().iter().all(|&v| v >= 0.0));
        for k in 0..24 {
            assert_eq!(u.get(&[0, k]), 0.0);
            assert_eq!(u.get(&[k, 23]), 0.0);
        }
    }

    #[test]
    fn linear_in_inverse_permeability_and_forcing() {
        let mut spec = DarcySpec::new(16);
        let a1 = Field::filled(vec![16, 16], 1.0).unwrap();
        let a2 = Field::filled(vec![16, 16], 2.0).unwrap();
        let u1 = solve_darcy(&a1, &spec).unwrap();
        let u2 = solve_darcy(&a2, &spec).unwrap();
        for (x, y) in u1.values().iter().zip(u2.values()) {
            assert!((0.5 * x - y).abs() < 1e-10);
        }
        spec.forcing = 0.0;
        assert_eq!(solve_darcy(&a1, &spec).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn non_positive_permeability_rejected() {
        let spec = DarcySpec::new(8);
        let a = Field::filled(vec![8, 8], 0.0).unwrap();
        assert!(solve_darcy(&a, &spec).is_err());
    }
}
