use super::{residual_norm, ResidualOperator};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::observation::{project, ObservationSet};

/// Outcome of [`estimate_residual_floor`].
#[derive(Clone, Debug)]
pub struct ResidualFloorEstimate {
    /// Residual RMS at the best iterate.
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration diverged (norm grew 10× over the start).
    pub converged: bool,
    /// Best-so-far residual RMS every 10 iterations.
    pub checkpoints: Vec<f64>,
    pub best: Field,
}

fn mean_square_grad(op: &dyn ResidualOperator, x: &[f64]) -> (f64, Vec<f64>) {
    let r = op.apply(x);
    let valid = op.valid();
    let n = valid.iter().filter(|&&v| v).count().max(1) as f64;
    let mut g = vec![0.0; r.len()];
    let mut ms = 0.0;
    for k in 0..r.len() {
        if valid[k] {
            ms += r[k] * r[k] / n;
            g[k] = 2.0 * r[k] / n;
        }
    }
    (ms, op.vjp(x, &g))
}

/// Step size `1/L` for gradient descent on the mean-square residual, with `L`
/// a power-iteration estimate of its Gauss–Newton curvature over the free
/// coordinates. Central differences give `J v` exactly for stencils of degree ≤ 2.
pub fn suggest_floor_step(op: &dyn ResidualOperator, x: &Field, obs: &ObservationSet) -> f64 {
    let x = x.values();
    let free: Vec<f64> = obs.mask().values().iter().map(|&m| 1.0 - m).collect();
    let n = op.valid().iter().filter(|&&v| v).count().max(1) as f64;
    let mut v: Vec<f64> = free.iter().enumerate().map(|(k, f)| f * (1.0 + (k as f64 * 0.7).sin())).collect();
    let mut lambda = 0.0;
    for _ in 0..30 {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        let eps = 1e-4;
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
        let (rp, rm) = (op.apply(&xp), op.apply(&xm));
        let jv: Vec<f64> = rp
            .iter()
            .zip(&rm)
            .zip(op.valid())
            .map(|((a, b), &ok)| if ok { (a - b) / (2.0 * eps) } else { 0.0 })
            .collect();
        let jtjv = op.vjp(x, &jv);
        v = jtjv.iter().zip(&free).map(|(a, f)| a * f).collect();
        lambda = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    }
    if lambda > 0.0 {
        n / (2.0 * lambda)
    } else {
        1.0
    }
}

/// Projected gradient descent on `‖R_h(x)‖²` over `{x : H(x) = y}`.
pub fn estimate_residual_floor(
    obs: &ObservationSet,
    op: &dyn ResidualOperator,
    init: &Field,
    iters: usize,
    step: f64,
) -> Result<ResidualFloorEstimate> {
    if iters == 0 {
        return Err(Error::InvalidArgument("residual floor needs at least one iteration".into()));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    init.ensure_same_dims(obs.mask())?;
    let mut x = project(init, obs)?;
    let start = op.norm(&x)?;
    let mut best = x.clone();
    let mut best_value = start;
    let mut checkpoints = vec![start];
    if obs.observed_count() == x.len() {
        return Ok(ResidualFloorEstimate {
            value: start,
            iterations: 0,
            converged: true,
            checkpoints,
            best,
        });
    }
    let mut converged = true;
    let mut done = 0;
    for it in 1..=iters {
        let (_, grad) = mean_square_grad(op, x.values());
        let next: Vec<f64> = x.values().iter().zip(&grad).map(|(a, g)| a - step * g).collect();
        if next.iter().any(|v| !v.is_finite()) {
            converged = false;
            break;
        }
        x = project(&x.with_values(next)?, obs)?;
        done = it;
        let value = residual_norm(&op.residual(&x)?);
        if value < best_value {
            best_value = value;
            best = x.clone();
        }
        if it % 10 == 0 {
            checkpoints.push(best_value);
        }
        if value > 10.0 * start.max(f64::MIN_POSITIVE) {
            converged = false;
            break;
        }
    }
    Ok(ResidualFloorEstimate {
        value: best_value,
        iterations: done,
        converged,
        checkpoints,
        best,
    })
}
