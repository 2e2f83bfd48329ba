use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::Field;

/// Error bound for the discretized Burgers problem:
///
/// `δ'' / (1/Δt + ν(π/L)² + min_{i,j} (x_{i+1,j} − x_{i−1,j})/(2h))`
///
/// with the minimum over the periodic `[space, time]` nodes with `j ≥ 1`.
pub fn burgers_error_bound(x_ref: &Field, delta: f64, nu: f64, h: f64, dt: f64, length: f64) -> Result<f64> {
    let (nx, nt) = match *x_ref.dims() {
        [nx, nt] if nx >= 3 && nt >= 2 => (nx, nt),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "error bound needs a [space, time] field with nx >= 3, nt >= 2; got {:?}",
                x_ref.dims()
            )))
        }
    };
    if delta < 0.0 {
        return Err(Error::InvalidArgument(format!("residual difference must be non-negative, got {delta}")));
    }
    let x = x_ref.values();
    let mut min_slope = f64::INFINITY;
    for i in 0..nx {
        let (ip, im) = ((i + 1) % nx, (i + nx - 1) % nx);
        for j in 1..nt {
            min_slope = min_slope.min((x[ip * nt + j] - x[im * nt + j]) / (2.0 * h));
        }
    }
    let denominator = 1.0 / dt + nu * (PI / length).powi(2) + min_slope;
    if !(denominator > 0.0) {
        return Err(Error::BoundInapplicable { denominator });
    }
    Ok(delta / denominator)
}
