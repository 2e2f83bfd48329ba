use super::{ResidualField, ResidualOperator};
use crate::error::{Error, Result};
use crate::field::Field;

/// Backward-Euler-in-time, central-in-space Burgers stencil on a periodic
/// `[nx, nt]` space–time grid:
///
/// `R_{i,j} = (x_{i,j} − x_{i,j−1})/Δt + x_{i,j}(x_{i+1,j} − x_{i−1,j})/(2h) − ν(x_{i+1,j} − 2x_{i,j} + x_{i−1,j})/h²`
///
/// defined for `j ≥ 1`.
#[derive(Clone, Debug)]
pub struct BurgersStencil {
    dims: [usize; 2],
    nu: f64,
    h: f64,
    dt: f64,
    advection: bool,
    valid: Vec<bool>,
}

impl BurgersStencil {
    pub fn new(nx: usize, nt: usize, nu: f64, h: f64, dt: f64) -> Result<Self> {
        if nx < 3 || nt < 2 {
            return Err(Error::InvalidArgument(format!(
                "Burgers residual needs nx >= 3 and nt >= 2, got {nx}x{nt}"
            )));
        }
        if !(h > 0.0 && dt > 0.0 && nu >= 0.0) {
            return Err(Error::InvalidArgument("Burgers residual needs h, dt > 0 and nu >= 0".into()));
        }
        let valid = (0..nx * nt).map(|k| k % nt >= 1).collect();
        Ok(Self {
            dims: [nx, nt],
            nu,
            h,
            dt,
            advection: true,
            valid,
        })
    }

    /// Unit interval in space and time: `h = 1/nx`, `Δt = 1/(nt − 1)`.
    pub fn unit(nx: usize, nt: usize, nu: f64) -> Result<Self> {
        Self::new(nx, nt, nu, 1.0 / nx as f64, 1.0 / (nt.max(2) - 1) as f64)
    }

    /// Drop the quadratic term, leaving the linear heat-equation stencil.
    pub fn without_advection(mut self) -> Self {
        self.advection = false;
        self
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

impl ResidualOperator for BurgersStencil {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn valid(&self) -> &[bool] {
        &self.valid
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let [nx, nt] = self.dims;
        let at = |i: usize, j: usize| x[i * nt + j];
        let (inv_dt, inv_2h, diff) = (1.0 / self.dt, 0.5 / self.h, self.nu / (self.h * self.h));
        let mut r = vec![0.0; nx * nt];
        for i in 0..nx {
            let (ip, im) = ((i + 1) % nx, (i + nx - 1) % nx);
            for j in 1..nt {
                let c = at(i, j);
                let (e, w) = (at(ip, j), at(im, j));
                let mut v = (c - at(i, j - 1)) * inv_dt - diff * (e - 2.0 * c + w);
                if self.advection {
                    v += c * (e - w) * inv_2h;
                }
                r[i * nt + j] = v;
            }
        }
        r
    }

    fn vjp(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let [nx, nt] = self.dims;
        let (inv_dt, inv_2h, diff) = (1.0 / self.dt, 0.5 / self.h, self.nu / (self.h * self.h));
        let mut out = vec![0.0; nx * nt];
        for i in 0..nx {
            let (ip, im) = ((i + 1) % nx, (i + nx - 1) % nx);
            for j in 1..nt {
                let gij = g[i * nt + j];
                if gij == 0.0 {
                    continue;
                }
                let c = x[i * nt + j];
                out[i * nt + j] += gij * (inv_dt + 2.0 * diff);
                out[i * nt + j - 1] -= gij * inv_dt;
                out[ip * nt + j] -= gij * diff;
                out[im * nt + j] -= gij * diff;
                if self.advection {
                    let (e, w) = (x[ip * nt + j], x[im * nt + j]);
                    out[i * nt + j] += gij * (e - w) * inv_2h;
                    out[ip * nt + j] += gij * c * inv_2h;
                    out[im * nt + j] -= gij * c * inv_2h;
                }
            }
        }
        out
    }
}

/// Burgers residual of a `[space, time]` field.
pub fn residual_burgers(x: &Field, nu: f64, h: f64, dt: f64) -> Result<ResidualField> {
    if x.rank() != 2 {
        return Err(Error::InvalidArgument(format!(
            "Burgers residual expects a [space, time] field, got dims {:?}",
            x.dims()
        )));
    }
    BurgersStencil::new(x.dims()[0], x.dims()[1], nu, h, dt)?.residual(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;
    use crate::residual::residual_norm;

    #[test]
    fn constant_field_has_zero_residual() {
        let x = Field::filled(vec![8, 5], 1.7).unwrap();
        let r = residual_burgers(&x, 0.01, 0.125, 0.25).unwrap();
        assert_eq!(r.max_abs(), 0.0);
    }

    #[test]
    fn hand_stencil_value() {
        // columns: t0 = [0,0,0], t1 = [0,1,0]
        let x = Field::new(vec![3, 2], vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let nu = 0.01;
        let r = residual_burgers(&x, nu, 1.0, 1.0).unwrap();
        assert!((r.values.get(&[1, 1]) - (1.0 + 2.0 * nu)).abs() < 1e-15);
        assert!(!r.valid[0] && r.valid[1]);
        assert_eq!(r.valid_count(), 3);
    }

    #[test]
    fn rejects_tiny_grid() {
        let x = Field::zeros(vec![2, 4]).unwrap();
        assert!(residual_burgers(&x, 0.01, 0.5, 0.1).is_err());
    }

    #[test]
    fn linear_part_is_linear() {
        let op = BurgersStencil::unit(6, 4, 0.05).unwrap().without_advection();
        let x: Vec<f64> = (0..24).map(|k| (k as f64 * 0.37).sin()).collect();
        let base = op.apply(&x);
        let mut e = vec![0.0; 24];
        e[9] = 1.0;
        let d1: Vec<f64> = {
            let xp: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + 1e-3 * b).collect();
            op.apply(&xp).iter().zip(&base).map(|(a, b)| a - b).collect()
        };
        let d2: Vec<f64> = {
            let xp: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + 2e-3 * b).collect();
            op.apply(&xp).iter().zip(&base).map(|(a, b)| a - b).collect()
        };
        for (a, b) in d1.iter().zip(&d2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let op = BurgersStencil::unit(7, 5, 0.02).unwrap();
        let x0: Vec<f64> = (0..35).map(|k| (k as f64 * 0.61).cos()).collect();
        let f = |x: &[f64]| {
            let r = op.apply(x);
            let n = op.valid().iter().filter(|&&v| v).count() as f64;
            let loss = r.iter().map(|v| v * v).sum::<f64>() / n;
            let g: Vec<f64> = r.iter().map(|v| 2.0 * v / n).collect();
            (loss, op.vjp(x, &g))
        };
        let rep = gradcheck(&f, &x0, &(0..35).collect::<Vec<_>>(), 1e-6);
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
        let rf = op.residual(&Field::new(vec![7, 5], x0).unwrap()).unwrap();
        assert!(residual_norm(&rf) > 0.0);
    }
}
