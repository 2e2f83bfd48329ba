use super::{ResidualField, ResidualOperator};
use crate::error::{Error, Result};
use crate::field::Field;

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Face coefficients of the 5-point harmonic-mean flux stencil.
#[derive(Clone, Debug)]
struct Faces {
    /// `a_{i+1/2, j}` for rows `0..n-1`.
    south: Vec<f64>,
    /// `a_{i, j+1/2}` for columns `0..n-1`.
    east: Vec<f64>,
}

impl Faces {
    fn new(a: &[f64], n: usize) -> Self {
        let mut south = vec![0.0; n * n];
        let mut east = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                if i + 1 < n {
                    south[k] = harmonic(a[k], a[k + n]);
                }
                if j + 1 < n {
                    east[k] = harmonic(a[k], a[k + 1]);
                }
            }
        }
        Self { south, east }
    }

    fn apply(&self, u: &[f64], n: usize, inv_h2: f64, out: &mut [f64]) {
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let k = i * n + j;
                let flux = self.south[k] * (u[k + n] - u[k]) - self.south[k - n] * (u[k] - u[k - n])
                    + self.east[k] * (u[k + 1] - u[k])
                    - self.east[k - 1] * (u[k] - u[k - 1]);
                out[k] = -flux * inv_h2;
            }
        }
    }

    fn adjoint(&self, g: &[f64], n: usize, inv_h2: f64, out: &mut [f64]) {
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let k = i * n + j;
                let gk = g[k] * inv_h2;
                if gk == 0.0 {
                    continue;
                }
                let (s, nn, e, w) = (self.south[k], self.south[k - n], self.east[k], self.east[k - 1]);
                out[k] += gk * (s + nn + e + w);
                out[k + n] -= gk * s;
                out[k - n] -= gk * nn;
                out[k + 1] -= gk * e;
                out[k - 1] -= gk * w;
            }
        }
    }
}

/// `−∇·(a∇u)` on the interior of an `n × n` node grid (boundary entries 0).
pub fn darcy_apply(u: &[f64], a: &[f64], n: usize, h: f64) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    Faces::new(a, n).apply(u, n, 1.0 / (h * h), &mut out);
    out
}

/// `−∇·(a∇u) − f` with a fixed permeability.
///
/// With `boundary_rows` enabled the operator also returns `a·u/h²` on the
/// boundary nodes, so Dirichlet data enters the residual norm.
#[derive(Clone, Debug)]
pub struct DarcyStencil {
    dims: [usize; 2],
    a: Vec<f64>,
    faces: Faces,
    forcing: f64,
    h: f64,
    boundary_rows: bool,
    valid: Vec<bool>,
}

impl DarcyStencil {
    pub fn new(a: &Field, forcing: f64, h: f64) -> Result<Self> {
        if a.rank() != 2 || a.dims()[0] != a.dims()[1] {
            return Err(Error::InvalidArgument(format!(
                "Darcy permeability must be square, got dims {:?}",
                a.dims()
            )));
        }
        let n = a.dims()[0];
        if n < 3 {
            return Err(Error::InvalidArgument(format!("Darcy grid too small: n = {n}")));
        }
        if let Some(k) = a.values().iter().position(|&v| v <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "permeability must be positive (index {k} is {})",
                a.values()[k]
            )));
        }
        let valid = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                i > 0 && j > 0 && i + 1 < n && j + 1 < n
            })
            .collect();
        Ok(Self {
            dims: [n, n],
            a: a.values().to_vec(),
            faces: Faces::new(a.values(), n),
            forcing,
            h,
            boundary_rows: false,
            valid,
        })
    }

    /// Unit square with `h = 1/(n − 1)`.
    pub fn unit(a: &Field, forcing: f64) -> Result<Self> {
        let n = a.dims().first().copied().unwrap_or(0);
        Self::new(a, forcing, 1.0 / (n.max(2) - 1) as f64)
    }

    pub fn with_boundary_rows(mut self) -> Self {
        self.boundary_rows = true;
        self.valid = vec![true; self.valid.len()];
        self
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn forcing(&self) -> f64 {
        self.forcing
    }

    fn is_boundary(&self, k: usize) -> bool {
        let n = self.dims[0];
        let (i, j) = (k / n, k % n);
        i == 0 || j == 0 || i + 1 == n || j + 1 == n
    }
}

impl ResidualOperator for DarcyStencil {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn valid(&self) -> &[bool] {
        &self.valid
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.dims[0];
        let inv_h2 = 1.0 / (self.h * self.h);
        let mut out = vec![0.0; n * n];
        self.faces.apply(u, n, inv_h2, &mut out);
        for (k, v) in out.iter_mut().enumerate() {
            if self.is_boundary(k) {
                if self.boundary_rows {
                    *v = self.a[k] * u[k] * inv_h2;
                }
            } else {
                *v -= self.forcing;
            }
        }
        out
    }

    fn vjp(&self, _u: &[f64], g: &[f64]) -> Vec<f64> {
        let n = self.dims[0];
        let inv_h2 = 1.0 / (self.h * self.h);
        let mut out = vec![0.0; n * n];
        self.faces.adjoint(g, n, inv_h2, &mut out);
        if self.boundary_rows {
            for (k, o) in out.iter_mut().enumerate() {
                if self.is_boundary(k) {
                    *o += self.a[k] * g[k] * inv_h2;
                }
            }
        }
        out
    }
}

/// Interior Darcy residual `−∇·(a∇u) − f`.
pub fn residual_darcy(u: &Field, a: &Field, forcing: f64, h: f64) -> Result<ResidualField> {
    u.ensure_same_dims(a)?;
    DarcyStencil::new(a, forcing, h)?.residual(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;

    #[test]
    fn zero_state_gives_minus_forcing() {
        let a = Field::filled(vec![6, 6], 2.0).unwrap();
        let u = Field::zeros(vec![6, 6]).unwrap();
        let r = residual_darcy(&u, &a, 1.0, 0.2).unwrap();
        for (v, ok) in r.values.values().iter().zip(&r.valid) {
            if *ok {
                assert_eq!(*v, -1.0);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
        assert_eq!(r.valid_count(), 16);
    }

    #[test]
    fn manufactured_solution() {
        // u = x(1-x)y(1-y) with a = 1: the 5-point stencil is exact on this quadratic-in-each-variable field.
        let n = 17;
        let h = 1.0 / (n - 1) as f64;
        let u = Field::from_fn(vec![n, n], |ix| {
            let (x, y) = (ix[0] as f64 * h, ix[1] as f64 * h);
            x * (1.0 - x) * y * (1.0 - y)
        })
        .unwrap();
        let a = Field::filled(vec![n, n], 1.0).unwrap();
        let r = residual_darcy(&u, &a, 1.0, h).unwrap();
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let (x, y) = (i as f64 * h, j as f64 * h);
                let expect = 2.0 * y * (1.0 - y) + 2.0 * x * (1.0 - x) - 1.0;
                assert!((r.values.get(&[i, j]) - expect).abs() < 1e-3 * h * h + 1e-12);
            }
        }
    }

    #[test]
    fn dims_must_match() {
        let a = Field::filled(vec![6, 6], 1.0).unwrap();
        let u = Field::zeros(vec![5, 5]).unwrap();
        assert!(residual_darcy(&u, &a, 1.0, 0.2).is_err());
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let n = 6;
        let a = Field::from_fn(vec![n, n], |ix| if (ix[0] + ix[1]) % 3 == 0 { 3.0 } else { 12.0 }).unwrap();
        for op in [
            DarcyStencil::unit(&a, 1.0).unwrap(),
            DarcyStencil::unit(&a, 1.0).unwrap().with_boundary_rows(),
        ] {
            let x0: Vec<f64> = (0..n * n).map(|k| (k as f64 * 0.3).sin() * 0.01).collect();
            let f = |x: &[f64]| {
                let r = op.apply(x);
                let loss = r.iter().map(|v| v * v).sum::<f64>();
                let g: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
                (loss, op.vjp(x, &g))
            };
            let rep = gradcheck(&f, &x0, &(0..n * n).collect::<Vec<_>>(), 1e-6);
            assert!(rep.max_rel_error < 1e-6, "{rep:?}");
        }
    }
}
