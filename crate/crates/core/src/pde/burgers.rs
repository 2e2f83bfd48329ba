//! Viscous Burgers `u_t + u u_x = ν u_xx` on the periodic unit interval.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grf::grf_1d;
use crate::error::{Error, Result};
use crate::field::{AxisTag, Field};
use crate::rng::RngStream;
use crate::spectral::Spectral1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurgersSpec {
    /// Output spatial points on `[0, 1)`.
    pub nx: usize,
    /// Output time points `t_j = j/(nt − 1)`, `j = 0..nt`.
    pub nt: usize,
    pub nu: f64,
    pub nu_lf: f64,
    /// Internal grid is `refine · nx` points.
    pub refine: usize,
    pub cfl: f64,
    /// Lower bound on solver steps per output interval.
    pub min_substeps: usize,
}

impl BurgersSpec {
    pub fn new(nx: usize, nt: usize) -> Self {
        Self {
            nx,
            nt,
            nu: 0.01,
            nu_lf: 0.1,
            refine: 4,
            cfl: 0.5,
            min_substeps: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.nt < 3 {
            return Err(Error::InvalidArgument(format!(
                "Burgers grid needs nx, nt >= 3, got {}x{}",
                self.nx, self.nt
            )));
        }
        if !(self.nu > 0.0 && self.nu_lf > 0.0) {
            return Err(Error::InvalidArgument("Burgers viscosity must be positive".into()));
        }
        if self.refine == 0 || self.min_substeps == 0 || !(self.cfl > 0.0) {
            return Err(Error::InvalidArgument("Burgers refine, min_substeps and cfl must be positive".into()));
        }
        Ok(())
    }

    pub fn fine_points(&self) -> usize {
        self.nx * self.refine
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.nx, self.nt]
    }
}

/// Zero-mean, unit-std periodic initial condition with `k⁻²` amplitude decay.
pub fn sample_burgers_ic(rng: &mut RngStream, nx: usize) -> Result<Field> {
    if nx < 3 {
        return Err(Error::InvalidArgument(format!("Burgers IC needs nx >= 3, got {nx}")));
    }
    Field::new(vec![nx], grf_1d(rng, nx, 2.0)).map(|f| f.with_tags(&[AxisTag::Space]))
}

struct Stepper {
    n: usize,
    h: f64,
    nu: f64,
    sp: Spectral1,
    /// Eigenvalues of the periodic 3-point Laplacian.
    lap: Vec<f64>,
}

impl Stepper {
    fn new(n: usize, nu: f64) -> Self {
        let h = 1.0 / n as f64;
        let lap = (0..n).map(|k| -4.0 * (PI * k as f64 / n as f64).sin().powi(2) / (h * h)).collect();
        Self {
            n,
            h,
            nu,
            sp: Spectral1::new(n),
            lap,
        }
    }

    /// `−(u²)_x / 2` by central differences.
    fn advection(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let (e, w) = (u[(i + 1) % n], u[(i + n - 1) % n]);
                -(e * e - w * w) / (4.0 * self.h)
            })
            .collect()
    }

    /// `(I − dt/2 ν L)⁻¹ rhs`.
    fn implicit_solve(&self, rhs: &[f64], dt: f64) -> Vec<f64> {
        let spec = self.sp.forward(rhs);
        let spec = spec
            .into_iter()
            .zip(&self.lap)
            .map(|(c, l)| c / Complex64::new(1.0 - 0.5 * dt * self.nu * l, 0.0))
            .collect();
        self.sp.inverse(spec)
    }

    /// `(I + dt/2 ν L) u`.
    fn explicit_half(&self, u: &[f64], dt: f64) -> Vec<f64> {
        let n = self.n;
        let c = 0.5 * dt * self.nu / (self.h * self.h);
        (0..n)
            .map(|i| u[i] + c * (u[(i + 1) % n] - 2.0 * u[i] + u[(i + n - 1) % n]))
            .collect()
    }

    /// Heun on advection, Crank–Nicolson on diffusion.
    fn step(&self, u: &[f64], dt: f64) -> Vec<f64> {
        let a0 = self.advection(u);
        let base = self.explicit_half(u, dt);
        let rhs: Vec<f64> = base.iter().zip(&a0).map(|(b, a)| b + dt * a).collect();
        let star = self.implicit_solve(&rhs, dt);
        let a1 = self.advection(&star);
        let rhs: Vec<f64> = base
            .iter()
            .zip(a0.iter().zip(&a1))
            .map(|(b, (x, y))| b + 0.5 * dt * (x + y))
            .collect();
        self.implicit_solve(&rhs, dt)
    }
}

/// Integrate from `u0` (on a grid of `r · nx` points) with viscosity `nu`;
/// `substeps` fixes the number of steps per output interval when given.
pub fn simulate_burgers_with(u0: &Field, spec: &BurgersSpec, nu: f64, substeps: Option<usize>) -> Result<Field> {
    spec.validate()?;
    let n = u0.len();
    if u0.rank() != 1 || n < spec.nx || n % spec.nx != 0 {
        return Err(Error::InvalidArgument(format!(
            "Burgers u0 must be a 1-D field whose length is a multiple of nx = {}, got dims {:?}",
            spec.nx,
            u0.dims()
        )));
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")));
    }
    let r = n / spec.nx;
    let (nx, nt) = (spec.nx, spec.nt);
    let stepper = Stepper::new(n, nu);
    let interval = 1.0 / (nt - 1) as f64;
    let mut out = vec![0.0; nx * nt];
    let mut u = u0.values().to_vec();
    let store = |out: &mut Vec<f64>, u: &[f64], j: usize| {
        for i in 0..nx {
            out[i * nt + j] = u[i * r];
        }
    };
    store(&mut out, &u, 0);
    let mut global = 0;
    for j in 1..nt {
        let steps = match substeps {
            Some(s) => s.max(1),
            None => {
                let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let cfl_steps = if umax > 0.0 {
                    (interval * umax / (spec.cfl * stepper.h)).ceil() as usize
                } else {
                    1
                };
                cfl_steps.max(spec.min_substeps)
            }
        };
        let dt = interval / steps as f64;
        for _ in 0..steps {
            u = stepper.step(&u, dt);
            global += 1;
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Unstable { step: global });
            }
        }
        store(&mut out, &u, j);
    }
    Field::new(vec![nx, nt], out).map(|f| f.with_tags(&[AxisTag::Space, AxisTag::Time]))
}

/// High-fidelity trajectory with `spec.nu`.
pub fn simulate_burgers(u0: &Field, spec: &BurgersSpec) -> Result<Field> {
    simulate_burgers_with(u0, spec, spec.nu, None)
}

/// Low-fidelity trajectory: same initial condition, viscosity `spec.nu_lf`.
pub fn make_lf_burgers(u0: &Field, spec: &BurgersSpec) -> Result<Field> {
    simulate_burgers_with(u0, spec, spec.nu_lf, None)
}
