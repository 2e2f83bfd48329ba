//! 2-D vorticity transport `ω_γ + v·∇ω = ∇²ω/Re + f` on the 2π torus.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grf::grf_2d;
use crate::error::{Error, Result};
use crate::field::{AxisTag, Field};
use crate::rng::RngStream;
use crate::spectral::Spectral2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovSpec {
    pub n: usize,
    pub frames: usize,
    pub re: f64,
    /// Frames are saved at `k · span / frames`, `k = 1..=frames`.
    pub span: f64,
    pub cfl: f64,
    /// Fixed solver step; adaptive at `cfl` when absent.
    pub dt: Option<f64>,
    pub forcing_amplitude: f64,
    pub forcing_wavenumber: f64,
    pub drag: f64,
    /// Initial vorticity: GRF with density `(|k|² + τ²)^(−α)` scaled to this std.
    pub ic_std: f64,
    pub ic_alpha: f64,
    pub ic_tau: f64,
    pub max_substeps: usize,
}

impl KolmogorovSpec {
    pub fn new(n: usize, frames: usize) -> Self {
        Self {
            n,
            frames,
            re: 1000.0,
            span: 1.25,
            cfl: 0.4,
            dt: None,
            forcing_amplitude: 4.0,
            forcing_wavenumber: 4.0,
            drag: 0.1,
            ic_std: 1.0,
            ic_alpha: 2.5,
            ic_tau: 3.0,
            max_substeps: 200_000,
        }
    }

    pub fn h(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn frame_spacing(&self) -> f64 {
        self.span / self.frames as f64
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.frames, self.n, self.n]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || !self.n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "Kolmogorov grid must be a power of two >= 4, got {}",
                self.n
            )));
        }
        if self.frames < 2 {
            return Err(Error::InvalidArgument("Kolmogorov needs at least 2 frames".into()));
        }
        if !(self.re > 0.0 && self.span > 0.0 && self.cfl > 0.0) {
            return Err(Error::InvalidArgument("Kolmogorov Re, span and cfl must be positive".into()));
        }
        Ok(())
    }
}

/// Zero-mean GRF initial vorticity.
pub fn sample_kolmogorov_ic(rng: &mut RngStream, spec: &KolmogorovSpec) -> Result<Field> {
    spec.validate()?;
    let w = grf_2d(rng, spec.n, spec.n, spec.ic_alpha, spec.ic_tau);
    let w = w.into_iter().map(|v| v * spec.ic_std).collect();
    Field::new(vec![spec.n, spec.n], w).map(|f| f.with_tags(&[AxisTag::Row, AxisTag::Col]))
}

struct Solver<'a> {
    spec: &'a KolmogorovSpec,
    sp: Spectral2,
    nu: f64,
    dealias: Vec<bool>,
    forcing_hat: Vec<Complex64>,
}

impl<'a> Solver<'a> {
    fn new(spec: &'a KolmogorovSpec) -> Self {
        let n = spec.n;
        let sp = Spectral2::new(n, n, 2.0 * PI);
        let cut = n as f64 / 3.0;
        let mut dealias = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                dealias[i * n + j] = sp.k0(i).abs() < cut && sp.k1(j).abs() < cut;
            }
        }
        let h = spec.h();
        let f: Vec<f64> = (0..n * n)
            .map(|k| -spec.forcing_amplitude * (spec.forcing_wavenumber * (k % n) as f64 * h).cos())
            .collect();
        let forcing_hat = sp.forward(&f);
        Self {
            spec,
            sp,
            nu: 1.0 / spec.re,
            dealias,
            forcing_hat,
        }
    }

    fn truncate(&self, mut s: Vec<Complex64>) -> Vec<Complex64> {
        for (c, &keep) in s.iter_mut().zip(&self.dealias) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        s
    }

    /// Velocity components in physical space.
    fn velocity(&self, w_hat: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let psi = self.sp.inv_laplacian_spec(w_hat);
        let u1 = self.sp.inverse(self.sp.d1_spec(&psi));
        let u2 = self.sp.inverse(self.sp.d0_spec(&psi)).into_iter().map(|v| -v).collect();
        (u1, u2)
    }

    /// Explicit terms `−v·∇ω + f_static − drag·ω` in spectral space.
    fn explicit(&self, w_hat: &[Complex64]) -> Vec<Complex64> {
        let wt = self.truncate(w_hat.to_vec());
        let (u1, u2) = self.velocity(&wt);
        let d1 = self.sp.inverse(self.sp.d0_spec(&wt));
        let d2 = self.sp.inverse(self.sp.d1_spec(&wt));
        let adv: Vec<f64> = (0..u1.len()).map(|k| u1[k] * d1[k] + u2[k] * d2[k]).collect();
        let adv_hat = self.truncate(self.sp.forward(&adv));
        let mut out: Vec<Complex64> = (0..adv_hat.len())
            .map(|k| -adv_hat[k] + self.forcing_hat[k] - w_hat[k] * self.spec.drag)
            .collect();
        out[0] = Complex64::new(0.0, 0.0);
        out
    }

    fn step(&self, w_hat: &[Complex64], dt: f64) -> Vec<Complex64> {
        let n = self.spec.n;
        let mult: Vec<(f64, f64)> = (0..n * n)
            .map(|k| {
                let l = -self.sp.ksq(k / n, k % n) * self.nu;
                (1.0 + 0.5 * dt * l, 1.0 / (1.0 - 0.5 * dt * l))
            })
            .collect();
        let e0 = self.explicit(w_hat);
        let star: Vec<Complex64> = (0..w_hat.len())
            .map(|k| (w_hat[k] * mult[k].0 + e0[k] * dt) * mult[k].1)
            .collect();
        let e1 = self.explicit(&star);
        let mut next: Vec<Complex64> = (0..w_hat.len())
            .map(|k| (w_hat[k] * mult[k].0 + (e0[k] + e1[k]) * (0.5 * dt)) * mult[k].1)
            .collect();
        next[0] = Complex64::new(0.0, 0.0);
        next
    }

    fn max_speed(&self, w_hat: &[Complex64]) -> f64 {
        let (u1, u2) = self.velocity(w_hat);
        u1.iter().zip(&u2).fold(0.0f64, |m, (a, b)| m.max(a.abs() + b.abs()))
    }
}

/// Integrate from `ω0` and return `frames` snapshots over `(0, span]`.
pub fn simulate_kolmogorov(w0: &Field, spec: &KolmogorovSpec) -> Result<Field> {
    spec.validate()?;
    let n = spec.n;
    if w0.dims() != [n, n] {
        return Err(Error::ShapeMismatch {
            expected: vec![n, n],
            got: w0.dims().to_vec(),
        });
    }
    let mean = w0.mean();
    if mean.abs() > 1e-8 {
        return Err(Error::NonZeroMean { mean });
    }
    let solver = Solver::new(spec);
    let h = spec.h();
    let interval = spec.frame_spacing();
    let mut w_hat = solver.sp.forward(w0.values());
    w_hat[0] = Complex64::new(0.0, 0.0);
    let mut out = Vec::with_capacity(spec.frames * n * n);
    let mut global = 0;
    for _ in 0..spec.frames {
        let speed = solver.max_speed(&w_hat);
        let cfl_dt = if speed > 0.0 { spec.cfl * h / speed } else { interval };
        let steps = match spec.dt {
            Some(dt) => {
                if speed * dt / h > 1.0 {
                    return Err(Error::Cfl { suggested_dt: cfl_dt });
                }
                (interval / dt).round().max(1.0) as usize
            }
            None => (interval / cfl_dt).ceil().max(1.0) as usize,
        };
        if steps > spec.max_substeps {
            return Err(Error::Cfl { suggested_dt: cfl_dt });
        }
        let dt = interval / steps as f64;
        for _ in 0..steps {
            w_hat = solver.step(&w_hat, dt);
            global += 1;
            if w_hat.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::Unstable { step: global });
            }
        }
        let mut frame = solver.sp.inverse(w_hat.clone());
        let m = frame.iter().sum::<f64>() / frame.len() as f64;
        frame.iter_mut().for_each(|v| *v -= m);
        out.extend(frame);
    }
    Field::new(spec.dims(), out).map(|f| f.with_tags(&[AxisTag::Frame, AxisTag::Row, AxisTag::Col]))
}
