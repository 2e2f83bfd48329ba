use std::f64::consts::PI;
use std::sync::Arc;

use super::{ResidualField, ResidualOperator};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::spectral::Spectral2;

/// Static part of the Kolmogorov forcing, `−A·cos(k·ξ₂)`, on an `n0 × n1` grid.
pub fn kolmogorov_forcing(n0: usize, n1: usize, h: f64, amplitude: f64, wavenumber: f64) -> Vec<f64> {
    let mut f = vec![0.0; n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            f[i * n1 + j] = -amplitude * (wavenumber * j as f64 * h).cos();
        }
    }
    f
}

/// Vorticity-equation residual on a `[frame, row, col]` trajectory:
///
/// `(ω_j − ω_{j−1})/Δγ + v_j·∇ω_j − ∇²ω_j/Re − f(ω_j)` with
/// `f(ω) = −A cos(kξ₂) − drag·ω`, defined for frames `j ≥ 1`.
#[derive(Clone)]
pub struct KolmogorovStencil {
    dims: [usize; 3],
    sp: Arc<Spectral2>,
    h: f64,
    nu: f64,
    dgamma: f64,
    drag: f64,
    static_forcing: Vec<f64>,
    valid: Vec<bool>,
}

impl std::fmt::Debug for KolmogorovStencil {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KolmogorovStencil")
            .field("dims", &self.dims)
            .field("nu", &self.nu)
            .field("dgamma", &self.dgamma)
            .field("drag", &self.drag)
            .finish()
    }
}

/// Per-frame spectral quantities reused between the residual and its adjoint.
struct FrameTerms {
    d1w: Vec<f64>,
    d2w: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    lap: Vec<f64>,
}

impl KolmogorovStencil {
    pub fn new(frames: usize, n0: usize, n1: usize, re: f64, h: f64, dgamma: f64) -> Result<Self> {
        if frames < 2 {
            return Err(Error::InvalidArgument("Kolmogorov residual needs at least 2 frames".into()));
        }
        if n0 < 4 || n1 < 4 {
            return Err(Error::InvalidArgument(format!("Kolmogorov grid too small: {n0}x{n1}")));
        }
        if !(re > 0.0 && h > 0.0 && dgamma > 0.0) {
            return Err(Error::InvalidArgument("Kolmogorov residual needs Re, h, dγ > 0".into()));
        }
        let m = n0 * n1;
        Ok(Self {
            dims: [frames, n0, n1],
            sp: Arc::new(Spectral2::new(n0, n1, n1 as f64 * h)),
            h,
            nu: 1.0 / re,
            dgamma,
            drag: 0.1,
            static_forcing: kolmogorov_forcing(n0, n1, h, 4.0, 4.0),
            valid: (0..frames * m).map(|k| k >= m).collect(),
        })
    }

    /// 2π-periodic square grid with frames spaced `span / frames` apart.
    pub fn torus(frames: usize, n: usize, re: f64, span: f64) -> Result<Self> {
        Self::new(frames, n, n, re, 2.0 * PI / n as f64, span / frames as f64)
    }

    /// Replace the forcing `−A cos(kξ₂) − drag·ω`.
    pub fn with_forcing(mut self, amplitude: f64, wavenumber: f64, drag: f64) -> Self {
        let [_, n0, n1] = self.dims;
        self.static_forcing = kolmogorov_forcing(n0, n1, self.h, amplitude, wavenumber);
        self.drag = drag;
        self
    }

    fn frame_terms(&self, w: &[f64]) -> FrameTerms {
        let sp = &self.sp;
        let spec = sp.forward(w);
        let psi = sp.inv_laplacian_spec(&spec);
        FrameTerms {
            d1w: sp.inverse(sp.d0_spec(&spec)),
            d2w: sp.inverse(sp.d1_spec(&spec)),
            u1: sp.inverse(sp.d1_spec(&psi)),
            u2: sp.inverse(sp.d0_spec(&psi)).into_iter().map(|v| -v).collect(),
            lap: sp.inverse(sp.laplacian_spec(&spec)),
        }
    }
}

impl ResidualOperator for KolmogorovStencil {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn valid(&self) -> &[bool] {
        &self.valid
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let [nf, n0, n1] = self.dims;
        let m = n0 * n1;
        let mut r = vec![0.0; nf * m];
        for j in 1..nf {
            let (prev, cur) = (&x[(j - 1) * m..j * m], &x[j * m..(j + 1) * m]);
            let t = self.frame_terms(cur);
            let out = &mut r[j * m..(j + 1) * m];
            for k in 0..m {
                out[k] = (cur[k] - prev[k]) / self.dgamma + t.u1[k] * t.d1w[k] + t.u2[k] * t.d2w[k]
                    - self.nu * t.lap[k]
                    - self.static_forcing[k]
                    + self.drag * cur[k];
            }
        }
        r
    }

    fn vjp(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let [nf, n0, n1] = self.dims;
        let m = n0 * n1;
        let sp = &self.sp;
        let mut out = vec![0.0; nf * m];
        for j in 1..nf {
            let gj = &g[j * m..(j + 1) * m];
            let t = self.frame_terms(&x[j * m..(j + 1) * m]);
            let gd1: Vec<f64> = gj.iter().zip(&t.d1w).map(|(a, b)| a * b).collect();
            let gd2: Vec<f64> = gj.iter().zip(&t.d2w).map(|(a, b)| a * b).collect();
            let gu1: Vec<f64> = gj.iter().zip(&t.u1).map(|(a, b)| a * b).collect();
            let gu2: Vec<f64> = gj.iter().zip(&t.u2).map(|(a, b)| a * b).collect();
            // Derivatives are antisymmetric and ∇⁻², ∇² symmetric as real operators.
            let a1 = sp.inv_laplacian(&sp.d1(&gd1));
            let a2 = sp.d0(&gu1);
            let a3 = sp.inv_laplacian(&sp.d0(&gd2));
            let a4 = sp.d1(&gu2);
            let lg = sp.laplacian(gj);
            let cur = &mut out[j * m..(j + 1) * m];
            for k in 0..m {
                cur[k] += -a1[k] - a2[k] + a3[k] - a4[k] - self.nu * lg[k] + self.drag * gj[k] + gj[k] / self.dgamma;
            }
            let prev = &mut out[(j - 1) * m..j * m];
            for k in 0..m {
                prev[k] -= gj[k] / self.dgamma;
            }
        }
        out
    }
}

/// Kolmogorov residual of a `[frame, row, col]` vorticity trajectory.
pub fn residual_kolmogorov(w: &Field, re: f64, h: f64, dgamma: f64) -> Result<ResidualField> {
    let [nf, n0, n1] = match *w.dims() {
        [a, b, c] => [a, b, c],
        _ => {
            return Err(Error::InvalidArgument(format!(
                "Kolmogorov residual expects [frame, row, col], got {:?}",
                w.dims()
            )))
        }
    };
    let m = n0 * n1;
    for k in 0..nf {
        let mean = w.values()[k * m..(k + 1) * m].iter().sum::<f64>() / m as f64;
        if mean.abs() > 1e-8 {
            return Err(Error::NonZeroMean { mean });
        }
    }
    KolmogorovStencil::new(nf, n0, n1, re, h, dgamma)?.residual(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck;

    #[test]
    fn zero_vorticity_leaves_forcing() {
        let n = 16;
        let h = 2.0 * PI / n as f64;
        let w = Field::zeros(vec![2, n, n]).unwrap();
        let r = residual_kolmogorov(&w, 1000.0, h, 0.1).unwrap();
        for i in 0..n {
            for j in 0..n {
                let expect = 4.0 * (4.0 * j as f64 * h).cos();
                assert!((r.values.get(&[1, i, j]) - expect).abs() < 1e-12);
                assert_eq!(r.values.get(&[0, i, j]), 0.0);
            }
        }
    }

    #[test]
    fn steady_state_balance() {
        // Without forcing, ω = sin(ξ₁) has v·∇ω = 0, so ω − ω_prev = Δγ ν∇²ω balances exactly.
        let n = 16;
        let h = 2.0 * PI / n as f64;
        let re = 100.0;
        let dg = 0.05;
        let op = KolmogorovStencil::new(2, n, n, re, h, dg).unwrap().with_forcing(0.0, 4.0, 0.0);
        let mut x = vec![0.0; 2 * n * n];
        for i in 0..n {
            for j in 0..n {
                let s = (i as f64 * h).sin();
                x[n * n + i * n + j] = s;
                x[i * n + j] = s * (1.0 + dg / re);
            }
        }
        let r = op.apply(&x);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn single_frame_rejected() {
        let w = Field::zeros(vec![1, 8, 8]).unwrap();
        assert!(residual_kolmogorov(&w, 1000.0, 0.1, 0.1).is_err());
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let n = 8;
        let op = KolmogorovStencil::torus(3, n, 50.0, 0.3).unwrap();
        let m = n * n;
        let mut x0 = vec![0.0; 3 * m];
        for f in 0..3 {
            for i in 0..n {
                for j in 0..n {
                    let (a, b) = (i as f64 * 2.0 * PI / n as f64, j as f64 * 2.0 * PI / n as f64);
                    x0[f * m + i * n + j] = (a + 0.3 * f as f64).sin() * (2.0 * b).cos() + 0.5 * (a - b).cos();
                }
            }
        }
        let f = |x: &[f64]| {
            let r = op.apply(x);
            let loss = r.iter().map(|v| v * v).sum::<f64>();
            let g: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
            (loss, op.vjp(x, &g))
        };
        let coords: Vec<usize> = (0..3 * m).step_by(5).collect();
        let rep = gradcheck(&f, &x0, &coords, 1e-6);
        assert!(rep.max_rel_error < 1e-5, "{rep:?}");
    }
}
