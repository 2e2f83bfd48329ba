//! FFT helpers for periodic grids.
//!
//! Two-dimensional fields are `[n0, n1]` row-major. Axis 0 carries the first
//! coordinate ξ₁ and axis 1 the second coordinate ξ₂. Spectral first
//! derivatives zero the Nyquist mode, which keeps them real and exactly
//! antisymmetric as matrices; the Laplacian keeps it.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Signed integer wavenumber of FFT bin `i` of an `n`-point transform.
pub fn signed_mode(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Wavenumber used by first derivatives: the Nyquist bin is dropped.
pub fn derivative_mode(i: usize, n: usize) -> f64 {
    if n % 2 == 0 && i == n / 2 {
        0.0
    } else {
        signed_mode(i, n)
    }
}

pub struct Spectral1 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral1 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse transform, normalized, real part.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut spec);
        let scale = 1.0 / self.n as f64;
        spec.iter().map(|c| c.re * scale).collect()
    }
}

pub struct Spectral2 {
    n0: usize,
    n1: usize,
    /// Physical period of each axis.
    length: f64,
    fwd0: Arc<dyn Fft<f64>>,
    inv0: Arc<dyn Fft<f64>>,
    fwd1: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
}

impl Spectral2 {
    pub fn new(n0: usize, n1: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n0,
            n1,
            length,
            fwd0: planner.plan_fft_forward(n0),
            inv0: planner.plan_fft_inverse(n0),
            fwd1: planner.plan_fft_forward(n1),
            inv1: planner.plan_fft_inverse(n1),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n0, self.n1)
    }

    pub fn size(&self) -> usize {
        self.n0 * self.n1
    }

    fn scale(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.length
    }

    fn transform(&self, buf: &mut [Complex64], along0: &Arc<dyn Fft<f64>>, along1: &Arc<dyn Fft<f64>>) {
        along1.process(buf);
        let (n0, n1) = (self.n0, self.n1);
        let mut col = vec![Complex64::new(0.0, 0.0); n0];
        for j in 0..n1 {
            for i in 0..n0 {
                col[i] = buf[i * n1 + j];
            }
            along0.process(&mut col);
            for i in 0..n0 {
                buf[i * n1 + j] = col[i];
            }
        }
    }

    pub fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(data.len(), self.size());
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.fwd0, &self.fwd1);
        buf
    }

    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spec, &self.inv0, &self.inv1);
        let scale = 1.0 / self.size() as f64;
        spec.iter().map(|c| c.re * scale).collect()
    }

    /// Multiply the spectrum by `mult(k0, k1, i, j)` where `k0`, `k1` are
    /// physical signed wavenumbers of bin `(i, j)`.
    pub fn apply_spectrum(&self, spec: &[Complex64], mult: impl Fn(usize, usize) -> Complex64) -> Vec<Complex64> {
        let mut out = spec.to_vec();
        for i in 0..self.n0 {
            for j in 0..self.n1 {
                out[i * self.n1 + j] *= mult(i, j);
            }
        }
        out
    }

    pub fn k0(&self, i: usize) -> f64 {
        signed_mode(i, self.n0) * self.scale()
    }

    pub fn k1(&self, j: usize) -> f64 {
        signed_mode(j, self.n1) * self.scale()
    }

    pub fn dk0(&self, i: usize) -> f64 {
        derivative_mode(i, self.n0) * self.scale()
    }

    pub fn dk1(&self, j: usize) -> f64 {
        derivative_mode(j, self.n1) * self.scale()
    }

    pub fn ksq(&self, i: usize, j: usize) -> f64 {
        self.k0(i).powi(2) + self.k1(j).powi(2)
    }

    pub fn d0_spec(&self, spec: &[Complex64]) -> Vec<Complex64> {
        self.apply_spectrum(spec, |i, _| Complex64::new(0.0, self.dk0(i)))
    }

    pub fn d1_spec(&self, spec: &[Complex64]) -> Vec<Complex64> {
        self.apply_spectrum(spec, |_, j| Complex64::new(0.0, self.dk1(j)))
    }

    pub fn laplacian_spec(&self, spec: &[Complex64]) -> Vec<Complex64> {
        self.apply_spectrum(spec, |i, j| Complex64::new(-self.ksq(i, j), 0.0))
    }

    /// Inverse Laplacian with the mean mode set to zero.
    pub fn inv_laplacian_spec(&self, spec: &[Complex64]) -> Vec<Complex64> {
        self.apply_spectrum(spec, |i, j| {
            if i == 0 && j == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-1.0 / self.ksq(i, j), 0.0)
            }
        })
    }

    pub fn d0(&self, data: &[f64]) -> Vec<f64> {
        self.inverse(self.d0_spec(&self.forward(data)))
    }

    pub fn d1(&self, data: &[f64]) -> Vec<f64> {
        self.inverse(self.d1_spec(&self.forward(data)))
    }

    pub fn laplacian(&self, data: &[f64]) -> Vec<f64> {
        self.inverse(self.laplacian_spec(&self.forward(data)))
    }

    pub fn inv_laplacian(&self, data: &[f64]) -> Vec<f64> {
        self.inverse(self.inv_laplacian_spec(&self.forward(data)))
    }
}
