//! Gaussian random fields on periodic grids by spectral filtering of white noise.

use rustfft::num_complex::Complex64;

use crate::rng::RngStream;
use crate::spectral::{signed_mode, Spectral1, Spectral2};

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter_mut().for_each(|x| *x -= mean);
    let std = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    if std > 0.0 {
        v.iter_mut().for_each(|x| *x /= std);
    }
    v
}

/// Zero-mean, unit-std periodic field on `n` points whose Fourier amplitudes
/// decay like `|k|^(-decay)`.
pub fn grf_1d(rng: &mut RngStream, n: usize, decay: f64) -> Vec<f64> {
    let sp = Spectral1::new(n);
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for (i, s) in spec.iter_mut().enumerate() {
        let k = signed_mode(i, n).abs();
        let (re, im) = (rng.normal(), rng.normal());
        if k > 0.0 {
            *s = Complex64::new(re, im) * k.powf(-decay);
        }
    }
    normalize(sp.inverse(spec))
}

/// Zero-mean, unit-std periodic field on `n0 × n1` points with spectral
/// density proportional to `(|k|² + τ²)^(-α)`.
pub fn grf_2d(rng: &mut RngStream, n0: usize, n1: usize, alpha: f64, tau: f64) -> Vec<f64> {
    let sp = Spectral2::new(n0, n1, 2.0 * std::f64::consts::PI);
    let mut spec = vec![Complex64::new(0.0, 0.0); n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            let (re, im) = (rng.normal(), rng.normal());
            if i == 0 && j == 0 {
                continue;
            }
            let amp = (sp.ksq(i, j) + tau * tau).powf(-alpha / 2.0);
            spec[i * n1 + j] = Complex64::new(re, im) * amp;
        }
    }
    normalize(sp.inverse(spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_and_determinism() {
        let a = grf_1d(&mut RngStream::new(1, 2), 64, 2.0);
        let b = grf_1d(&mut RngStream::new(1, 2), 64, 2.0);
        assert_eq!(a, b);
        let mean = a.iter().sum::<f64>() / 64.0;
        assert!(mean.abs() < 1e-12);
        let g = grf_2d(&mut RngStream::new(3, 0), 16, 16, 2.0, 3.0);
        let var = g.iter().map(|x| x * x).sum::<f64>() / 256.0;
        assert!((var - 1.0).abs() < 1e-12);
    }
}
