use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::spectral::Spectral2;

const MEAN_TOL: f64 = 1e-8;

/// Split a `[row, col]` or `[frame, row, col]` field into frames.
fn frames_of(w: &Field) -> Result<(usize, usize, usize)> {
    match *w.dims() {
        [n0, n1] => Ok((1, n0, n1)),
        [f, n0, n1] => Ok((f, n0, n1)),
        _ => Err(Error::InvalidArgument(format!(
            "vorticity must be [row, col] or [frame, row, col], got {:?}",
            w.dims()
        ))),
    }
}

fn check_mean(frame: &[f64]) -> Result<()> {
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    if mean.abs() > MEAN_TOL {
        return Err(Error::NonZeroMean { mean });
    }
    Ok(())
}

fn per_frame(w: &Field, f: impl Fn(&Spectral2, &[f64]) -> Vec<f64>) -> Result<Field> {
    let (nf, n0, n1) = frames_of(w)?;
    let sp = Spectral2::new(n0, n1, 2.0 * PI);
    let m = n0 * n1;
    let mut out = Vec::with_capacity(nf * m);
    for k in 0..nf {
        let frame = &w.values()[k * m..(k + 1) * m];
        check_mean(frame)?;
        out.extend(f(&sp, frame));
    }
    Field::new(w.dims().to_vec(), out).map(|x| x.with_tags(w.tags()))
}

/// `ψ = ∇⁻²ω` on the 2π-periodic torus, with the mean mode set to zero.
pub fn stream_function(w: &Field) -> Result<Field> {
    per_frame(w, |sp, frame| sp.inv_laplacian(frame))
}

/// `v = (∂ψ/∂ξ₂, −∂ψ/∂ξ₁)` with `ψ = ∇⁻²ω`.
pub fn velocity_from_vorticity(w: &Field) -> Result<(Field, Field)> {
    let psi = stream_function(w)?;
    let v1 = per_frame(&psi, |sp, frame| sp.d1(frame))?;
    let v2 = per_frame(&psi, |sp, frame| sp.d0(frame).iter().map(|v| -v).collect())?;
    Ok((v1, v2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, f: impl Fn(f64, f64) -> f64) -> Field {
        let h = 2.0 * PI / n as f64;
        Field::from_fn(vec![n, n], |ix| f(ix[0] as f64 * h, ix[1] as f64 * h)).unwrap()
    }

    #[test]
    fn poisson_mode() {
        let w = grid(16, |x, _| x.sin());
        let psi = stream_function(&w).unwrap();
        let expect = grid(16, |x, _| -x.sin());
        for (a, b) in psi.values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_of_mode() {
        let w = grid(16, |x, _| x.sin());
        let (v1, v2) = velocity_from_vorticity(&w).unwrap();
        let expect = grid(16, |x, _| x.cos());
        assert!(v1.max_abs() < 1e-12);
        for (a, b) in v2.values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_vorticity() {
        let w = Field::zeros(vec![8, 8]).unwrap();
        assert_eq!(stream_function(&w).unwrap().max_abs(), 0.0);
        let (v1, v2) = velocity_from_vorticity(&w).unwrap();
        assert_eq!(v1.max_abs() + v2.max_abs(), 0.0);
    }

    #[test]
    fn constant_vorticity_rejected() {
        let w = Field::filled(vec![8, 8], 0.5).unwrap();
        assert!(matches!(stream_function(&w), Err(Error::NonZeroMean { .. })));
    }

    #[test]
    fn band_limited_inverse_and_divergence() {
        let w = grid(32, |x, y| (2.0 * x).sin() * y.cos() + 0.3 * (x + 3.0 * y).cos() - 0.7 * (5.0 * y).sin());
        let psi = stream_function(&w).unwrap();
        let sp = Spectral2::new(32, 32, 2.0 * PI);
        let lap = sp.laplacian(psi.values());
        for (a, b) in lap.iter().zip(w.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        let (v1, v2) = velocity_from_vorticity(&w).unwrap();
        let div: Vec<f64> = sp.d0(v1.values()).iter().zip(sp.d1(v2.values())).map(|(a, b)| a + b).collect();
        assert!(div.iter().all(|d| d.abs() < 1e-10));
        // ω = ∂₂v₁ − ∂₁v₂ under this sign convention
        let curl: Vec<f64> = sp.d1(v1.values()).iter().zip(sp.d0(v2.values())).map(|(a, b)| a - b).collect();
        for (c, o) in curl.iter().zip(w.values()) {
            assert!((c - o).abs() < 1e-8);
        }
    }
}
