//! Full-grid estimates from scattered observations, frame by frame.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::observation::ObservationSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpMethod {
    Nearest,
    Bicubic,
}

fn frames_of(dims: &[usize]) -> Result<(usize, usize, usize)> {
    match *dims {
        [n0, n1] => Ok((1, n0, n1)),
        [f, n0, n1] => Ok((f, n0, n1)),
        _ => Err(Error::InvalidArgument(format!(
            "interpolation expects [row, col] or [frame, row, col], got {dims:?}"
        ))),
    }
}

/// Nearest observed point in Euclidean index distance; ties go to the lower flat index.
fn nearest_frame(mask: &[f64], vals: &[f64], n0: usize, n1: usize) -> Vec<f64> {
    let pts: Vec<(i64, i64, f64)> = (0..n0 * n1)
        .filter(|&k| mask[k] == 1.0)
        .map(|k| ((k / n1) as i64, (k % n1) as i64, vals[k]))
        .collect();
    (0..n0 * n1)
        .into_par_iter()
        .map(|k| {
            if mask[k] == 1.0 {
                return vals[k];
            }
            let (i, j) = ((k / n1) as i64, (k % n1) as i64);
            let mut best = (i64::MAX, 0.0);
            for &(pi, pj, v) in &pts {
                let d = (pi - i).pow(2) + (pj - j).pow(2);
                if d < best.0 {
                    best = (d, v);
                }
            }
            best.1
        })
        .collect()
}

/// Keys cubic convolution kernel (a = −1/2).
fn keys(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        1.5 * x.powi(3) - 2.5 * x.powi(2) + 1.0
    } else if x < 2.0 {
        -0.5 * x.powi(3) + 2.5 * x.powi(2) - 4.0 * x + 2.0
    } else {
        0.0
    }
}

fn kernel_weights(scale: f64) -> Vec<(i64, f64)> {
    let reach = (2.0 * scale).ceil() as i64;
    let mut w: Vec<(i64, f64)> = (-reach..=reach).map(|d| (d, keys(d as f64 / scale))).collect();
    let total: f64 = w.iter().map(|(_, v)| v).sum();
    w.iter_mut().for_each(|(_, v)| *v /= total);
    w
}

/// Separable smoothing with edge clamping.
fn smooth(field: &[f64], n0: usize, n1: usize, w: &[(i64, f64)]) -> Vec<f64> {
    let clamp = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let mut rows = vec![0.0; n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            rows[i * n1 + j] = w.iter().map(|&(d, c)| c * field[i * n1 + clamp(j as i64 + d, n1)]).sum();
        }
    }
    let mut out = vec![0.0; n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            out[i * n1 + j] = w.iter().map(|&(d, c)| c * rows[clamp(i as i64 + d, n0) * n1 + j]).sum();
        }
    }
    out
}

/// Interpolate observations to the full grid.
///
/// `Bicubic` fills by nearest neighbour, smooths once with a cubic kernel
/// whose width matches the mean sensor spacing, then restores observed values.
pub fn make_lf_interp(obs: &ObservationSet, method: InterpMethod) -> Result<Field> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let (nf, n0, n1) = frames_of(obs.dims())?;
    let m = n0 * n1;
    let mask = obs.mask().values();
    let vals = obs.values().values();
    let mut out = Vec::with_capacity(nf * m);
    for f in 0..nf {
        let (fm, fv) = (&mask[f * m..(f + 1) * m], &vals[f * m..(f + 1) * m]);
        let count = fm.iter().filter(|&&v| v == 1.0).count();
        if count == 0 {
            return Err(Error::EmptyObservations);
        }
        let filled = nearest_frame(fm, fv, n0, n1);
        let frame = match method {
            InterpMethod::Nearest => filled,
            InterpMethod::Bicubic => {
                let spacing = (m as f64 / count as f64).sqrt();
                if spacing <= 1.0 {
                    filled
                } else {
                    let mut s = smooth(&filled, n0, n1, &kernel_weights(spacing));
                    for k in 0..m {
                        if fm[k] == 1.0 {
                            s[k] = fv[k];
                        }
                    }
                    s
                }
            }
        };
        out.extend(frame);
    }
    Field::new(obs.dims().to_vec(), out).map(|f| f.with_tags(obs.values().tags()))
}
