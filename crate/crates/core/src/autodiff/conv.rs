//! Image-style ops on `[C, H, W]` tensors: 3×3 convolution, nearest
//! upsampling, instance normalization.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::linalg::gemm;
use super::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Circular,
    Reflect,
    Zero,
}

fn pad_index(i: i64, n: usize, padding: Padding) -> Option<usize> {
    let n = n as i64;
    if (0..n).contains(&i) {
        return Some(i as usize);
    }
    match padding {
        Padding::Circular => Some(i.rem_euclid(n) as usize),
        Padding::Reflect => {
            if n == 1 {
                return Some(0);
            }
            let period = 2 * (n - 1);
            let m = i.rem_euclid(period);
            Some(if m < n { m } else { period - m } as usize)
        }
        Padding::Zero => None,
    }
}

/// Source pixel for every (tap, output pixel) of a k×k convolution with
/// "same" padding `k/2` and the given stride.
struct ConvPlan {
    out_h: usize,
    out_w: usize,
    taps: Vec<Option<usize>>,
    kk: usize,
}

impl ConvPlan {
    fn new(h: usize, w: usize, k: usize, stride: usize, padding: Padding) -> Self {
        let pad = (k / 2) as i64;
        let out_h = (h + 2 * pad as usize - k) / stride + 1;
        let out_w = (w + 2 * pad as usize - k) / stride + 1;
        let p = out_h * out_w;
        let mut taps = vec![None; k * k * p];
        for ky in 0..k {
            for kx in 0..k {
                let t = ky * k + kx;
                for oy in 0..out_h {
                    for ox in 0..out_w {
                        let iy = (oy * stride) as i64 + ky as i64 - pad;
                        let ix = (ox * stride) as i64 + kx as i64 - pad;
                        let src = match (pad_index(iy, h, padding), pad_index(ix, w, padding)) {
                            (Some(y), Some(x)) => Some(y * w + x),
                            _ => None,
                        };
                        taps[t * p + oy * out_w + ox] = src;
                    }
                }
            }
        }
        Self {
            out_h,
            out_w,
            taps,
            kk: k * k,
        }
    }

    fn pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// im2col: rows indexed by (c_in, tap), columns by output pixel.
    fn gather(&self, x: &[f64], c_in: usize, plane: usize) -> Vec<f64> {
        let p = self.pixels();
        let mut cols = vec![0.0; c_in * self.kk * p];
        for ci in 0..c_in {
            let xs = &x[ci * plane..(ci + 1) * plane];
            for t in 0..self.kk {
                let row = &mut cols[(ci * self.kk + t) * p..(ci * self.kk + t + 1) * p];
                for (dst, src) in row.iter_mut().zip(&self.taps[t * p..(t + 1) * p]) {
                    if let Some(s) = src {
                        *dst = xs[*s];
                    }
                }
            }
        }
        cols
    }

    fn scatter(&self, cols: &[f64], c_in: usize, plane: usize) -> Vec<f64> {
        let p = self.pixels();
        let mut dx = vec![0.0; c_in * plane];
        for ci in 0..c_in {
            let xs = &mut dx[ci * plane..(ci + 1) * plane];
            for t in 0..self.kk {
                let row = &cols[(ci * self.kk + t) * p..(ci * self.kk + t + 1) * p];
                for (g, src) in row.iter().zip(&self.taps[t * p..(t + 1) * p]) {
                    if let Some(s) = src {
                        xs[*s] += g;
                    }
                }
            }
        }
        dx
    }
}

impl Graph {
    /// 2-D convolution of `x[C_in, H, W]` with `w[C_out, C_in, k, k]` and bias
    /// `b[C_out]`, "same" padding, stride 1 or 2.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: Padding) -> Var {
        let tx = self.value(x);
        let tw = self.value(w);
        let (c_in, h, wd) = (tx.shape[0], tx.shape[1], tx.shape[2]);
        let (c_out, k) = (tw.shape[0], tw.shape[2]);
        assert_eq!(tw.shape[1], c_in, "conv2d input channels");
        assert_eq!(self.value(b).len(), c_out, "conv2d bias");
        let plan = Rc::new(ConvPlan::new(h, wd, k, stride, padding));
        let p = plan.pixels();
        let kdim = c_in * plan.kk;
        let cols = Rc::new(plan.gather(&tx.data, c_in, h * wd));
        let mut out = vec![0.0; c_out * p];
        for (co, row) in out.chunks_exact_mut(p).enumerate() {
            row.fill(self.value(b).data[co]);
        }
        gemm(c_out, kdim, p, &tw.data, false, &cols, false, &mut out, 1.0);
        let value = Tensor::new(vec![c_out, plan.out_h, plan.out_w], out);
        let plane = h * wd;
        self.op(&[x, w, b], value, move |ctx| {
            let wt = ctx.inputs[1];
            let g = ctx.grad;
            // dW = G · colsᵀ
            let mut dw = vec![0.0; c_out * kdim];
            gemm(c_out, p, kdim, g, false, &cols, true, &mut dw, 0.0);
            // dcols = Wᵀ · G
            let mut dcols = vec![0.0; kdim * p];
            gemm(kdim, c_out, p, &wt.data, true, g, false, &mut dcols, 0.0);
            let dx = plan.scatter(&dcols, c_in, plane);
            let db = g.chunks_exact(p).map(|r| r.iter().sum()).collect();
            vec![Some(dx), Some(dw), Some(db)]
        })
    }

    /// Nearest-neighbour ×2 upsampling of `[C, H, W]`.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let (c, h, w) = (tx.shape[0], tx.shape[1], tx.shape[2]);
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    out[(ch * oh + y) * ow + xx] = tx.data[(ch * h + y / 2) * w + xx / 2];
                }
            }
        }
        self.op(&[x], Tensor::new(vec![c, oh, ow], out), move |ctx| {
            let mut dx = vec![0.0; c * h * w];
            for ch in 0..c {
                for y in 0..oh {
                    for xx in 0..ow {
                        dx[(ch * h + y / 2) * w + xx / 2] += ctx.grad[(ch * oh + y) * ow + xx];
                    }
                }
            }
            vec![Some(dx)]
        })
    }

    /// Per-channel normalization over the spatial axes of `[C, ...]`.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        let tx = self.value(x);
        let c = tx.shape[0];
        let plane = tx.len() / c;
        let mut out = vec![0.0; tx.len()];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let xs = &tx.data[ch * plane..(ch + 1) * plane];
            let mean = xs.iter().sum::<f64>() / plane as f64;
            let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / plane as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[ch] = is;
            for (o, v) in out[ch * plane..(ch + 1) * plane].iter_mut().zip(xs) {
                *o = (v - mean) * is;
            }
        }
        let value = Tensor::new(tx.shape.clone(), out);
        self.op(&[x], value, move |ctx| {
            let y = ctx.output;
            let mut dx = vec![0.0; y.len()];
            for ch in 0..c {
                let r = ch * plane..(ch + 1) * plane;
                let g = &ctx.grad[r.clone()];
                let ys = &y.data[r.clone()];
                let gm = g.iter().sum::<f64>() / plane as f64;
                let gym = g.iter().zip(ys).map(|(a, b)| a * b).sum::<f64>() / plane as f64;
                for ((d, gi), yi) in dx[r].iter_mut().zip(g).zip(ys) {
                    *d = inv_std[ch] * (gi - gm - yi * gym);
                }
            }
            vec![Some(dx)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::check::gradcheck;
    use super::*;

    fn vals(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn reflect_and_circular_indices() {
        assert_eq!(pad_index(-1, 4, Padding::Circular), Some(3));
        assert_eq!(pad_index(4, 4, Padding::Circular), Some(0));
        assert_eq!(pad_index(-1, 4, Padding::Reflect), Some(1));
        assert_eq!(pad_index(4, 4, Padding::Reflect), Some(2));
        assert_eq!(pad_index(-1, 4, Padding::Zero), None);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let (ci, co, h, w) = (2, 3, 5, 4);
        let x = vals(ci * h * w, 3);
        let wt = vals(co * ci * 9, 4);
        let b = vals(co, 5);
        let mut g = Graph::new();
        let xv = g.constant(Tensor::new(vec![ci, h, w], x.clone()));
        let wv = g.constant(Tensor::new(vec![co, ci, 3, 3], wt.clone()));
        let bv = g.constant(Tensor::new(vec![co], b.clone()));
        let y = g.conv2d(xv, wv, bv, 1, Padding::Circular);
        let out = g.value(y).data.clone();
        for o in 0..co {
            for yy in 0..h {
                for xx in 0..w {
                    let mut s = b[o];
                    for c in 0..ci {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (yy + h + ky - 1) % h;
                                let ix = (xx + w + kx - 1) % w;
                                s += wt[((o * ci + c) * 3 + ky) * 3 + kx] * x[(c * h + iy) * w + ix];
                            }
                        }
                    }
                    assert!((out[(o * h + yy) * w + xx] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_stack_gradcheck() {
        let (ci, co, h, w) = (2, 3, 8, 8);
        let nx = ci * h * w;
        let nw = co * ci * 9;
        let theta0: Vec<f64> = vals(nx + nw + co, 9);
        for (stride, padding) in [(1, Padding::Reflect), (2, Padding::Circular), (2, Padding::Zero)] {
            let f = |theta: &[f64]| {
                let mut g = Graph::new();
                let all = g.leaf(Tensor::new(vec![theta.len()], theta.to_vec()));
                let xs = g.slice(all, 0, nx);
                let xv = g.reshape(xs, vec![ci, h, w]);
                let ws = g.slice(all, nx, nw);
                let wv = g.reshape(ws, vec![co, ci, 3, 3]);
                let bv = g.slice(all, nx + nw, co);
                let y = g.conv2d(xv, wv, bv, stride, padding);
                let y = g.instance_norm(y, 1e-5);
                let y = g.upsample2(y);
                let y = g.silu(y);
                let sq = g.square(y);
                let l = g.mean(sq);
                let grads = g.backward(l).unwrap();
                (g.scalar_value(l), grads.get_or_zeros(all, theta.len()))
            };
            let coords: Vec<usize> = (0..theta0.len()).step_by(7).collect();
            let r = gradcheck(&f, &theta0, &coords, 1e-6);
            assert!(r.max_rel_error < 1e-4, "stride {stride} {padding:?}: {r:?}");
        }
    }

    #[test]
    fn instance_norm_statistics() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![2, 4, 4], vals(32, 11).iter().map(|v| 3.0 * v + 1.0).collect()));
        let y = g.instance_norm(x, 1e-5);
        let d = &g.value(y).data;
        for ch in 0..2 {
            let s = &d[ch * 16..(ch + 1) * 16];
            let m = s.iter().sum::<f64>() / 16.0;
            let sd = (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 16.0).sqrt();
            assert!(m.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-4);
        }
    }
}
