use super::{Graph, Tensor, Var};

fn same_shape(g: &Graph, a: Var, b: Var) {
    assert_eq!(g.shape(a), g.shape(b), "shape mismatch in elementwise op");
}

impl Graph {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        same_shape(self, a, b);
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape.clone(), data);
        self.op(&[a, b], value, |c| vec![Some(c.grad.to_vec()), Some(c.grad.to_vec())])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        same_shape(self, a, b);
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x - y).collect();
        let value = Tensor::new(ta.shape.clone(), data);
        self.op(&[a, b], value, |c| {
            vec![Some(c.grad.to_vec()), Some(c.grad.iter().map(|g| -g).collect())]
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        same_shape(self, a, b);
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape.clone(), data);
        self.op(&[a, b], value, |c| {
            let (x, y) = (c.inputs[0], c.inputs[1]);
            vec![
                Some(c.grad.iter().zip(&y.data).map(|(g, v)| g * v).collect()),
                Some(c.grad.iter().zip(&x.data).map(|(g, v)| g * v).collect()),
            ]
        })
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ta = self.value(a);
        let value = Tensor::new(ta.shape.clone(), ta.data.iter().map(|x| x * s).collect());
        self.op(&[a], value, move |c| vec![Some(c.grad.iter().map(|g| g * s).collect())])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let ta = self.value(a);
        let value = Tensor::new(ta.shape.clone(), ta.data.iter().map(|x| x + s).collect());
        self.op(&[a], value, |c| vec![Some(c.grad.to_vec())])
    }

    /// `a + s * b` with a fixed scalar `s`.
    pub fn axpy(&mut self, a: Var, s: f64, b: Var) -> Var {
        same_shape(self, a, b);
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + s * y).collect();
        let value = Tensor::new(ta.shape.clone(), data);
        self.op(&[a, b], value, move |c| {
            vec![Some(c.grad.to_vec()), Some(c.grad.iter().map(|g| g * s).collect())]
        })
    }

    /// Elementwise map with its derivative written in terms of input and output.
    pub fn unary(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var {
        let ta = self.value(a);
        let value = Tensor::new(ta.shape.clone(), ta.data.iter().map(|&x| f(x)).collect());
        self.op(&[a], value, move |c| {
            let x = c.inputs[0];
            vec![Some(
                c.grad
                    .iter()
                    .zip(x.data.iter().zip(&c.output.data))
                    .map(|(g, (&xi, &yi))| g * df(xi, yi))
                    .collect(),
            )]
        })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x / (1.0 + (-x).exp()),
            |x, _| {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, |_, y| if y > 0.0 { 0.5 / y } else { 0.0 })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let n = ta.len();
        let value = Tensor::scalar(ta.data.iter().sum());
        self.op(&[a], value, move |c| vec![Some(vec![c.grad[0]; n])])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum of squares of the entries selected by `weights` (0/1 or general
    /// nonnegative weights), i.e. `Σ w_i a_i²`.
    pub fn weighted_sum_sq(&mut self, a: Var, weights: std::rc::Rc<Vec<f64>>) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.len(), weights.len());
        let value = Tensor::scalar(ta.data.iter().zip(weights.iter()).map(|(x, w)| w * x * x).sum());
        self.op(&[a], value, move |c| {
            let g = c.grad[0];
            vec![Some(
                c.inputs[0]
                    .data
                    .iter()
                    .zip(weights.iter())
                    .map(|(x, w)| 2.0 * g * w * x)
                    .collect(),
            )]
        })
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let ta = self.value(a);
        let value = Tensor::new(shape, ta.data.clone());
        self.op(&[a], value, |c| vec![Some(c.grad.to_vec())])
    }

    /// Contiguous flat slice `[start, start + len)`, returned with shape `[len]`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ta = self.value(a);
        let total = ta.len();
        let value = Tensor::new(vec![len], ta.data[start..start + len].to_vec());
        self.op(&[a], value, move |c| {
            let mut g = vec![0.0; total];
            g[start..start + len].copy_from_slice(c.grad);
            vec![Some(g)]
        })
    }

    /// Concatenate along the leading axis (channels for `[C, H, W]`).
    pub fn concat0(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape[1..], tb.shape[1..], "concat0 trailing dims differ");
        let mut shape = ta.shape.clone();
        shape[0] += tb.shape[0];
        let split = ta.len();
        let mut data = ta.data.clone();
        data.extend_from_slice(&tb.data);
        self.op(&[a, b], Tensor::new(shape, data), move |c| {
            vec![Some(c.grad[..split].to_vec()), Some(c.grad[split..].to_vec())]
        })
    }

    /// `mask ⊙ y + (1 − mask) ⊙ x` with fixed mask and data.
    pub fn project(&mut self, x: Var, mask: std::rc::Rc<Vec<f64>>, y: std::rc::Rc<Vec<f64>>) -> Var {
        let tx = self.value(x);
        assert_eq!(tx.len(), mask.len());
        let data = tx
            .data
            .iter()
            .zip(mask.iter().zip(y.iter()))
            .map(|(&xi, (&m, &yi))| if m != 0.0 { yi } else { xi })
            .collect();
        let value = Tensor::new(tx.shape.clone(), data);
        self.op(&[x], value, move |c| {
            vec![Some(
                c.grad
                    .iter()
                    .zip(mask.iter())
                    .map(|(g, &m)| if m != 0.0 { 0.0 } else { *g })
                    .collect(),
            )]
        })
    }

    /// Add a fixed tensor (e.g. frozen noise).
    pub fn add_const(&mut self, a: Var, t: &[f64]) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.len(), t.len());
        let data = ta.data.iter().zip(t).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape.clone(), data);
        self.op(&[a], value, |c| vec![Some(c.grad.to_vec())])
    }

    /// Per-channel affine map of a `[C, ...]` tensor: `y_c = gamma_c * x_c + beta_c`.
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let tx = self.value(x);
        let c_count = tx.shape[0];
        assert_eq!(self.value(gamma).len(), c_count);
        assert_eq!(self.value(beta).len(), c_count);
        let plane = tx.len() / c_count;
        let (tg, tb) = (&self.value(gamma).data, &self.value(beta).data);
        let mut data = tx.data.clone();
        for c in 0..c_count {
            for v in &mut data[c * plane..(c + 1) * plane] {
                *v = tg[c] * *v + tb[c];
            }
        }
        let value = Tensor::new(tx.shape.clone(), data);
        self.op(&[x, gamma, beta], value, move |ctx| {
            let (x, gamma) = (ctx.inputs[0], ctx.inputs[1]);
            let mut dx = vec![0.0; x.len()];
            let mut dg = vec![0.0; c_count];
            let mut db = vec![0.0; c_count];
            for c in 0..c_count {
                for p in c * plane..(c + 1) * plane {
                    let g = ctx.grad[p];
                    dx[p] = g * gamma.data[c];
                    dg[c] += g * x.data[p];
                    db[c] += g;
                }
            }
            vec![Some(dx), Some(dg), Some(db)]
        })
    }

    /// Broadcast-add a row vector `b[n]` to each row of `x[m, n]`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let tx = self.value(x);
        let n = *tx.shape.last().unwrap();
        assert_eq!(self.value(b).len(), n);
        let tb = &self.value(b).data;
        let data = tx.data.iter().enumerate().map(|(i, v)| v + tb[i % n]).collect();
        let value = Tensor::new(tx.shape.clone(), data);
        self.op(&[x, b], value, move |c| {
            let mut db = vec![0.0; n];
            for (i, g) in c.grad.iter().enumerate() {
                db[i % n] += g;
            }
            vec![Some(c.grad.to_vec()), Some(db)]
        })
    }

    /// Column `col` of a `[m, n]` matrix as a `[m]` vector.
    pub fn column(&mut self, x: Var, col: usize) -> Var {
        let tx = self.value(x);
        let (m, n) = (tx.shape[0], tx.shape[1]);
        let data = (0..m).map(|i| tx.data[i * n + col]).collect();
        self.op(&[x], Tensor::new(vec![m], data), move |c| {
            let mut g = vec![0.0; m * n];
            for i in 0..m {
                g[i * n + col] = c.grad[i];
            }
            vec![Some(g)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::check::gradcheck;
    use super::*;
    use std::rc::Rc;

    fn det_values(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn elementwise_chain_gradcheck() {
        let x0 = det_values(6, 1);
        let other = det_values(6, 2);
        let mask = Rc::new(vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let y = Rc::new(vec![0.0, 2.0, 0.0, 0.0, -1.0, 0.0]);
        let f = |x: &[f64]| {
            let mut g = Graph::new();
            let a = g.leaf(Tensor::new(vec![6], x.to_vec()));
            let b = g.constant(Tensor::new(vec![6], other.clone()));
            let p = g.project(a, mask.clone(), y.clone());
            let t = g.tanh(p);
            let s = g.silu(a);
            let m = g.mul(t, s);
            let q = g.axpy(m, 0.3, b);
            let q = g.mul(q, a);
            let sq = g.square(q);
            let l = g.mean(sq);
            let grads = g.backward(l).unwrap();
            (g.scalar_value(l), grads.get_or_zeros(a, 6))
        };
        let report = gradcheck(&f, &x0, &[0, 1, 2, 3, 4, 5], 1e-6);
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn projection_gradient_zero_on_observed() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]));
        let p = g.project(a, Rc::new(vec![0.0, 1.0, 0.0]), Rc::new(vec![0.0, 9.0, 0.0]));
        assert_eq!(g.value(p).data, vec![1.0, 9.0, 3.0]);
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn constants_do_not_record_backward() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(vec![2], vec![1.0, 2.0]));
        let b = g.square(a);
        assert!(!g.requires_grad(b));
    }
}
