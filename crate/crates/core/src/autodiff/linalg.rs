use super::{Graph, Tensor, Var};

/// `C = A·B + beta·C` for row-major `A[m,k]`, `B[k,n]`, `C[m,n]`; either
/// factor may be supplied transposed (stored as `[k,m]` / `[n,k]`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides describe exactly the slices checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Graph {
    /// `x[m, k] · wᵀ` for a weight stored as `w[n, k]`; returns `[m, n]`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let (tx, tw) = (self.value(x), self.value(w));
        let (m, k) = (tx.shape[0], tx.shape[1]);
        let n = tw.shape[0];
        assert_eq!(tw.shape[1], k, "matmul_t inner dims");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &tx.data, false, &tw.data, true, &mut out, 0.0);
        self.op(&[x, w], Tensor::new(vec![m, n], out), move |c| {
            let (x, w) = (c.inputs[0], c.inputs[1]);
            let mut dx = vec![0.0; m * k];
            gemm(m, n, k, c.grad, false, &w.data, false, &mut dx, 0.0);
            let mut dw = vec![0.0; n * k];
            gemm(n, m, k, c.grad, true, &x.data, false, &mut dw, 0.0);
            vec![Some(dx), Some(dw)]
        })
    }

    /// Dense layer on a vector: `w[n, k] · v[k] + b[n]`.
    pub fn linear(&mut self, v: Var, w: Var, b: Var) -> Var {
        let k = self.value(v).len();
        let row = self.reshape(v, vec![1, k]);
        let y = self.matmul_t(row, w);
        let y = self.add_row(y, b);
        let n = self.value(b).len();
        self.reshape(y, vec![n])
    }
}
