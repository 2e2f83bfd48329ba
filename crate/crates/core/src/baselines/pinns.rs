//! Per-instance physics-informed coordinate MLP.
//!
//! Input derivatives are propagated forward through the tanh layers as jets
//! (value, first and pure second directional derivatives), all on the tape, so
//! the PDE residual is exact for the network and differentiable in its weights.

use std::f64::consts::PI;
use std::rc::Rc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::bridge::{adam_step, AdamState};
use crate::config::Benchmark;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::observation::ObservationSet;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinnsConfig {
    pub hidden: usize,
    /// Number of hidden tanh layers.
    pub depth: usize,
    pub n_colloc: usize,
    pub lambda_obs: f64,
    pub lambda_phys: f64,
    pub lambda_bc: f64,
    pub n_bc: usize,
    pub lr: f64,
    pub epochs: usize,
    pub clip_norm: Option<f64>,
}

impl Default for PinnsConfig {
    fn default() -> Self {
        Self::desk(Benchmark::Burgers)
    }
}

impl PinnsConfig {
    pub fn paper(b: Benchmark) -> Self {
        let (hidden, depth) = match b {
            Benchmark::Kolmogorov => (256, 4),
            _ => (512, 6),
        };
        Self {
            hidden,
            depth,
            n_colloc: 8192,
            lambda_obs: 1.0,
            lambda_phys: 1.0,
            lambda_bc: 1.0,
            n_bc: 2048,
            lr: 1e-3,
            epochs: 100_000,
            clip_norm: (b == Benchmark::Darcy).then_some(1e-5),
        }
    }

    /// Narrower net and smaller batches so a fit takes about a minute on a CPU.
    pub fn desk(b: Benchmark) -> Self {
        Self {
            hidden: 64,
            depth: 4,
            n_colloc: 1024,
            n_bc: 256,
            epochs: 5000,
            ..Self::paper(b)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.depth == 0 || self.n_colloc == 0 || self.epochs == 0 {
            return Err(Error::Config("PINNs sizes and epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lambda_obs >= 0.0 && self.lambda_phys >= 0.0 && self.lambda_bc >= 0.0) {
            return Err(Error::Config("PINNs learning rate and weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// The PDE a fit is constrained by, with its grid conventions.
#[derive(Clone, Debug)]
pub enum PinnProblem {
    /// State `[nx, nt]`, `x_i = i/nx`, `t_j = j/(nt − 1)`.
    Burgers { nu: f64 },
    /// State `[n, n]` on `[0, 1]²` with `u = 0` on the boundary.
    Darcy { permeability: Field, forcing: f64 },
    /// State `[F, n, n]` on the 2π torus, frames at `γ_f = (f + 1)·span/F`.
    /// The network outputs vorticity and stream function.
    Kolmogorov {
        re: f64,
        span: f64,
        forcing_amplitude: f64,
        forcing_wavenumber: f64,
        drag: f64,
    },
}

impl PinnProblem {
    fn coord_dim(&self) -> usize {
        match self {
            PinnProblem::Kolmogorov { .. } => 3,
            _ => 2,
        }
    }

    fn feature_dim(&self) -> usize {
        match self {
            PinnProblem::Kolmogorov { .. } => 5,
            _ => 2,
        }
    }

    /// Coordinates whose second derivative enters the residual.
    fn second_derivatives(&self) -> Vec<bool> {
        match self {
            PinnProblem::Burgers { .. } => vec![true, false],
            PinnProblem::Darcy { .. } => vec![true, true],
            PinnProblem::Kolmogorov { .. } => vec![true, true, false],
        }
    }

    fn outputs(&self) -> usize {
        match self {
            PinnProblem::Kolmogorov { .. } => 2,
            _ => 1,
        }
    }

    /// Features and their first and second derivatives along each coordinate.
    fn features(&self, c: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        match self {
            PinnProblem::Kolmogorov { .. } => {
                let (s1, c1, s2, c2) = (c[0].sin(), c[0].cos(), c[1].sin(), c[1].cos());
                (
                    vec![s1, c1, s2, c2, c[2]],
                    vec![
                        vec![c1, -s1, 0.0, 0.0, 0.0],
                        vec![0.0, 0.0, c2, -s2, 0.0],
                        vec![0.0, 0.0, 0.0, 0.0, 1.0],
                    ],
                    vec![
                        vec![-s1, -c1, 0.0, 0.0, 0.0],
                        vec![0.0, 0.0, -s2, -c2, 0.0],
                        vec![0.0; 5],
                    ],
                )
            }
            _ => (c.to_vec(), vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.0; 2]; 2]),
        }
    }

    /// Coordinates of every grid node of a state with `dims`.
    fn grid(&self, dims: &[usize]) -> Result<Vec<Vec<f64>>> {
        Ok(match (self, dims) {
            (PinnProblem::Burgers { .. }, &[nx, nt]) => (0..nx * nt)
                .map(|k| vec![(k / nt) as f64 / nx as f64, (k % nt) as f64 / (nt - 1) as f64])
                .collect(),
            (PinnProblem::Darcy { .. }, &[n0, n1]) => (0..n0 * n1)
                .map(|k| vec![(k / n1) as f64 / (n0 - 1) as f64, (k % n1) as f64 / (n1 - 1) as f64])
                .collect(),
            (PinnProblem::Kolmogorov { span, .. }, &[f, n0, n1]) => (0..f * n0 * n1)
                .map(|k| {
                    let (fr, s) = (k / (n0 * n1), k % (n0 * n1));
                    vec![
                        2.0 * PI * (s / n1) as f64 / n0 as f64,
                        2.0 * PI * (s % n1) as f64 / n1 as f64,
                        (fr + 1) as f64 * span / f as f64,
                    ]
                })
                .collect(),
            _ => {
                return Err(Error::ShapeMismatch {
                    expected: vec![0; self.coord_dim()],
                    got: dims.to_vec(),
                })
            }
        })
    }

    fn sample_collocation(&self, dims: &[usize], n: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| match self {
                PinnProblem::Burgers { .. } => vec![rng.uniform(), rng.uniform()],
                PinnProblem::Darcy { .. } => vec![rng.uniform(), rng.uniform()],
                PinnProblem::Kolmogorov { span, .. } => {
                    let g0 = span / dims[0] as f64;
                    vec![2.0 * PI * rng.uniform(), 2.0 * PI * rng.uniform(), g0 + (span - g0) * rng.uniform()]
                }
            })
            .collect()
    }

    fn sample_boundary(n: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let s = rng.uniform();
                match rng.below(4) {
                    0 => vec![0.0, s],
                    1 => vec![1.0, s],
                    2 => vec![s, 0.0],
                    _ => vec![s, 1.0],
                }
            })
            .collect()
    }
}

/// Fully connected tanh network from `inputs` to `outputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordMlp {
    pub inputs: usize,
    pub hidden: usize,
    pub depth: usize,
    pub outputs: usize,
    pub flat: Vec<f64>,
}

impl CoordMlp {
    pub fn layer_shapes(inputs: usize, hidden: usize, depth: usize, outputs: usize) -> Vec<(usize, usize)> {
        let mut s = vec![(hidden, inputs)];
        s.extend(std::iter::repeat((hidden, hidden)).take(depth - 1));
        s.push((outputs, hidden));
        s
    }

    pub fn param_count(inputs: usize, hidden: usize, depth: usize, outputs: usize) -> usize {
        Self::layer_shapes(inputs, hidden, depth, outputs)
            .iter()
            .map(|(o, i)| o * i + o)
            .sum()
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init(inputs: usize, hidden: usize, depth: usize, outputs: usize, rng: &mut RngStream) -> Self {
        let mut flat = Vec::with_capacity(Self::param_count(inputs, hidden, depth, outputs));
        for (o, i) in Self::layer_shapes(inputs, hidden, depth, outputs) {
            let limit = (6.0 / (o + i) as f64).sqrt();
            flat.extend((0..o * i).map(|_| (2.0 * rng.uniform() - 1.0) * limit));
            flat.extend(std::iter::repeat(0.0).take(o));
        }
        Self {
            inputs,
            hidden,
            depth,
            outputs,
            flat,
        }
    }

    fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<(Var, Var)> {
        let mut at = 0;
        Self::layer_shapes(self.inputs, self.hidden, self.depth, self.outputs)
            .into_iter()
            .map(|(o, i)| {
                let w = Tensor::new(vec![o, i], self.flat[at..at + o * i].to_vec());
                let b = Tensor::new(vec![o], self.flat[at + o * i..at + o * i + o].to_vec());
                at += o * i + o;
                if trainable {
                    (g.leaf(w), g.leaf(b))
                } else {
                    (g.constant(w), g.constant(b))
                }
            })
            .collect()
    }
}

/// Network value with directional derivatives, each `[N, outputs]`.
struct Jet {
    value: Var,
    d1: Vec<Var>,
    d2: Vec<Option<Var>>,
}

/// `second[k]` selects the directions whose second derivative is carried.
fn jet_forward(g: &mut Graph, layers: &[(Var, Var)], phi: Var, d1: Vec<Var>, d2: Vec<Option<Var>>, second: &[bool]) -> Jet {
    let (mut h, mut dh, mut d2h) = (phi, d1, d2);
    for (l, &(w, b)) in layers.iter().enumerate() {
        let z = g.matmul_t(h, w);
        let z = g.add_row(z, b);
        let dz: Vec<Var> = dh.iter().map(|&d| g.matmul_t(d, w)).collect();
        let d2z: Vec<Option<Var>> = d2h.iter().map(|d| d.map(|d| g.matmul_t(d, w))).collect();
        if l + 1 == layers.len() {
            return Jet {
                value: z,
                d1: dz,
                d2: d2z,
            };
        }
        let t = g.tanh(z);
        let t2 = g.square(t);
        let neg = g.scale(t2, -1.0);
        let tp = g.add_scalar(neg, 1.0);
        let ttp = g.mul(t, tp);
        let tpp = g.scale(ttp, -2.0);
        let mut next_d2 = Vec::with_capacity(dz.len());
        for (k, &d) in dz.iter().enumerate() {
            if !second[k] {
                next_d2.push(None);
                continue;
            }
            let sq = g.square(d);
            let mut v = g.mul(tpp, sq);
            if let Some(d2) = d2z[k] {
                let lin = g.mul(tp, d2);
                v = g.add(v, lin);
            }
            next_d2.push(Some(v));
        }
        dh = dz.iter().map(|&d| g.mul(tp, d)).collect();
        d2h = next_d2;
        h = t;
    }
    unreachable!("network has an output layer")
}

/// Inputs for a batch of coordinates: features plus first/second feature derivatives.
fn feature_vars(g: &mut Graph, problem: &PinnProblem, coords: &[Vec<f64>], with_derivs: bool) -> (Var, Vec<Var>, Vec<Option<Var>>) {
    let n = coords.len();
    let (fd, cd) = (problem.feature_dim(), problem.coord_dim());
    let mut phi = Vec::with_capacity(n * fd);
    let mut d1 = vec![Vec::with_capacity(n * fd); cd];
    let mut d2 = vec![Vec::with_capacity(n * fd); cd];
    for c in coords {
        let (f, j1, j2) = problem.features(c);
        phi.extend(f);
        for k in 0..cd {
            d1[k].extend(&j1[k]);
            d2[k].extend(&j2[k]);
        }
    }
    let phi = g.constant(Tensor::new(vec![n, fd], phi));
    if !with_derivs {
        return (phi, Vec::new(), Vec::new());
    }
    let d1v = d1.into_iter().map(|d| g.constant(Tensor::new(vec![n, fd], d))).collect();
    let d2v = d2
        .into_iter()
        .map(|d| {
            if d.iter().all(|&v| v == 0.0) {
                None
            } else {
                Some(g.constant(Tensor::new(vec![n, fd], d)))
            }
        })
        .collect();
    (phi, d1v, d2v)
}

/// Value of a grid field at the node nearest to `c` on `[0, 1]²`.
fn nearest_node(f: &Field, n: usize, c: &[f64]) -> f64 {
    let i = (c[0] * (n - 1) as f64).round().clamp(0.0, (n - 1) as f64) as usize;
    let j = (c[1] * (n - 1) as f64).round().clamp(0.0, (n - 1) as f64) as usize;
    f.values()[i * n + j]
}

fn mean_square(g: &mut Graph, r: Var) -> Var {
    let n = g.value(r).len() as f64;
    let w = Rc::new(vec![1.0 / n; n as usize]);
    g.weighted_sum_sq(r, w)
}

/// Zero-filled second derivative when the jet carries none.
fn second(g: &mut Graph, jet: &Jet, k: usize, col: usize) -> Var {
    match jet.d2[k] {
        Some(v) => g.column(v, col),
        None => {
            let n = g.shape(jet.value)[0];
            g.constant(Tensor::zeros(vec![n]))
        }
    }
}

/// PDE residual at `coords` as a tape vector (or vectors) of length N.
fn physics_residuals(g: &mut Graph, layers: &[(Var, Var)], problem: &PinnProblem, coords: &[Vec<f64>], dims: &[usize]) -> Vec<Var> {
    let (phi, d1, d2) = feature_vars(g, problem, coords, true);
    let jet = jet_forward(g, layers, phi, d1, d2, &problem.second_derivatives());
    match problem {
        PinnProblem::Burgers { nu } => {
            let u = g.column(jet.value, 0);
            let ux = g.column(jet.d1[0], 0);
            let ut = g.column(jet.d1[1], 0);
            let uxx = second(g, &jet, 0, 0);
            let adv = g.mul(u, ux);
            let r = g.add(ut, adv);
            vec![g.axpy(r, -nu, uxx)]
        }
        PinnProblem::Darcy { permeability, forcing } => {
            let n = dims[0];
            let a: Vec<f64> = coords.iter().map(|c| -nearest_node(permeability, n, c)).collect();
            let uxx = second(g, &jet, 0, 0);
            let uyy = second(g, &jet, 1, 0);
            let lap = g.add(uxx, uyy);
            let a = g.constant(Tensor::new(vec![coords.len()], a));
            let r = g.mul(a, lap);
            vec![g.add_scalar(r, -forcing)]
        }
        PinnProblem::Kolmogorov {
            re,
            forcing_amplitude,
            forcing_wavenumber,
            drag,
            ..
        } => {
            let w = g.column(jet.value, 0);
            let w1 = g.column(jet.d1[0], 0);
            let w2 = g.column(jet.d1[1], 0);
            let wt = g.column(jet.d1[2], 0);
            let p1 = g.column(jet.d1[0], 1);
            let p2 = g.column(jet.d1[1], 1);
            let w11 = second(g, &jet, 0, 0);
            let w22 = second(g, &jet, 1, 0);
            let p11 = second(g, &jet, 0, 1);
            let p22 = second(g, &jet, 1, 1);
            // v = (∂₂ψ, −∂₁ψ)
            let a1 = g.mul(p2, w1);
            let a2 = g.mul(p1, w2);
            let adv = g.sub(a1, a2);
            let lap_w = g.add(w11, w22);
            let forcing: Vec<f64> = coords
                .iter()
                .map(|c| forcing_amplitude * (forcing_wavenumber * c[1]).cos())
                .collect();
            let mut r = g.add(wt, adv);
            r = g.axpy(r, -1.0 / re, lap_w);
            r = g.axpy(r, *drag, w);
            r = g.add_const(r, &forcing);
            let lap_p = g.add(p11, p22);
            let r2 = g.sub(lap_p, w);
            vec![r, r2]
        }
    }
}

fn evaluate(mlp: &CoordMlp, problem: &PinnProblem, coords: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(coords.len());
    for chunk in coords.chunks(4096) {
        let mut g = Graph::new();
        let layers = mlp.bind(&mut g, false);
        let (phi, _, _) = feature_vars(&mut g, problem, chunk, false);
        let jet = jet_forward(&mut g, &layers, phi, Vec::new(), Vec::new(), &[]);
        let v = g.column(jet.value, 0);
        out.extend_from_slice(&g.value(v).data);
    }
    out
}

/// Residual values and the same residual by central differences of the
/// network, at `coords`; used to verify the jet propagation.
pub fn pinn_residual_check(mlp: &CoordMlp, problem: &PinnProblem, dims: &[usize], coords: &[Vec<f64>], step: f64) -> (Vec<f64>, Vec<f64>) {
    let mut g = Graph::new();
    let layers = mlp.bind(&mut g, false);
    let r = physics_residuals(&mut g, &layers, problem, coords, dims);
    let exact = g.value(r[0]).data.clone();
    let eval = |c: &[f64], col: usize| {
        let mut g = Graph::new();
        let layers = mlp.bind(&mut g, false);
        let (phi, _, _) = feature_vars(&mut g, problem, &[c.to_vec()], false);
        let jet = jet_forward(&mut g, &layers, phi, Vec::new(), Vec::new(), &[]);
        g.value(jet.value).data[col]
    };
    let shifted = |c: &[f64], k: usize, d: f64| {
        let mut c = c.to_vec();
        c[k] += d;
        c
    };
    let d1 = |c: &[f64], k: usize, col: usize| (eval(&shifted(c, k, step), col) - eval(&shifted(c, k, -step), col)) / (2.0 * step);
    let d2 = |c: &[f64], k: usize, col: usize| {
        (eval(&shifted(c, k, step), col) - 2.0 * eval(c, col) + eval(&shifted(c, k, -step), col)) / (step * step)
    };
    let numeric = coords
        .iter()
        .map(|c| match problem {
            PinnProblem::Burgers { nu } => d1(c, 1, 0) + eval(c, 0) * d1(c, 0, 0) - nu * d2(c, 0, 0),
            PinnProblem::Darcy { permeability, forcing } => {
                -nearest_node(permeability, dims[0], c) * (d2(c, 0, 0) + d2(c, 1, 0)) - forcing
            }
            PinnProblem::Kolmogorov {
                re,
                forcing_amplitude,
                forcing_wavenumber,
                drag,
                ..
            } => {
                let adv = d1(c, 1, 1) * d1(c, 0, 0) - d1(c, 0, 1) * d1(c, 1, 0);
                d1(c, 2, 0) + adv - (d2(c, 0, 0) + d2(c, 1, 0)) / re
                    + drag * eval(c, 0)
                    + forcing_amplitude * (forcing_wavenumber * c[1]).cos()
            }
        })
        .collect();
    (exact, numeric)
}

#[derive(Clone, Debug)]
pub struct PinnsOutcome {
    pub field: Field,
    pub mlp: CoordMlp,
    pub losses: Vec<f64>,
    /// Set when a non-finite loss stopped the fit early; `field` then comes
    /// from the best parameters seen.
    pub aborted: bool,
    pub seconds: f64,
}

/// Fit a coordinate network to one instance and evaluate it on the full grid.
pub fn pinns_fit(obs: &ObservationSet, problem: &PinnProblem, cfg: &PinnsConfig, rng: &mut RngStream) -> Result<PinnsOutcome> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let start = Instant::now();
    let dims = obs.dims().to_vec();
    let grid = problem.grid(&dims)?;
    let observed: Vec<usize> = (0..grid.len()).filter(|&k| obs.is_observed(k)).collect();
    let obs_coords: Vec<Vec<f64>> = observed.iter().map(|&k| grid[k].clone()).collect();
    let neg_y: Vec<f64> = observed.iter().map(|&k| -obs.values().values()[k]).collect();
    let mut mlp = CoordMlp::init(problem.feature_dim(), cfg.hidden, cfg.depth, problem.outputs(), rng);
    let mut adam = AdamState::new(mlp.flat.len());
    let mut best = (f64::INFINITY, mlp.flat.clone());
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut aborted = false;
    for _ in 0..cfg.epochs {
        let mut g = Graph::new();
        let layers = mlp.bind(&mut g, true);
        let (phi, _, _) = feature_vars(&mut g, problem, &obs_coords, false);
        let jet = jet_forward(&mut g, &layers, phi, Vec::new(), Vec::new(), &[]);
        let pred = g.column(jet.value, 0);
        let diff = g.add_const(pred, &neg_y);
        let l_obs = mean_square(&mut g, diff);
        let mut loss = g.scale(l_obs, cfg.lambda_obs);
        if cfg.lambda_phys > 0.0 {
            let colloc = problem.sample_collocation(&dims, cfg.n_colloc, rng);
            for r in physics_residuals(&mut g, &layers, problem, &colloc, &dims) {
                let l = mean_square(&mut g, r);
                loss = g.axpy(loss, cfg.lambda_phys, l);
            }
        }
        if let (PinnProblem::Darcy { .. }, true) = (problem, cfg.lambda_bc > 0.0 && cfg.n_bc > 0) {
            let bc = PinnProblem::sample_boundary(cfg.n_bc, rng);
            let (phi, _, _) = feature_vars(&mut g, problem, &bc, false);
            let jet = jet_forward(&mut g, &layers, phi, Vec::new(), Vec::new(), &[]);
            let u = g.column(jet.value, 0);
            let l = mean_square(&mut g, u);
            loss = g.axpy(loss, cfg.lambda_bc, l);
        }
        let value = g.scalar_value(loss);
        if !value.is_finite() {
            aborted = true;
            break;
        }
        if value < best.0 {
            best = (value, mlp.flat.clone());
        }
        losses.push(value);
        let grads = g.backward(loss)?;
        let mut grad = Vec::with_capacity(mlp.flat.len());
        for &(w, b) in &layers {
            grad.extend(grads.get_or_zeros(w, g.value(w).len()));
            grad.extend(grads.get_or_zeros(b, g.value(b).len()));
        }
        adam_step(&mut mlp.flat, &grad, &mut adam, cfg.lr, cfg.clip_norm.unwrap_or(f64::INFINITY))?;
    }
    if aborted || mlp.flat.iter().any(|v| !v.is_finite()) {
        aborted = true;
        mlp.flat = best.1;
    }
    let values = evaluate(&mlp, problem, &grid);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("PINN prediction is not finite".into()));
    }
    let field = Field::new(dims, values)?.with_tags(obs.values().tags());
    Ok(PinnsOutcome {
        field,
        mlp,
        losses,
        aborted,
        seconds: start.elapsed().as_secs_f64(),
    })
}
