//! LF-trained EDM prior with observation and physics guidance at sampling time.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::bridge::{adam_step, AdamState};
use crate::config::Benchmark;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::net::{channel_shape, init_params, load_checkpoint, save_checkpoint_with_meta, velocity, NetConfig, NetParams};
use crate::observation::ObservationSet;
use crate::residual::ResidualOperator;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub lambda_obs: f64,
    pub lambda_phys: f64,
    pub lambda_bc: f64,
    /// Fraction of the steps after which physics guidance is switched on.
    pub stage_switch: f64,
    /// Multiplier on the observation step once physics guidance is active.
    pub late_obs_factor: f64,
    pub prior_iterations: usize,
    pub prior_lr: f64,
    pub prior_batch: usize,
    /// Log-normal training noise: `ln σ ~ N(p_mean, p_std²)`.
    pub p_mean: f64,
    pub p_std: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self::desk(Benchmark::Burgers)
    }
}

impl GuidanceConfig {
    pub fn paper(b: Benchmark) -> Self {
        let (lambda_obs, lambda_phys, lambda_bc) = match b {
            Benchmark::Burgers => (320.0, 100.0, 0.0),
            Benchmark::Darcy => (1e-3, 1e-1, 1e-1),
            Benchmark::Kolmogorov => (3.2e6, 1000.0, 0.0),
        };
        Self {
            steps: 2000,
            sigma_min: 0.002,
            sigma_max: 80.0,
            rho: 7.0,
            lambda_obs,
            lambda_phys,
            lambda_bc,
            stage_switch: 0.8,
            late_obs_factor: 0.1,
            prior_iterations: 20_000,
            prior_lr: 1e-3,
            prior_batch: 4,
            p_mean: -1.2,
            p_std: 1.2,
        }
    }

    pub fn desk(b: Benchmark) -> Self {
        Self {
            steps: 200,
            prior_iterations: 1000,
            ..Self::paper(b)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 || self.prior_batch == 0 {
            return Err(Error::Config("guidance needs at least 2 steps and a positive batch".into()));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.rho > 0.0) {
            return Err(Error::Config(format!(
                "invalid noise schedule ({}, {}, {})",
                self.sigma_min, self.sigma_max, self.rho
            )));
        }
        Ok(())
    }
}

/// `σ_i = (σ_max^{1/ρ} + i/(N−1)·(σ_min^{1/ρ} − σ_max^{1/ρ}))^ρ`, `i = 0..N`.
pub fn karras_sigma_schedule(n: usize, sigma_min: f64, sigma_max: f64, rho: f64) -> Result<Vec<f64>> {
    if n < 2 || !(sigma_min > 0.0 && sigma_min < sigma_max && rho > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "schedule needs N >= 2, 0 < σ_min < σ_max and ρ > 0 (got N={n}, {sigma_min}, {sigma_max}, {rho})"
        )));
    }
    let (a, b) = (sigma_max.powf(1.0 / rho), sigma_min.powf(1.0 / rho));
    let mut s: Vec<f64> = (0..n)
        .map(|i| (a + i as f64 / (n - 1) as f64 * (b - a)).powf(rho))
        .collect();
    s[0] = sigma_max;
    s[n - 1] = sigma_min;
    Ok(s)
}

/// Denoiser `D(x; σ) = c_skip x + c_out F(c_in x; ln(σ)/4)` around a U-Net `F`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdmPrior {
    pub params: NetParams,
    pub sigma_data: f64,
}

struct Precond {
    skip: f64,
    out: f64,
    input: f64,
    noise: f64,
}

fn precond(sigma: f64, sd: f64) -> Precond {
    let r = (sigma * sigma + sd * sd).sqrt();
    Precond {
        skip: sd * sd / (r * r),
        out: sigma * sd / r,
        input: 1.0 / r,
        noise: sigma.ln() / 4.0,
    }
}

impl EdmPrior {
    pub fn denoise(&self, x: &Field, sigma: f64) -> Result<Field> {
        let p = precond(sigma, self.sigma_data);
        let mut g = Graph::new();
        let net = self.params.bind(&mut g, false);
        let xin = g.constant(Tensor::new(x.dims().to_vec(), x.values().iter().map(|v| v * p.input).collect()));
        let f = velocity(&mut g, &net, self.params.config(), xin, p.noise);
        let values = x
            .values()
            .iter()
            .zip(&g.value(f).data)
            .map(|(xi, fi)| p.skip * xi + p.out * fi)
            .collect();
        x.with_values(values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = BTreeMap::from([("sigma_data".to_string(), self.sigma_data)]);
        save_checkpoint_with_meta(path, &self.params, 0, None, meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let sigma_data = *ck
            .meta
            .get("sigma_data")
            .ok_or_else(|| Error::Config(format!("{} is not a guidance prior checkpoint", path.display())))?;
        Ok(Self {
            params: ck.params,
            sigma_data,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PriorOutcome {
    pub prior: EdmPrior,
    pub losses: Vec<f64>,
}

/// Denoising score matching on LF fields only.
pub fn train_edm_prior(lf: &[Field], net: &NetConfig, cfg: &GuidanceConfig, rng: &mut RngStream) -> Result<PriorOutcome> {
    cfg.validate()?;
    let first = lf.first().ok_or_else(|| Error::InvalidArgument("no LF fields to train on".into()))?;
    channel_shape(net, first.dims())?;
    let all: Vec<f64> = lf.iter().flat_map(|f| f.values().iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let sigma_data = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt().max(1e-8);
    let mut params = init_params(net, rng)?;
    let mut adam = AdamState::new(params.len());
    let mut losses = Vec::with_capacity(cfg.prior_iterations);
    for it in 0..cfg.prior_iterations {
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for _ in 0..cfg.prior_batch {
            let x = &lf[rng.below(lf.len())];
            let sigma = (cfg.p_mean + cfg.p_std * rng.normal()).exp();
            let p = precond(sigma, sigma_data);
            let noisy: Vec<f64> = x.values().iter().map(|v| v + sigma * rng.normal()).collect();
            // D − x = c_out (F − target), and the EDM weight is 1/c_out².
            let neg_target: Vec<f64> = x
                .values()
                .iter()
                .zip(&noisy)
                .map(|(xi, ni)| -(xi - p.skip * ni) / p.out)
                .collect();
            let mut g = Graph::new();
            let vars = params.bind(&mut g, true);
            let xin = g.constant(Tensor::new(x.dims().to_vec(), noisy.iter().map(|v| v * p.input).collect()));
            let f = velocity(&mut g, &vars, net, xin, p.noise);
            let d = g.add_const(f, &neg_target);
            let sq = g.square(d);
            let l = g.mean(sq);
            loss += g.scalar_value(l);
            let grads = g.backward(l)?;
            grad.iter_mut().zip(vars.gradient(&g, &grads)).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / cfg.prior_batch as f64;
        grad.iter_mut().for_each(|v| *v *= inv);
        let loss = loss * inv;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("prior loss became non-finite at iteration {it}")));
        }
        losses.push(loss);
        adam_step(params.flat_mut(), &grad, &mut adam, cfg.prior_lr, 1.0)?;
    }
    Ok(PriorOutcome {
        prior: EdmPrior { params, sigma_data },
        losses,
    })
}

/// Gradient of `‖r‖₂ / n` given `∇(½‖r‖²)` direction `jt_r` and `‖r‖`; zero when `r = 0`.
fn normalized(jt_r: Vec<f64>, norm: f64, n: usize) -> Vec<f64> {
    if norm == 0.0 || n == 0 {
        return vec![0.0; jt_r.len()];
    }
    let s = 1.0 / (norm * n as f64);
    jt_r.into_iter().map(|v| v * s).collect()
}

/// Nodes on the outer edge of an `[n0, n1]` grid.
pub fn boundary_mask(n0: usize, n1: usize) -> Vec<bool> {
    (0..n0 * n1)
        .map(|k| {
            let (i, j) = (k / n1, k % n1);
            i == 0 || j == 0 || i + 1 == n0 || j + 1 == n1
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GuidanceOutcome {
    pub field: Field,
    /// Observation misfit `‖M⊙(x − y)‖` after each step.
    pub misfit: Vec<f64>,
}

/// EDM Heun sampling with observation guidance throughout, physics guidance
/// after `stage_switch`, and an optional boundary term (Darcy).
///
/// Each guidance loss is an ℓ2 norm divided by its node count; a weight of
/// zero skips the term, so all-zero weights give the unconditional sampler.
pub fn guidance_sample(
    prior: &EdmPrior,
    obs: &ObservationSet,
    op: &dyn ResidualOperator,
    boundary: Option<&[bool]>,
    cfg: &GuidanceConfig,
    rng: &mut RngStream,
) -> Result<GuidanceOutcome> {
    cfg.validate()?;
    if op.dims() != obs.dims() {
        return Err(Error::ShapeMismatch {
            expected: obs.dims().to_vec(),
            got: op.dims().to_vec(),
        });
    }
    let mut sigmas = karras_sigma_schedule(cfg.steps, cfg.sigma_min, cfg.sigma_max, cfg.rho)?;
    sigmas.push(0.0);
    let dims = obs.dims().to_vec();
    let mask = obs.mask().values();
    let y = obs.values().values();
    let n_obs = obs.observed_count();
    let valid = op.valid();
    let n_valid = valid.iter().filter(|&&v| v).count();
    let switch = (cfg.stage_switch * cfg.steps as f64).floor() as usize;
    let mut x = Field::new(dims.clone(), rng.normals(obs.mask().len()).into_iter().map(|z| z * sigmas[0]).collect())?;
    let mut misfit = Vec::with_capacity(cfg.steps);
    for i in 0..cfg.steps {
        let (s, s_next) = (sigmas[i], sigmas[i + 1]);
        let d0 = prior.denoise(&x, s)?;
        let slope: Vec<f64> = x.values().iter().zip(d0.values()).map(|(a, b)| (a - b) / s).collect();
        let mut next: Vec<f64> = x.values().iter().zip(&slope).map(|(a, d)| a + (s_next - s) * d).collect();
        if s_next > 0.0 {
            let xe = x.with_values(next.clone())?;
            let d1 = prior.denoise(&xe, s_next)?;
            next = x
                .values()
                .iter()
                .zip(slope.iter().zip(xe.values().iter().zip(d1.values())))
                .map(|(a, (d, (e, dn)))| a + (s_next - s) * 0.5 * (d + (e - dn) / s_next))
                .collect();
        }
        let late = i >= switch;
        let w_obs = if late { cfg.lambda_obs * cfg.late_obs_factor } else { cfg.lambda_obs };
        if w_obs != 0.0 {
            let r: Vec<f64> = next.iter().zip(mask.iter().zip(y)).map(|(v, (m, yv))| m * (v - yv)).collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (v, gk) in next.iter_mut().zip(normalized(r, norm, n_obs)) {
                *v -= w_obs * gk;
            }
        }
        if late && cfg.lambda_phys != 0.0 {
            let mut r = op.apply(&next);
            r.iter_mut().zip(valid).for_each(|(v, &ok)| if !ok { *v = 0.0 });
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            let jt = op.vjp(&next, &r);
            for (v, gk) in next.iter_mut().zip(normalized(jt, norm, n_valid)) {
                *v -= cfg.lambda_phys * gk;
            }
        }
        if let (Some(b), true) = (boundary, cfg.lambda_bc != 0.0) {
            let r: Vec<f64> = next.iter().zip(b).map(|(v, &on)| if on { *v } else { 0.0 }).collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.iter().filter(|&&v| v).count();
            for (v, gk) in next.iter_mut().zip(normalized(r, norm, nb)) {
                *v -= cfg.lambda_bc * gk;
            }
        }
        if let Some(k) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("guidance state non-finite at step {i} (index {k})")));
        }
        x = x.with_values(next)?;
        misfit.push(obs.misfit(&x)?);
    }
    Ok(GuidanceOutcome { field: x, misfit })
}
