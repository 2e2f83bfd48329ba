//! Brownian-bridge draws and the hard-conditioned sampler.

use std::rc::Rc;

use super::TrainConfig;
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::net::{channel_shape, velocity, NetParams, NetVars};
use crate::observation::{project, ObservationSet};
use crate::rng::RngStream;

/// `(1 − τ)x0 + τx1 + sqrt(ετ(1 − τ)) z`; exact at the endpoints.
pub fn brownian_bridge_sample(x0: &Field, x1: &Field, tau: f64, eps: f64, rng: &mut RngStream) -> Result<Field> {
    x0.ensure_same_dims(x1)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("bridge time must lie in [0, 1], got {tau}")));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise scale must be non-negative, got {eps}")));
    }
    if tau == 0.0 {
        return Ok(x0.clone());
    }
    if tau == 1.0 {
        return Ok(x1.clone());
    }
    let sd = (eps * tau * (1.0 - tau)).sqrt();
    let values = x0
        .values()
        .iter()
        .zip(x1.values())
        .map(|(a, b)| (1.0 - tau) * a + tau * b + sd * rng.normal())
        .collect();
    x0.with_values(values)
}

/// Step index for a continuous bridge time: `floor(τT)` clamped to `T − 1`.
pub fn snap_tau(tau: f64, steps: usize) -> usize {
    ((tau * steps as f64).floor() as usize).min(steps - 1)
}

/// Work done by one sampler call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SamplerStats {
    pub velocity_evals: usize,
    /// Projections after each Euler step; the initial projection of the start state is not counted.
    pub step_projections: usize,
}

/// Mask and data as shared tape constants.
#[derive(Clone)]
pub(crate) struct Hard {
    mask: Rc<Vec<f64>>,
    y: Rc<Vec<f64>>,
}

impl Hard {
    pub(crate) fn new(obs: &ObservationSet) -> Self {
        Self {
            mask: Rc::new(obs.mask().values().to_vec()),
            y: Rc::new(obs.values().values().to_vec()),
        }
    }

    fn apply(&self, g: &mut Graph, x: Var) -> Var {
        g.project(x, self.mask.clone(), self.y.clone())
    }
}

/// Frozen noise for steps `t0..T−1`, already scaled by `sqrt(ε s)`.
pub fn draw_sampler_noise(len: usize, t0: usize, cfg: &TrainConfig, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let scale = (cfg.eps / cfg.steps as f64).sqrt();
    (t0..cfg.steps.saturating_sub(1))
        .map(|_| rng.normals(len).into_iter().map(|z| scale * z).collect())
        .collect()
}

/// The sampler on the tape. `noise[k]` is added after the projection of step `t0 + k`.
pub(crate) fn sample_on_graph(
    g: &mut Graph,
    net: &NetVars,
    params: &NetParams,
    x_start: Var,
    t0: usize,
    hard: &Hard,
    noise: &[Vec<f64>],
    cfg: &TrainConfig,
    stats: &mut SamplerStats,
) -> Var {
    let s = 1.0 / cfg.steps as f64;
    let mut x = hard.apply(g, x_start);
    for t in t0..cfg.steps {
        let v = velocity(g, net, params.config(), x, t as f64 * s);
        stats.velocity_evals += 1;
        x = g.axpy(x, s, v);
        x = hard.apply(g, x);
        stats.step_projections += 1;
        if t + 1 < cfg.steps {
            x = g.add_const(x, &noise[t - t0]);
        }
    }
    x
}

fn check_inputs(x_start: &Field, t0: usize, obs: &ObservationSet, params: &NetParams, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if t0 >= cfg.steps {
        return Err(Error::InvalidArgument(format!(
            "start step {t0} out of range for {} bridge steps",
            cfg.steps
        )));
    }
    x_start.ensure_same_dims(obs.mask())?;
    channel_shape(params.config(), x_start.dims())?;
    Ok(())
}

/// Run the sampler from step `t0` with noise from `rng`, reporting the work done.
pub fn sample_theta_with_stats(
    x_start: &Field,
    t0: usize,
    obs: &ObservationSet,
    params: &NetParams,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(Field, SamplerStats)> {
    check_inputs(x_start, t0, obs, params, cfg)?;
    let noise = draw_sampler_noise(x_start.len(), t0, cfg, rng);
    let mut g = Graph::new();
    let net = params.bind(&mut g, false);
    let x = g.constant(Tensor::from_field(x_start));
    let mut stats = SamplerStats::default();
    let out = sample_on_graph(&mut g, &net, params, x, t0, &Hard::new(obs), &noise, cfg, &mut stats);
    let data = &g.value(out).data;
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: k });
    }
    // Observed entries are copied from `y`, never recomputed.
    let field = x_start.with_values(data.clone())?;
    Ok((project(&field, obs)?, stats))
}

/// Hard-conditioned sampler from step `t0`; the output matches `y` exactly on the mask.
pub fn sample_theta(
    x_start: &Field,
    t0: usize,
    obs: &ObservationSet,
    params: &NetParams,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<Field> {
    sample_theta_with_stats(x_start, t0, obs, params, cfg, rng).map(|(f, _)| f)
}

/// Amortized reconstruction from the LF prior: `sample_theta(x0, 0, …)`.
pub fn infer(x0: &Field, obs: &ObservationSet, params: &NetParams, cfg: &TrainConfig, rng: &mut RngStream) -> Result<Field> {
    sample_theta(x0, 0, obs, params, cfg, rng)
}

/// RMS of `v_pred − (x1 − x_τ)/(1 − τ)`.
pub fn bridge_matching_loss(v_pred: &Field, x_tau: &Field, x1: &Field, tau: f64) -> Result<f64> {
    v_pred.ensure_same_dims(x_tau)?;
    v_pred.ensure_same_dims(x1)?;
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("bridge matching needs τ in [0, 1), got {tau}")));
    }
    let ss: f64 = v_pred
        .values()
        .iter()
        .zip(x_tau.values().iter().zip(x1.values()))
        .map(|(v, (a, b))| (v - (b - a) / (1.0 - tau)).powi(2))
        .sum();
    Ok((ss / v_pred.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Padding;
    use crate::net::{init_params, NetConfig};
    use crate::observation::{observe, sample_mask, GridLayout, Regime};

    fn setup(seed: u64) -> (Field, ObservationSet, NetParams) {
        let mut rng = RngStream::new(seed, 0);
        let x = Field::new(vec![8, 8], rng.normals(64)).unwrap();
        let truth = Field::new(vec![8, 8], rng.normals(64)).unwrap();
        let mask = sample_mask(Regime::R1, 0.25, GridLayout::SpaceTime { nx: 8, nt: 8 }, &mut rng).unwrap();
        let obs = observe(&truth, &mask).unwrap();
        let params = init_params(&NetConfig::tiny(1, Padding::Circular), &mut rng).unwrap();
        (x, obs, params)
    }

    #[test]
    fn bridge_endpoints_are_exact() {
        let mut rng = RngStream::new(1, 0);
        let a = Field::new(vec![5], rng.normals(5)).unwrap();
        let b = Field::new(vec![5], rng.normals(5)).unwrap();
        assert_eq!(brownian_bridge_sample(&a, &b, 0.0, 0.01, &mut rng).unwrap(), a);
        assert_eq!(brownian_bridge_sample(&a, &b, 1.0, 0.01, &mut rng).unwrap(), b);
        assert!(brownian_bridge_sample(&a, &b, 1.5, 0.01, &mut rng).is_err());
    }

    #[test]
    fn bridge_midpoint_variance() {
        let z = Field::zeros(vec![100_000]).unwrap();
        let d = brownian_bridge_sample(&z, &z, 0.5, 0.01, &mut RngStream::new(2, 0)).unwrap();
        let var = d.values().iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        assert!((var / 0.0025 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn snapping() {
        assert_eq!(snap_tau(0.0, 10), 0);
        assert_eq!(snap_tau(0.199, 10), 1);
        assert_eq!(snap_tau(1.0, 10), 9);
    }

    #[test]
    fn zero_params_without_noise_return_projection() {
        let (x, obs, params) = setup(3);
        let zero = NetParams::zeros(params.config()).unwrap();
        let cfg = TrainConfig {
            eps: 0.0,
            ..TrainConfig::default()
        };
        let out = sample_theta(&x, 0, &obs, &zero, &cfg, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(out, project(&x, &obs).unwrap());
    }

    #[test]
    fn feasible_with_exact_step_count() {
        let (x, obs, params) = setup(4);
        let cfg = TrainConfig::default();
        let (out, stats) = sample_theta_with_stats(&x, 0, &obs, &params, &cfg, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(stats.velocity_evals, 10);
        assert_eq!(stats.step_projections, 10);
        for k in 0..out.len() {
            if obs.is_observed(k) {
                assert_eq!(out.values()[k].to_bits(), obs.values().values()[k].to_bits());
            }
        }
        let (_, stats) = sample_theta_with_stats(&x, 7, &obs, &params, &cfg, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(stats.velocity_evals, 3);
        assert!(sample_theta(&x, 10, &obs, &params, &cfg, &mut RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn infer_is_sample_from_zero_and_differs_only_off_mask() {
        let (x, obs, params) = setup(5);
        let cfg = TrainConfig::default();
        let a = infer(&x, &obs, &params, &cfg, &mut RngStream::new(7, 0)).unwrap();
        let b = sample_theta(&x, 0, &obs, &params, &cfg, &mut RngStream::new(7, 0)).unwrap();
        assert_eq!(a, b);
        let c = infer(&x, &obs, &params, &cfg, &mut RngStream::new(8, 0)).unwrap();
        let mut differs = false;
        for k in 0..a.len() {
            if obs.is_observed(k) {
                assert_eq!(a.values()[k], c.values()[k]);
            } else {
                differs |= a.values()[k] != c.values()[k];
            }
        }
        assert!(differs);
    }

    #[test]
    fn bridge_matching_hand_cases() {
        let f = |v: Vec<f64>| Field::new(vec![v.len()], v).unwrap();
        assert_eq!(bridge_matching_loss(&f(vec![4.0]), &f(vec![0.0]), &f(vec![2.0]), 0.5).unwrap(), 0.0);
        assert_eq!(bridge_matching_loss(&f(vec![0.0]), &f(vec![1.0]), &f(vec![3.0]), 0.0).unwrap(), 2.0);
        assert!(bridge_matching_loss(&f(vec![0.0]), &f(vec![0.0]), &f(vec![0.0]), 1.0).is_err());
    }
}
