//! Surrogate-refresh training with a physics-residual loss.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::adam::{adam_step, AdamState};
use super::sampler::{brownian_bridge_sample, draw_sampler_noise, sample_on_graph, sample_theta, snap_tau, Hard, SamplerStats};
use super::TrainConfig;
use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::field::{write_atomic, Field};
use crate::net::{save_checkpoint, NetParams};
use crate::observation::{project, ObservationSet};
use crate::residual::ResidualOperator;
use crate::rng::RngStream;

/// One training instance: LF prior, observations and the residual operator for its state.
#[derive(Clone)]
pub struct TrainSample {
    pub x0: Field,
    pub obs: ObservationSet,
    pub op: Arc<dyn ResidualOperator>,
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub iter: usize,
    pub refresh_round: usize,
    pub loss_rms: f64,
    pub surrogate_residual_rms: f64,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "iter,refresh_round,loss_rms,surrogate_residual_rms,seconds";

pub fn metrics_csv(records: &[TrainRecord]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{:.12e},{:.12e},{:.6}",
            r.iter, r.refresh_round, r.loss_rms, r.surrogate_residual_rms, r.seconds
        );
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub records: Vec<TrainRecord>,
    pub adam: AdamState,
}

/// `‖R_h(Sample_θ(x_start, t0))‖` (or its square) and the gradient with respect
/// to the flat parameters, with the sampler noise frozen.
pub fn physics_loss_grad(
    params: &NetParams,
    x_start: &Field,
    t0: usize,
    obs: &ObservationSet,
    op: &Arc<dyn ResidualOperator>,
    noise: &[Vec<f64>],
    cfg: &TrainConfig,
    squared: bool,
) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let net = params.bind(&mut g, true);
    let x = g.constant(Tensor::from_field(x_start));
    let mut stats = SamplerStats::default();
    let x1 = sample_on_graph(&mut g, &net, params, x, t0, &Hard::new(obs), noise, cfg, &mut stats);
    let mut loss = g.residual_rms(x1, op.clone());
    if squared {
        loss = g.square(loss);
    }
    let value = g.scalar_value(loss);
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite physics loss {value}")));
    }
    let grads = g.backward(loss)?;
    Ok((value, net.gradient(&g, &grads)))
}

struct Step {
    loss: f64,
    surrogate: f64,
    grad: Vec<f64>,
}

fn train_step(
    sample: &TrainSample,
    params: &NetParams,
    frozen: &NetParams,
    cfg: &TrainConfig,
    mut rng: RngStream,
) -> Result<Step> {
    let x1_tilde = sample_theta(&sample.x0, 0, &sample.obs, frozen, cfg, &mut rng)?;
    let surrogate = sample.op.norm(&x1_tilde)?;
    let t = snap_tau(rng.uniform(), cfg.steps);
    let tau = t as f64 / cfg.steps as f64;
    let x_tau = project(&brownian_bridge_sample(&sample.x0, &x1_tilde, tau, cfg.eps, &mut rng)?, &sample.obs)?;
    let noise = draw_sampler_noise(x_tau.len(), t, cfg, &mut rng);
    let (loss, grad) = physics_loss_grad(params, &x_tau, t, &sample.obs, &sample.op, &noise, cfg, false)?;
    Ok(Step { loss, surrogate, grad })
}

fn checkpoint(out: Option<&Path>, name: &str, params: &NetParams, step: usize, rng: &RngStream) -> Result<()> {
    match out {
        Some(dir) => save_checkpoint(&dir.join(name), params, step as u64, Some(rng.state())),
        None => Ok(()),
    }
}

/// Train from `init` on `samples`. Every `refresh_period` iterations the static
/// copy θ̃ is refreshed; surrogate endpoints are redrawn from θ̃ every iteration.
///
/// With `out` set, writes `metrics.csv`, `round_NNNN.ckpt` after each refresh
/// round and `final.ckpt`. A non-finite loss aborts after saving `last_good.ckpt`.
pub fn train_picsb(
    samples: &[TrainSample],
    init: NetParams,
    cfg: &TrainConfig,
    rng: &RngStream,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut params = init;
    let mut adam = AdamState::new(params.len());
    let mut frozen = params.clone();
    let mut records = Vec::with_capacity(cfg.iterations);
    let start = Instant::now();
    for it in 0..cfg.iterations {
        let round = it / cfg.refresh_period;
        if it % cfg.refresh_period == 0 {
            frozen = params.clone();
        }
        let mut it_rng = rng.fork_indexed("iter", it as u64);
        let picks: Vec<usize> = (0..cfg.batch).map(|_| it_rng.below(samples.len())).collect();
        let steps: Vec<Result<Step>> = picks
            .par_iter()
            .enumerate()
            .map(|(b, &k)| train_step(&samples[k], &params, &frozen, cfg, it_rng.fork_indexed("elem", b as u64)))
            .collect();
        let mut grad = vec![0.0; params.len()];
        let (mut loss, mut surrogate) = (0.0, 0.0);
        for step in steps {
            let step = match step {
                Ok(s) => s,
                Err(e) => {
                    checkpoint(out, "last_good.ckpt", &params, it, rng)?;
                    return Err(e);
                }
            };
            loss += step.loss;
            surrogate += step.surrogate;
            grad.iter_mut().zip(&step.grad).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / cfg.batch as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        let mut next = params.clone();
        adam_step(next.flat_mut(), &grad, &mut adam, cfg.lr, cfg.clip_norm)?;
        if next.flat().iter().any(|v| !v.is_finite()) {
            checkpoint(out, "last_good.ckpt", &params, it, rng)?;
            return Err(Error::Numerical(format!("non-finite parameters after iteration {it}")));
        }
        params = next;
        records.push(TrainRecord {
            iter: it,
            refresh_round: round,
            loss_rms: loss * inv,
            surrogate_residual_rms: surrogate * inv,
            seconds: start.elapsed().as_secs_f64(),
        });
        if (it + 1) % cfg.refresh_period == 0 || it + 1 == cfg.iterations {
            checkpoint(out, &format!("round_{round:04}.ckpt"), &params, it + 1, rng)?;
            if let Some(dir) = out {
                let path = dir.join("metrics.csv");
                write_atomic(&path, metrics_csv(&records).as_bytes())?;
            }
        }
    }
    checkpoint(out, "final.ckpt", &params, cfg.iterations, rng)?;
    Ok(TrainOutcome { params, records, adam })
}
