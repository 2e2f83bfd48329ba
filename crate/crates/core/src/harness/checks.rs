use std::sync::Arc;

use crate::autodiff::{gradcheck, GradcheckReport};
use crate::bridge::{draw_sampler_noise, physics_loss_grad, TrainConfig, TrainSample};
use crate::config::{Benchmark, ExperimentConfig};
use crate::error::Result;
use crate::field::Field;
use crate::net::NetParams;
use crate::observation::{observe, sample_mask};
use crate::pde::{make_lf_burgers, sample_burgers_ic, simulate_burgers};
use crate::rng::RngStream;

/// A single Burgers instance on an `n × n` space-time grid, built in memory:
/// returns the training view and the HF reference.
pub fn burgers_toy_instance(n: usize, ratio: f64, rng: &mut RngStream) -> Result<(TrainSample, Field)> {
    let mut cfg = ExperimentConfig::desk(Benchmark::Burgers);
    cfg.dims = vec![n];
    cfg.frames = n;
    cfg.ratio = ratio;
    let spec = cfg.burgers_spec();
    let u0 = sample_burgers_ic(&mut rng.fork("ic"), spec.fine_points())?;
    let hf = simulate_burgers(&u0, &spec)?;
    let x0 = make_lf_burgers(&u0, &spec)?;
    let mask = sample_mask(cfg.regime, ratio, cfg.layout(), &mut rng.fork("mask"))?;
    let obs = observe(&hf, &mask)?;
    let op = cfg.residual_operator(None)?;
    Ok((TrainSample { x0, obs, op }, hf))
}

/// Central-difference check of `‖R_h(Sample_θ(x0))‖²` with respect to
/// `n_coords` random parameters, sampler noise frozen.
pub fn physics_gradcheck(
    sample: &TrainSample,
    params: &NetParams,
    cfg: &TrainConfig,
    n_coords: usize,
    step: f64,
    rng: &mut RngStream,
) -> Result<GradcheckReport> {
    let noise = draw_sampler_noise(sample.x0.len(), 0, cfg, &mut rng.fork("noise"));
    let op = Arc::clone(&sample.op);
    let f = |p: &[f64]| {
        let q = NetParams::from_flat(params.config(), p.to_vec()).expect("parameter length is fixed");
        physics_loss_grad(&q, &sample.x0, 0, &sample.obs, &op, &noise, cfg, true).expect("toy instance is well formed")
    };
    let coords: Vec<usize> = (0..n_coords).map(|_| rng.below(params.len())).collect();
    Ok(gradcheck(&f, params.flat(), &coords, step))
}
