//! Brownian bridge, the hard-conditioned sampler and the trainer.

mod adam;
mod sampler;
mod train;

pub use adam::{adam_step, clip_global_norm, AdamState};
pub use sampler::{
    bridge_matching_loss, brownian_bridge_sample, draw_sampler_noise, infer, sample_theta, sample_theta_with_stats,
    snap_tau, SamplerStats,
};
pub use train::{metrics_csv, physics_loss_grad, train_picsb, TrainOutcome, TrainRecord, TrainSample, METRICS_HEADER};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Bridge-time steps `T`; `τ_t = t/T`.
    pub steps: usize,
    pub eps: f64,
    /// Iterations between refreshes of the static copy θ̃.
    pub refresh_period: usize,
    pub iterations: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            eps: 1e-2,
            refresh_period: 100,
            iterations: 1000,
            lr: 1e-3,
            clip_norm: 1.0,
            batch: 4,
        }
    }
}

impl TrainConfig {
    /// Darcy uses a much smaller step and clip.
    pub fn darcy() -> Self {
        Self {
            lr: 1e-6,
            clip_norm: 1e-5,
            ..Self::default()
        }
    }

    pub fn refresh_rounds(&self) -> usize {
        self.iterations.div_ceil(self.refresh_period.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Config(format!("bridge steps must be at least 2, got {}", self.steps)));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::Config(format!("noise scale must be non-negative, got {}", self.eps)));
        }
        if self.refresh_period == 0 || self.batch == 0 {
            return Err(Error::Config("refresh period and batch must be positive".into()));
        }
        if !(self.lr > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::Config("learning rate and clip norm must be positive".into()));
        }
        Ok(())
    }
}
