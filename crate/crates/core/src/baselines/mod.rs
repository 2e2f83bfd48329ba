//! Comparison methods: per-instance PINNs and guided sampling from an LF-trained EDM prior.

mod guidance;
mod pinns;

pub use guidance::{
    boundary_mask, guidance_sample, karras_sigma_schedule, train_edm_prior, EdmPrior, GuidanceConfig, GuidanceOutcome,
    PriorOutcome,
};
pub use pinns::{pinn_residual_check, pinns_fit, CoordMlp, PinnProblem, PinnsConfig, PinnsOutcome};
