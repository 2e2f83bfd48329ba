//! Physics-informed conditional Schrödinger bridge (PICSB) reconstruction of
//! PDE fields from a full-grid low-fidelity prior plus sparse high-fidelity
//! observations.
//!
//! The crate is organised bottom-up:
//!
//! - [`field`], [`rng`], [`config`]: grid fields, the FGRD format,
//!   deterministic random streams and experiment configuration.
//! - [`pde`]: Burgers, Darcy and Kolmogorov simulators plus dataset generation.
//! - [`residual`]: discretized PDE residual operators and diagnostics.
//! - [`observation`]: masks, the observation operator and hard projection.
//! - [`autodiff`], [`net`]: a reverse-mode tape and the AdaIN U-Net velocity field.
//! - [`bridge`]: Brownian-bridge sampling, the hard-conditioned sampler and
//!   the surrogate-refresh trainer.
//! - [`baselines`]: per-instance PINNs and LF-prior EDM guidance.
//! - [`harness`]: metrics, evaluation, timing and plotting.

pub mod autodiff;
pub mod baselines;
pub mod bridge;
pub mod config;
pub mod error;
pub mod field;
pub mod harness;
pub mod net;
pub mod observation;
pub mod pde;
pub mod residual;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{field_read, field_write, AxisTag, Field};
pub use rng::RngStream;
