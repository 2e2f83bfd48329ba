//! Benchmark simulators, low-fidelity constructions and dataset generation.

mod burgers;
mod darcy;
mod dataset;
mod grf;
mod interp;
mod kolmogorov;

pub use burgers::{make_lf_burgers, sample_burgers_ic, simulate_burgers, simulate_burgers_with, BurgersSpec};
pub use darcy::{sample_darcy_permeability, solve_darcy, DarcySpec};
pub use dataset::{gen_dataset, locate, Dataset, DatasetManifest, LoadedSample, SampleRecord, Split, MANIFEST};
pub use grf::{grf_1d, grf_2d};
pub use interp::{make_lf_interp, InterpMethod};
pub use kolmogorov::{sample_kolmogorov_ic, simulate_kolmogorov, KolmogorovSpec};
