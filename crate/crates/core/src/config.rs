//! Experiment configuration: one JSON document per run.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::Padding;
use crate::baselines::{boundary_mask, GuidanceConfig, PinnProblem, PinnsConfig};
use crate::bridge::TrainConfig;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::net::NetConfig;
use crate::observation::{GridLayout, Regime};
use crate::pde::{BurgersSpec, DarcySpec, InterpMethod, KolmogorovSpec};
use crate::residual::{BurgersStencil, DarcyStencil, KolmogorovStencil, ResidualOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Burgers,
    Darcy,
    Kolmogorov,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Burgers => "burgers",
            Benchmark::Darcy => "darcy",
            Benchmark::Kolmogorov => "kolmogorov",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "burgers" => Ok(Benchmark::Burgers),
            "darcy" => Ok(Benchmark::Darcy),
            "kolmogorov" => Ok(Benchmark::Kolmogorov),
            _ => Err(Error::Config(format!("unknown benchmark {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurgersSolver {
    pub nu: f64,
    pub nu_lf: f64,
    pub refine: usize,
    pub cfl: f64,
    pub min_substeps: usize,
}

impl Default for BurgersSolver {
    fn default() -> Self {
        let s = BurgersSpec::new(3, 3);
        Self {
            nu: s.nu,
            nu_lf: s.nu_lf,
            refine: s.refine,
            cfl: s.cfl,
            min_substeps: s.min_substeps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DarcySolver {
    pub forcing: f64,
    pub a_low: f64,
    pub a_high: f64,
    pub grf_alpha: f64,
    pub grf_tau: f64,
    pub cg_tol: f64,
    pub max_iter: usize,
    pub lf_method: InterpMethod,
}

impl Default for DarcySolver {
    fn default() -> Self {
        let s = DarcySpec::new(5);
        Self {
            forcing: s.forcing,
            a_low: s.a_low,
            a_high: s.a_high,
            grf_alpha: s.grf_alpha,
            grf_tau: s.grf_tau,
            cg_tol: s.cg_tol,
            max_iter: s.max_iter,
            lf_method: InterpMethod::Nearest,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KolmogorovSolver {
    pub re: f64,
    pub span: f64,
    pub cfl: f64,
    pub forcing_amplitude: f64,
    pub forcing_wavenumber: f64,
    pub drag: f64,
    pub ic_std: f64,
    pub ic_alpha: f64,
    pub ic_tau: f64,
    pub lf_method: InterpMethod,
}

impl Default for KolmogorovSolver {
    fn default() -> Self {
        let s = KolmogorovSpec::new(4, 2);
        Self {
            re: s.re,
            span: s.span,
            cfl: s.cfl,
            forcing_amplitude: s.forcing_amplitude,
            forcing_wavenumber: s.forcing_wavenumber,
            drag: s.drag,
            ic_std: s.ic_std,
            ic_alpha: s.ic_alpha,
            ic_tau: s.ic_tau,
            lf_method: InterpMethod::Bicubic,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub burgers: BurgersSolver,
    pub darcy: DarcySolver,
    pub kolmogorov: KolmogorovSolver,
}

/// Everything a run depends on.
///
/// `dims` holds the spatial grid: `[nx]` for Burgers (with `frames = nt` time
/// points), `[n, n]` for Darcy (`frames = 1`) and Kolmogorov.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub dims: Vec<usize>,
    pub frames: usize,
    pub regime: Regime,
    pub ratio: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub trainer: TrainConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<NetConfig>,
    #[serde(default = "default_train")]
    pub n_train: usize,
    #[serde(default = "default_test")]
    pub n_test: usize,
    #[serde(default)]
    pub pinns: PinnsConfig,
    #[serde(default)]
    pub guidance: GuidanceConfig,
}

fn default_train() -> usize {
    32
}

fn default_test() -> usize {
    4
}

impl ExperimentConfig {
    /// Desk-scale defaults for a benchmark.
    pub fn desk(benchmark: Benchmark) -> Self {
        let (dims, frames, trainer) = match benchmark {
            Benchmark::Burgers => (vec![64], 64, TrainConfig::default()),
            Benchmark::Darcy => (vec![64, 64], 1, TrainConfig::darcy()),
            Benchmark::Kolmogorov => (vec![64, 64], 8, TrainConfig::default()),
        };
        Self {
            benchmark,
            dims,
            frames,
            regime: Regime::R1,
            ratio: 0.1,
            solver: SolverConfig::default(),
            trainer,
            seed: 0,
            net: None,
            n_train: default_train(),
            n_test: default_test(),
            pinns: PinnsConfig::desk(benchmark),
            guidance: GuidanceConfig::desk(benchmark),
        }
    }

    /// Grid sizes, network width and schedules of the published setup.
    pub fn paper(benchmark: Benchmark) -> Self {
        let mut c = Self::desk(benchmark);
        match benchmark {
            Benchmark::Burgers => {
                c.dims = vec![128];
                c.frames = 128;
            }
            Benchmark::Darcy => c.dims = vec![128, 128],
            Benchmark::Kolmogorov => {
                c.dims = vec![256, 256];
                c.frames = 40;
            }
        }
        c.trainer.iterations = 100_000;
        c.net = Some(NetConfig::paper(c.in_channels(), c.padding()));
        c.pinns = PinnsConfig::paper(benchmark);
        c.guidance = GuidanceConfig::paper(benchmark);
        c
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::json("experiment config", e))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Config(format!("ratio must lie in (0, 1], got {}", self.ratio)));
        }
        if self.dims.iter().any(|&d| d == 0) || self.frames == 0 {
            return Err(Error::Config("dims and frames must be positive".into()));
        }
        match (self.benchmark, self.dims.len()) {
            (Benchmark::Burgers, 1) => self.burgers_spec().validate(),
            (Benchmark::Darcy, 2) if self.frames == 1 && self.dims[0] == self.dims[1] => self.darcy_spec().validate(),
            (Benchmark::Kolmogorov, 2) if self.dims[0] == self.dims[1] => self.kolmogorov_spec().validate(),
            _ => Err(Error::Config(format!(
                "{} does not accept dims {:?} with {} frames",
                self.benchmark, self.dims, self.frames
            ))),
        }
        .map_err(|e| Error::Config(e.to_string()))?;
        self.trainer.validate()?;
        self.net_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        match self.benchmark {
            Benchmark::Kolmogorov => self.frames,
            _ => 1,
        }
    }

    pub fn padding(&self) -> Padding {
        match self.benchmark {
            Benchmark::Darcy => Padding::Reflect,
            _ => Padding::Circular,
        }
    }

    /// The configured network, or the desk default for this benchmark.
    pub fn net_config(&self) -> NetConfig {
        self.net.clone().unwrap_or_else(|| {
            let mut n = NetConfig::default();
            n.in_channels = self.in_channels();
            n.padding = self.padding();
            n
        })
    }

    /// Dims of one full state.
    pub fn state_dims(&self) -> Vec<usize> {
        match self.benchmark {
            Benchmark::Burgers => vec![self.dims[0], self.frames],
            Benchmark::Darcy => self.dims.clone(),
            Benchmark::Kolmogorov => vec![self.frames, self.dims[0], self.dims[1]],
        }
    }

    pub fn layout(&self) -> GridLayout {
        match self.benchmark {
            Benchmark::Burgers => GridLayout::SpaceTime {
                nx: self.dims[0],
                nt: self.frames,
            },
            Benchmark::Darcy => GridLayout::Static {
                n0: self.dims[0],
                n1: self.dims[1],
            },
            Benchmark::Kolmogorov => GridLayout::Frames {
                frames: self.frames,
                n0: self.dims[0],
                n1: self.dims[1],
            },
        }
    }

    pub fn burgers_spec(&self) -> BurgersSpec {
        let b = &self.solver.burgers;
        BurgersSpec {
            nu: b.nu,
            nu_lf: b.nu_lf,
            refine: b.refine,
            cfl: b.cfl,
            min_substeps: b.min_substeps,
            ..BurgersSpec::new(self.dims[0], self.frames)
        }
    }

    pub fn darcy_spec(&self) -> DarcySpec {
        let d = &self.solver.darcy;
        DarcySpec {
            forcing: d.forcing,
            a_low: d.a_low,
            a_high: d.a_high,
            grf_alpha: d.grf_alpha,
            grf_tau: d.grf_tau,
            cg_tol: d.cg_tol,
            max_iter: d.max_iter,
            ..DarcySpec::new(self.dims[0])
        }
    }

    pub fn kolmogorov_spec(&self) -> KolmogorovSpec {
        let k = &self.solver.kolmogorov;
        KolmogorovSpec {
            re: k.re,
            span: k.span,
            cfl: k.cfl,
            forcing_amplitude: k.forcing_amplitude,
            forcing_wavenumber: k.forcing_wavenumber,
            drag: k.drag,
            ic_std: k.ic_std,
            ic_alpha: k.ic_alpha,
            ic_tau: k.ic_tau,
            ..KolmogorovSpec::new(self.dims[0], self.frames)
        }
    }

    /// HF residual operator for one sample; Darcy needs the sample's permeability.
    pub fn residual_operator(&self, permeability: Option<&Field>) -> Result<Arc<dyn ResidualOperator>> {
        Ok(match self.benchmark {
            Benchmark::Burgers => {
                let s = self.burgers_spec();
                Arc::new(BurgersStencil::unit(s.nx, s.nt, s.nu)?)
            }
            Benchmark::Darcy => {
                let a = permeability.ok_or_else(|| Error::Config("Darcy residual needs the permeability field".into()))?;
                Arc::new(DarcyStencil::unit(a, self.solver.darcy.forcing)?.with_boundary_rows())
            }
            Benchmark::Kolmogorov => {
                let s = self.kolmogorov_spec();
                Arc::new(
                    KolmogorovStencil::torus(s.frames, s.n, s.re, s.span)?.with_forcing(
                        s.forcing_amplitude,
                        s.forcing_wavenumber,
                        s.drag,
                    ),
                )
            }
        })
    }

    /// The PINN formulation of this benchmark for one sample.
    pub fn pinn_problem(&self, permeability: Option<&Field>) -> Result<PinnProblem> {
        Ok(match self.benchmark {
            Benchmark::Burgers => PinnProblem::Burgers { nu: self.solver.burgers.nu },
            Benchmark::Darcy => PinnProblem::Darcy {
                permeability: permeability
                    .cloned()
                    .ok_or_else(|| Error::Config("Darcy PINN needs the permeability field".into()))?,
                forcing: self.solver.darcy.forcing,
            },
            Benchmark::Kolmogorov => {
                let k = &self.solver.kolmogorov;
                PinnProblem::Kolmogorov {
                    re: k.re,
                    span: k.span,
                    forcing_amplitude: k.forcing_amplitude,
                    forcing_wavenumber: k.forcing_wavenumber,
                    drag: k.drag,
                }
            }
        })
    }

    /// Boundary nodes penalized by guidance sampling (Darcy only).
    pub fn guidance_boundary(&self) -> Option<Vec<bool>> {
        (self.benchmark == Benchmark::Darcy).then(|| boundary_mask(self.dims[0], self.dims[1]))
    }
}
