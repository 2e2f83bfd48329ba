use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use picsb::autodiff::Padding;
use picsb::baselines::{guidance_sample, pinns_fit, train_edm_prior, EdmPrior};
use picsb::bridge::{infer, train_picsb};
use picsb::config::{Benchmark, ExperimentConfig};
use picsb::harness::{
    bench_walltime, burgers_toy_instance, eval_run, noisy_instance, physics_gradcheck, render_panels, run_inference,
    save_png, ColorRange, Panel,
};
use picsb::net::{init_params, load_checkpoint, NetConfig};
use picsb::pde::{gen_dataset, Dataset, LoadedSample, Split};
use picsb::residual::{estimate_residual_floor, residual_norm, suggest_floor_step};
use picsb::{field_read, field_write, Error, Result, RngStream};

#[derive(Parser)]
#[command(name = "picsb", version, about = "Reconstruct PDE fields from a low-fidelity prior and sparse observations")]
struct Cli {
    /// Override the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Observation noise level relative to the data standard deviation.
    #[arg(long, global = true, default_value_t = 0.0)]
    noise_alpha: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate paired LF/HF train and test splits.
    GenData {
        /// Desk preset used when no --config is given.
        #[arg(long, default_value = "burgers")]
        benchmark: Benchmark,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the bridge sampler without HF supervision.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        init_ckpt: Option<PathBuf>,
    },
    /// Reconstruct every sample of a split with a trained checkpoint.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against the HF references.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Metrics CSV; defaults to PRED/metrics.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Comparison methods: per-instance PINNs and guided diffusion.
    #[command(subcommand)]
    Baseline(Baseline),
    /// Heatmap of a field, or of (lf, obs, prediction, reference) for a sample.
    Plot(PlotArgs),
    /// Diagnostics for residuals, residual floors and gradients.
    #[command(subcommand)]
    Check(Check),
    /// Median inference wall time per test sample.
    Bench {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Baseline {
    /// Per-instance physics-informed network fit.
    Pinns {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the EDM prior used by guidance on the LF training fields.
    GuidancePrior {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Guided sampling from an LF-trained prior.
    Guidance {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PlotArgs {
    /// Field to draw.
    #[arg(long, conflicts_with = "sample")]
    field: Option<PathBuf>,
    /// Sample directory for a side-by-side figure.
    #[arg(long, requires = "pred")]
    sample: Option<PathBuf>,
    /// Prediction file drawn next to the sample.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Time frame of a rank-3 field; defaults to the first.
    #[arg(long)]
    frame: Option<usize>,
    /// Colour range symmetric about zero.
    #[arg(long)]
    symmetric: bool,
    /// Pixels per grid node.
    #[arg(long, default_value_t = 4)]
    scale: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Check {
    /// Residual RMS and per-node max of a field, as JSON.
    Residual {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        benchmark: Option<Benchmark>,
        /// Permeability for Darcy.
        #[arg(long)]
        perm: Option<PathBuf>,
    },
    /// Residual floor over fields matching a sample's observations.
    Floor {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        /// Descent step; estimated from the operator when omitted.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Finite-difference check of the physics-loss gradient on a Burgers toy.
    Gradcheck {
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        coords: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json { .. } => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

struct Ctx {
    seed: Option<u64>,
    config: Option<PathBuf>,
    noise_alpha: f64,
}

impl Ctx {
    /// `--config` if given, else `fallback`; `--seed` applied on top.
    fn config_or(&self, fallback: impl FnOnce() -> Result<ExperimentConfig>) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => fallback()?,
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        Ok(c)
    }

    /// For a `<dataset>/<split>/sample_NNNN` directory, the dataset config is the fallback.
    fn sample_config(&self, sample: &Path) -> Result<ExperimentConfig> {
        self.config_or(|| Ok(Dataset::open(dataset_root(sample)?)?.config().clone()))
    }

    fn dataset_config(&self, data: &Dataset) -> Result<ExperimentConfig> {
        self.config_or(|| Ok(data.config().clone()))
    }
}

fn print_json(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("json values serialize"));
}

fn run(cli: Cli) -> Result<()> {
    if !(cli.noise_alpha >= 0.0) {
        return Err(Error::Config(format!("--noise-alpha must be non-negative, got {}", cli.noise_alpha)));
    }
    let ctx = Ctx {
        seed: cli.seed,
        config: cli.config,
        noise_alpha: cli.noise_alpha,
    };
    match cli.command {
        Command::GenData { benchmark, out } => {
            let cfg = ctx.config_or(|| Ok(ExperimentConfig::desk(benchmark)))?;
            let m = gen_dataset(&cfg, &out)?;
            println!(
                "wrote {} train and {} test samples to {}",
                m.train.len(),
                m.test.len(),
                out.join("data").join(cfg.benchmark.name()).display()
            );
            Ok(())
        }
        Command::Train { data, out, init_ckpt } => train(&ctx, &data, &out, init_ckpt.as_deref()),
        Command::Infer { ckpt, data, split, out } => {
            let data = Dataset::open(&data)?;
            let cfg = ctx.dataset_config(&data)?;
            let params = load_checkpoint(&ckpt)?.params;
            let rng = RngStream::new(cfg.seed, 0).fork("infer");
            let meta = run_inference(&data, split.into(), &params, &cfg.trainer, ctx.noise_alpha, &rng, &out)?;
            println!("wrote {} predictions to {}", meta.seconds.len(), out.display());
            Ok(())
        }
        Command::Eval { pred, data, split, out } => {
            let data = Dataset::open(&data)?;
            let out = out.unwrap_or_else(|| pred.join("metrics.csv"));
            let s = eval_run(&pred, &data, split.into(), Some(&out))?;
            for r in s.rows.iter().chain(std::iter::once(&s.mean)) {
                println!(
                    "{:<12} rel_error {:>9.4}%  residual {:.4e}  misfit {:.3e}",
                    r.sample, r.rel_error_percent, r.residual_rms, r.observation_misfit
                );
            }
            Ok(())
        }
        Command::Baseline(b) => baseline(&ctx, b),
        Command::Plot(p) => plot(&ctx, p),
        Command::Check(c) => check(&ctx, c),
        Command::Bench { ckpt, data, reps } => {
            let data = Dataset::open(&data)?;
            let cfg = ctx.dataset_config(&data)?;
            let params = load_checkpoint(&ckpt)?.params;
            let samples = data.load_split(Split::Test)?;
            let mut per_sample = serde_json::Map::new();
            for (k, s) in samples.iter().enumerate() {
                let rng = RngStream::new(cfg.seed, 0).fork("bench").fork_indexed("sample", k as u64);
                let w = bench_walltime(reps, || infer(&s.lf, &s.obs, &params, &cfg.trainer, &mut rng.clone()).map(|_| ()))?;
                per_sample.insert(s.id.clone(), json!(w.median));
            }
            print_json(json!({ "repetitions": reps, "median_seconds": per_sample }));
            Ok(())
        }
    }
}

fn train(ctx: &Ctx, data: &Path, out: &Path, init_ckpt: Option<&Path>) -> Result<()> {
    let data = Dataset::open(data)?;
    let cfg = ctx.dataset_config(&data)?;
    if cfg.benchmark != data.manifest.benchmark {
        return Err(Error::Config(format!(
            "config is for {} but the dataset holds {}",
            cfg.benchmark, data.manifest.benchmark
        )));
    }
    let samples = data.training_set()?;
    let root = RngStream::new(cfg.seed, 0);
    let init = match init_ckpt {
        Some(p) => load_checkpoint(p)?.params,
        None => init_params(&cfg.net_config(), &mut root.fork("init"))?,
    };
    let outcome = train_picsb(&samples, init, &cfg.trainer, &root.fork("train"), Some(out))?;
    let last = outcome.records.last().map(|r| r.loss_rms).unwrap_or(f64::NAN);
    println!(
        "trained {} iterations, final loss {last:.4e}; checkpoints in {}",
        outcome.records.len(),
        out.display()
    );
    Ok(())
}

fn load_sample(dir: &Path, cfg: &ExperimentConfig) -> Result<LoadedSample> {
    LoadedSample::from_dir(dir, cfg.benchmark)
}

fn dataset_root(sample: &Path) -> Result<&Path> {
    sample
        .parent()
        .and_then(Path::parent)
        .ok_or_else(|| Error::Config(format!("{} is not inside a dataset; pass --config", sample.display())))
}

/// Noise reference for a sample directory: `data_std` of the enclosing dataset.
fn data_std_for(sample: &Path, alpha: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(1.0);
    }
    Ok(Dataset::open(dataset_root(sample)?)?.manifest.data_std)
}

fn baseline(ctx: &Ctx, b: Baseline) -> Result<()> {
    match b {
        Baseline::Pinns { sample, out } => {
            let cfg = ctx.sample_config(&sample)?;
            let s = load_sample(&sample, &cfg)?;
            let mut rng = RngStream::new(cfg.seed, 0).fork("pinns");
            let std = data_std_for(&sample, ctx.noise_alpha)?;
            let (_, obs) = noisy_instance(&cfg, &s, ctx.noise_alpha, std, &mut rng.fork("noise"))?;
            let problem = cfg.pinn_problem(s.permeability.as_ref())?;
            let fit = pinns_fit(&obs, &problem, &cfg.pinns, &mut rng)?;
            field_write(&fit.field, &out)?;
            println!(
                "PINNs fit in {:.2} s, final loss {:.4e}{}",
                fit.seconds,
                fit.losses.last().copied().unwrap_or(f64::NAN),
                if fit.aborted { " (stopped early on a non-finite loss)" } else { "" }
            );
            Ok(())
        }
        Baseline::GuidancePrior { data, out } => {
            let data = Dataset::open(&data)?;
            let cfg = ctx.dataset_config(&data)?;
            let lf: Vec<_> = data.load_split(Split::Train)?.into_iter().map(|s| s.lf).collect();
            let net = NetConfig {
                in_channels: 1,
                ..cfg.net_config()
            };
            let mut rng = RngStream::new(cfg.seed, 0).fork("prior");
            let p = train_edm_prior(&lf, &net, &cfg.guidance, &mut rng)?;
            p.prior.save(&out)?;
            println!(
                "prior trained for {} iterations, final loss {:.4e}",
                p.losses.len(),
                p.losses.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Baseline::Guidance { prior, sample, out } => {
            let cfg = ctx.sample_config(&sample)?;
            let prior = EdmPrior::load(&prior)?;
            let s = load_sample(&sample, &cfg)?;
            let mut rng = RngStream::new(cfg.seed, 0).fork("guidance");
            let std = data_std_for(&sample, ctx.noise_alpha)?;
            let (_, obs) = noisy_instance(&cfg, &s, ctx.noise_alpha, std, &mut rng.fork("noise"))?;
            let op = cfg.residual_operator(s.permeability.as_ref())?;
            let boundary = cfg.guidance_boundary();
            let g = guidance_sample(&prior, &obs, op.as_ref(), boundary.as_deref(), &cfg.guidance, &mut rng)?;
            field_write(&g.field, &out)?;
            println!("guidance sample written; final misfit {:.4e}", g.misfit.last().copied().unwrap_or(f64::NAN));
            Ok(())
        }
    }
}

fn plot(ctx: &Ctx, p: PlotArgs) -> Result<()> {
    let mut symmetric = p.symmetric;
    let panels = match (&p.field, &p.sample, &p.pred) {
        (Some(f), None, _) => vec![Panel::new(field_read(f)?)],
        (None, Some(dir), Some(pred)) => {
            let cfg = ctx.sample_config(dir)?;
            symmetric |= cfg.benchmark == Benchmark::Kolmogorov;
            let s = load_sample(dir, &cfg)?;
            vec![
                Panel::new(s.lf.clone()),
                Panel {
                    field: s.obs.values().clone(),
                    mask: Some(s.obs.mask().clone()),
                },
                Panel::new(field_read(pred)?),
                Panel::new(s.read_hf()?),
            ]
        }
        _ => return Err(Error::Config("plot needs --field, or --sample with --pred".into())),
    };
    let range = if symmetric { ColorRange::Symmetric } else { ColorRange::Data };
    save_png(&render_panels(&panels, p.frame, range, p.scale)?, &p.out)?;
    println!("wrote {}", p.out.display());
    Ok(())
}

fn check(ctx: &Ctx, c: Check) -> Result<()> {
    match c {
        Check::Residual { field, benchmark, perm } => {
            let x = field_read(&field)?;
            let mut cfg = ctx.config_or(|| {
                let b = benchmark.ok_or_else(|| Error::Config("check residual needs --benchmark or --config".into()))?;
                Ok(ExperimentConfig::desk(b))
            })?;
            if let Some(b) = benchmark {
                if b != cfg.benchmark {
                    return Err(Error::Config(format!("--benchmark {b} disagrees with the config ({})", cfg.benchmark)));
                }
            }
            match cfg.benchmark {
                Benchmark::Burgers => {
                    cfg.dims = vec![x.dims()[0]];
                    cfg.frames = x.dims()[1];
                }
                Benchmark::Darcy => cfg.dims = x.dims().to_vec(),
                Benchmark::Kolmogorov => {
                    cfg.frames = x.dims()[0];
                    cfg.dims = x.dims()[1..].to_vec();
                }
            }
            let a = perm.map(|p| field_read(&p)).transpose()?;
            let r = cfg.residual_operator(a.as_ref())?.residual(&x)?;
            print_json(json!({
                "benchmark": cfg.benchmark,
                "residual_rms": residual_norm(&r),
                "max_abs": r.max_abs(),
                "valid_nodes": r.valid_count(),
            }));
            Ok(())
        }
        Check::Floor { sample, iters, step } => {
            let cfg = ctx.sample_config(&sample)?;
            let s = load_sample(&sample, &cfg)?;
            let op = cfg.residual_operator(s.permeability.as_ref())?;
            let step = step.unwrap_or_else(|| suggest_floor_step(op.as_ref(), &s.lf, &s.obs));
            let est = estimate_residual_floor(&s.obs, op.as_ref(), &s.lf, iters, step)?;
            print_json(json!({
                "floor": est.value,
                "iterations": est.iterations,
                "converged": est.converged,
                "step": step,
                "checkpoints": est.checkpoints,
            }));
            Ok(())
        }
        Check::Gradcheck { n, coords } => {
            let cfg = ctx.config_or(|| Ok(ExperimentConfig::desk(Benchmark::Burgers)))?;
            let mut rng = RngStream::new(cfg.seed, 0).fork("gradcheck");
            let (sample, _) = burgers_toy_instance(n, cfg.ratio, &mut rng.fork("toy"))?;
            let params = init_params(&NetConfig::tiny(1, Padding::Circular), &mut rng.fork("init"))?;
            let r = physics_gradcheck(&sample, &params, &cfg.trainer, coords, 1e-6, &mut rng)?;
            print_json(json!({
                "coords": r.coords,
                "max_rel_error": r.max_rel_error,
                "passed": r.max_rel_error < 1e-4,
            }));
            Ok(())
        }
    }
}
