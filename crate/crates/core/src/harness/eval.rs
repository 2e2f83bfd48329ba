use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics_table, rel_error, MetricsRow};
use crate::bridge::{infer, TrainConfig};
use crate::config::{Benchmark, ExperimentConfig};
use crate::error::{Error, Result};
use crate::field::{field_read, field_write, write_atomic, Field};
use crate::net::NetParams;
use crate::observation::{perturb_observations, ObservationSet};
use crate::pde::{make_lf_interp, Dataset, LoadedSample, Split};
use crate::rng::RngStream;

pub const PREDICTIONS_META: &str = "predictions.json";

/// Written next to prediction files so evaluation can report timing and noise.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionMeta {
    pub method: String,
    pub noise_alpha: f64,
    /// Per-sample inference seconds, model load excluded.
    pub seconds: BTreeMap<String, f64>,
}

impl PredictionMeta {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(PREDICTIONS_META);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path.display().to_string(), e))?;
        write_atomic(&path, text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(PREDICTIONS_META);
        if !path.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::json(path.display().to_string(), e))
    }
}

pub fn prediction_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.fgrd"))
}

/// Observations actually used for a prediction, saved only when perturbed.
pub fn used_obs_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.obsvals.fgrd"))
}

/// The instance a method sees at noise level `alpha`: perturbed observations,
/// and for the interpolation benchmarks an LF rebuilt from them.
pub fn noisy_instance(
    cfg: &ExperimentConfig,
    sample: &LoadedSample,
    alpha: f64,
    data_std: f64,
    rng: &mut RngStream,
) -> Result<(Field, ObservationSet)> {
    if alpha == 0.0 {
        return Ok((sample.lf.clone(), sample.obs.clone()));
    }
    let obs = perturb_observations(&sample.obs, alpha, data_std, rng)?;
    let lf = match cfg.benchmark {
        Benchmark::Burgers => sample.lf.clone(),
        Benchmark::Darcy => make_lf_interp(&obs, cfg.solver.darcy.lf_method)?,
        Benchmark::Kolmogorov => make_lf_interp(&obs, cfg.solver.kolmogorov.lf_method)?,
    };
    Ok((lf, obs))
}

/// Run the trained sampler on every sample of `split`, writing `<id>.fgrd`
/// and [`PredictionMeta`] into `out_dir`.
pub fn run_inference(
    data: &Dataset,
    split: Split,
    params: &NetParams,
    train: &TrainConfig,
    noise_alpha: f64,
    rng: &RngStream,
    out_dir: &Path,
) -> Result<PredictionMeta> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let samples = data.load_split(split)?;
    let cfg = data.config();
    let mut seconds = BTreeMap::new();
    for (k, s) in samples.iter().enumerate() {
        let mut noise_rng = rng.fork_indexed("noise", k as u64);
        let (lf, obs) = noisy_instance(cfg, s, noise_alpha, data.manifest.data_std, &mut noise_rng)?;
        let mut r = rng.fork_indexed("infer", k as u64);
        let t = Instant::now();
        let pred = infer(&lf, &obs, params, train, &mut r)?;
        seconds.insert(s.id.clone(), t.elapsed().as_secs_f64());
        field_write(&pred, &prediction_path(out_dir, &s.id))?;
        if noise_alpha != 0.0 {
            field_write(obs.values(), &used_obs_path(out_dir, &s.id))?;
        }
    }
    let meta = PredictionMeta {
        method: "picsb".into(),
        noise_alpha,
        seconds,
    };
    meta.save(out_dir)?;
    Ok(meta)
}

#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub rows: Vec<MetricsRow>,
    pub mean: MetricsRow,
}

/// Compare `<id>.fgrd` predictions in `pred_dir` with the HF references of a
/// dataset split. Every missing prediction is listed in the error.
pub fn eval_run(pred_dir: &Path, data: &Dataset, split: Split, out_csv: Option<&Path>) -> Result<EvalSummary> {
    let records = data.manifest.split(split);
    let missing: Vec<PathBuf> = records
        .iter()
        .map(|r| prediction_path(pred_dir, &r.id))
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    let meta = PredictionMeta::load(pred_dir)?.unwrap_or_default();
    let cfg = data.config();
    let rows = records
        .par_iter()
        .map(|rec| {
            let pred = field_read(&prediction_path(pred_dir, &rec.id))?;
            let hf = data.load_hf(rec)?;
            let sample = data.load_sample(rec)?;
            let used = used_obs_path(pred_dir, &rec.id);
            let obs = if used.is_file() {
                ObservationSet::new(sample.obs.mask().clone(), field_read(&used)?)?
            } else {
                sample.obs
            };
            let op = cfg.residual_operator(sample.permeability.as_ref())?;
            Ok(MetricsRow {
                sample: rec.id.clone(),
                rel_error_percent: rel_error(&pred, &hf)?,
                residual_rms: op.norm(&pred)?,
                observation_misfit: obs.misfit(&pred)?,
                wall_seconds: meta.seconds.get(&rec.id).copied(),
                regime: cfg.regime,
                noise_alpha: meta.noise_alpha,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = MetricsRow::mean(&rows).ok_or_else(|| Error::InvalidArgument("split has no samples".into()))?;
    if let Some(path) = out_csv {
        write_atomic(path, metrics_table(&rows).as_bytes())?;
    }
    Ok(EvalSummary { rows, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::gen_dataset;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::desk(Benchmark::Burgers);
        c.dims = vec![16];
        c.frames = 16;
        c.n_train = 1;
        c.n_test = 2;
        c
    }

    #[test]
    fn references_score_zero_and_missing_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let m = gen_dataset(&small(), dir.path()).unwrap();
        let data = Dataset::open(dir.path()).unwrap();
        let pred = dir.path().join("pred");
        std::fs::create_dir_all(&pred).unwrap();
        let err = eval_run(&pred, &data, Split::Test, None).unwrap_err();
        assert!(matches!(&err, Error::MissingFiles(v) if v.len() == 2));
        for r in &m.test {
            field_write(&data.load_hf(r).unwrap(), &prediction_path(&pred, &r.id)).unwrap();
        }
        let csv = pred.join("metrics.csv");
        let s = eval_run(&pred, &data, Split::Test, Some(&csv)).unwrap();
        assert_eq!(s.mean.rel_error_percent, 0.0);
        assert!(s.rows.iter().all(|r| r.observation_misfit == 0.0));
        assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn inference_output_is_feasible_under_noise() {
        let dir = tempfile::tempdir().unwrap();
        let c = small();
        gen_dataset(&c, dir.path()).unwrap();
        let data = Dataset::open(dir.path()).unwrap();
        let params = NetParams::zeros(&c.net_config()).unwrap();
        let pred = dir.path().join("pred");
        let meta = run_inference(&data, Split::Test, &params, &c.trainer, 0.05, &RngStream::new(1, 0), &pred).unwrap();
        assert_eq!(meta.seconds.len(), 2);
        let s = eval_run(&pred, &data, Split::Test, None).unwrap();
        assert!(s.rows.iter().all(|r| r.observation_misfit == 0.0 && r.wall_seconds.is_some()));
        assert_eq!(s.mean.noise_alpha, 0.05);
    }
}
