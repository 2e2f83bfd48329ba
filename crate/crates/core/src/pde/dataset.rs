//! Paired LF/HF datasets on disk.
//!
//! Layout under `out_dir/data/<benchmark>/`:
//! `manifest.json` and `<split>/sample_NNNN/{lf,hf,mask,obsvals}.fgrd` plus
//! `meta.json` (and `perm.fgrd` for Darcy). Training only ever opens the LF,
//! mask, observation and permeability files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    make_lf_burgers, make_lf_interp, sample_burgers_ic, sample_darcy_permeability, sample_kolmogorov_ic, simulate_burgers,
    simulate_kolmogorov, solve_darcy,
};
use crate::bridge::TrainSample;
use crate::config::{Benchmark, ExperimentConfig};
use crate::error::{Error, Result};
use crate::field::{field_read, field_write, write_atomic, Field};
use crate::observation::{observe, sample_mask, ObservationSet, Regime};
use crate::rng::RngStream;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    /// Path relative to the manifest directory.
    pub dir: String,
    /// File name to hex SHA-256.
    pub checksums: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub benchmark: Benchmark,
    pub config: ExperimentConfig,
    /// Standard deviation of the clean HF training fields, the noise reference.
    pub data_std: f64,
    pub lf_method: String,
    pub train: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> &[SampleRecord] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn lf_method(cfg: &ExperimentConfig) -> String {
    match cfg.benchmark {
        Benchmark::Burgers => format!("burgers simulation with nu_lf = {}", cfg.solver.burgers.nu_lf),
        Benchmark::Darcy => format!("{:?} interpolation of observations", cfg.solver.darcy.lf_method).to_lowercase(),
        Benchmark::Kolmogorov => format!("{:?} interpolation of observations", cfg.solver.kolmogorov.lf_method).to_lowercase(),
    }
}

struct Generated {
    fields: Vec<(&'static str, Field)>,
    hf_values: Vec<f64>,
}

/// Observation mask for one sample; R3 draws from a dataset-level stream.
fn mask_for(cfg: &ExperimentConfig, root: &RngStream, rng: &mut RngStream) -> Result<Field> {
    let layout = cfg.layout();
    match cfg.regime {
        Regime::R3 => sample_mask(Regime::R3, cfg.ratio, layout, &mut root.fork("mask-r3")),
        r => sample_mask(r, cfg.ratio, layout, &mut rng.fork("mask")),
    }
}

fn generate_sample(cfg: &ExperimentConfig, root: &RngStream, mut rng: RngStream) -> Result<Generated> {
    let mask = mask_for(cfg, root, &mut rng)?;
    let mut fields = Vec::with_capacity(5);
    let (hf, lf, obs) = match cfg.benchmark {
        Benchmark::Burgers => {
            let spec = cfg.burgers_spec();
            let u0 = sample_burgers_ic(&mut rng, spec.fine_points())?;
            let hf = simulate_burgers(&u0, &spec)?;
            let lf = make_lf_burgers(&u0, &spec)?;
            let obs = observe(&hf, &mask)?;
            (hf, lf, obs)
        }
        Benchmark::Darcy => {
            let spec = cfg.darcy_spec();
            let a = sample_darcy_permeability(&mut rng, &spec)?;
            let hf = solve_darcy(&a, &spec)?;
            let obs = observe(&hf, &mask)?;
            let lf = make_lf_interp(&obs, cfg.solver.darcy.lf_method)?;
            fields.push(("perm", a));
            (hf, lf, obs)
        }
        Benchmark::Kolmogorov => {
            let spec = cfg.kolmogorov_spec();
            let w0 = sample_kolmogorov_ic(&mut rng, &spec)?;
            let hf = simulate_kolmogorov(&w0, &spec)?;
            let obs = observe(&hf, &mask)?;
            let lf = make_lf_interp(&obs, cfg.solver.kolmogorov.lf_method)?;
            (hf, lf, obs)
        }
    };
    let hf_values = hf.values().to_vec();
    fields.extend([("lf", lf), ("hf", hf), ("mask", mask), ("obsvals", obs.values().clone())]);
    Ok(Generated { fields, hf_values })
}

fn sample_id(k: usize) -> String {
    format!("sample_{k:04}")
}

/// Generate the train and test splits and write them under `out_dir`.
pub fn gen_dataset(cfg: &ExperimentConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let base = out_dir.join("data").join(cfg.benchmark.name());
    let root = RngStream::new(cfg.seed, 0).fork("data");
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut hf_all = Vec::new();
    for (split, count) in [(Split::Train, cfg.n_train), (Split::Test, cfg.n_test)] {
        let generated: Vec<Result<(SampleRecord, Vec<f64>)>> = (0..count)
            .into_par_iter()
            .map(|k| {
                let rng = root.fork_indexed(split.name(), k as u64);
                let g = generate_sample(cfg, &root, rng)?;
                let id = sample_id(k);
                let rel = format!("{}/{}", split.name(), id);
                let dir = base.join(&rel);
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let mut checksums = BTreeMap::new();
                for (name, f) in &g.fields {
                    let file = format!("{name}.fgrd");
                    checksums.insert(file.clone(), sha256_hex(&f.to_fgrd_bytes()));
                    field_write(f, &dir.join(&file))?;
                }
                let meta = serde_json::json!({
                    "benchmark": cfg.benchmark,
                    "split": split,
                    "index": k,
                    "seed": cfg.seed,
                    "regime": cfg.regime,
                    "ratio": cfg.ratio,
                    "state_dims": cfg.state_dims(),
                    "lf_method": lf_method(cfg),
                    "solver": cfg.solver,
                });
                let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json("meta.json", e))?;
                write_atomic(&dir.join("meta.json"), text.as_bytes())?;
                Ok((SampleRecord { id, dir: rel, checksums }, g.hf_values))
            })
            .collect();
        for r in generated {
            let (rec, hf) = r?;
            match split {
                Split::Train => {
                    hf_all.extend(hf);
                    train.push(rec);
                }
                Split::Test => test.push(rec),
            }
        }
    }
    let data_std = if hf_all.is_empty() {
        1.0
    } else {
        let m = hf_all.iter().sum::<f64>() / hf_all.len() as f64;
        (hf_all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / hf_all.len() as f64).sqrt()
    };
    let manifest = DatasetManifest {
        benchmark: cfg.benchmark,
        config: cfg.clone(),
        data_std,
        lf_method: lf_method(cfg),
        train,
        test,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("manifest", e))?;
    write_atomic(&base.join(MANIFEST), text.as_bytes())?;
    Ok(manifest)
}

/// One sample as the trainer and inference see it: no HF field.
#[derive(Clone, Debug)]
pub struct LoadedSample {
    pub id: String,
    pub dir: PathBuf,
    pub lf: Field,
    pub obs: ObservationSet,
    pub permeability: Option<Field>,
}

impl LoadedSample {
    /// Read a `sample_NNNN` directory directly, without manifest checksums.
    pub fn from_dir(dir: &Path, benchmark: Benchmark) -> Result<Self> {
        let names: &[&str] = match benchmark {
            Benchmark::Darcy => &["lf", "mask", "obsvals", "perm"],
            _ => &["lf", "mask", "obsvals"],
        };
        let paths: Vec<PathBuf> = names.iter().map(|n| dir.join(format!("{n}.fgrd"))).collect();
        let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.is_file()).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingFiles(missing));
        }
        let mut fields = paths.iter().map(|p| field_read(p)).collect::<Result<Vec<_>>>()?;
        let permeability = (fields.len() == 4).then(|| fields.pop().unwrap());
        let values = fields.pop().unwrap();
        let mask = fields.pop().unwrap();
        let lf = fields.pop().unwrap();
        Ok(Self {
            id: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            dir: dir.to_path_buf(),
            lf,
            obs: ObservationSet::new(mask, values)?,
            permeability,
        })
    }

    /// Reference field stored next to the sample, for evaluation only.
    pub fn read_hf(&self) -> Result<Field> {
        field_read(&self.dir.join("hf.fgrd"))
    }
}

/// An opened dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Open `dir`, which may be the benchmark directory holding the manifest,
    /// a `data/` directory with one benchmark, or the directory above it.
    pub fn open(dir: &Path) -> Result<Self> {
        let root = locate(dir)?;
        let path = root.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        Ok(Self { root, manifest })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.manifest.config
    }

    fn read_checked(&self, rec: &SampleRecord, name: &str) -> Result<Field> {
        let file = format!("{name}.fgrd");
        let path = self.root.join(&rec.dir).join(&file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if let Some(sum) = rec.checksums.get(&file) {
            if &sha256_hex(&bytes) != sum {
                return Err(Error::InvalidField(format!("{}: checksum mismatch", path.display())));
            }
        }
        Field::from_fgrd_bytes(&bytes, &path)
    }

    /// Load LF, observations and permeability; never opens `hf.fgrd`.
    pub fn load_sample(&self, rec: &SampleRecord) -> Result<LoadedSample> {
        let lf = self.read_checked(rec, "lf")?;
        let mask = self.read_checked(rec, "mask")?;
        let values = self.read_checked(rec, "obsvals")?;
        let permeability = match self.manifest.benchmark {
            Benchmark::Darcy => Some(self.read_checked(rec, "perm")?),
            _ => None,
        };
        Ok(LoadedSample {
            id: rec.id.clone(),
            dir: self.root.join(&rec.dir),
            lf,
            obs: ObservationSet::new(mask, values)?,
            permeability,
        })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<LoadedSample>> {
        self.manifest.split(split).iter().map(|r| self.load_sample(r)).collect()
    }

    /// Reference HF field of a sample, for evaluation only.
    pub fn load_hf(&self, rec: &SampleRecord) -> Result<Field> {
        self.read_checked(rec, "hf")
    }

    /// Training instances with their residual operators.
    pub fn training_set(&self) -> Result<Vec<TrainSample>> {
        let cfg = self.config();
        self.load_split(Split::Train)?
            .into_iter()
            .map(|s| {
                Ok(TrainSample {
                    op: cfg.residual_operator(s.permeability.as_ref())?,
                    x0: s.lf,
                    obs: s.obs,
                })
            })
            .collect()
    }
}

/// Directory holding `manifest.json`, searched from `dir`.
pub fn locate(dir: &Path) -> Result<PathBuf> {
    if dir.join(MANIFEST).is_file() {
        return Ok(dir.to_path_buf());
    }
    for base in [dir.to_path_buf(), dir.join("data")] {
        if let Ok(entries) = std::fs::read_dir(&base) {
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join(MANIFEST).is_file())
                .collect();
            found.sort();
            if found.len() == 1 {
                return Ok(found.remove(0));
            }
            if found.len() > 1 {
                return Err(Error::Config(format!(
                    "{} holds several datasets; pass one of {found:?}",
                    base.display()
                )));
            }
        }
    }
    Err(Error::MissingFiles(vec![dir.join(MANIFEST)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::InterpMethod;

    fn small(b: Benchmark) -> ExperimentConfig {
        let mut c = ExperimentConfig::desk(b);
        c.n_train = 2;
        c.n_test = 1;
        match b {
            Benchmark::Burgers => {
                c.dims = vec![16];
                c.frames = 8;
            }
            Benchmark::Darcy => c.dims = vec![16, 16],
            Benchmark::Kolmogorov => {
                c.dims = vec![16, 16];
                c.frames = 2;
            }
        }
        c
    }

    #[test]
    fn layout_and_determinism() {
        let c = small(Benchmark::Burgers);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = gen_dataset(&c, a.path()).unwrap();
        let mb = gen_dataset(&c, b.path()).unwrap();
        assert_eq!(ma, mb);
        assert_eq!((ma.train.len(), ma.test.len()), (2, 1));
        let dir = a.path().join("data/burgers/train/sample_0001");
        for f in ["lf.fgrd", "hf.fgrd", "mask.fgrd", "obsvals.fgrd", "meta.json"] {
            assert!(dir.join(f).is_file(), "{f}");
        }
        let ds = Dataset::open(a.path()).unwrap();
        assert_eq!(ds.training_set().unwrap().len(), 2);
        assert!(ma.data_std > 0.0);
    }

    #[test]
    fn darcy_lf_is_nearest_interpolation_of_observed_hf() {
        let c = small(Benchmark::Darcy);
        let d = tempfile::tempdir().unwrap();
        gen_dataset(&c, d.path()).unwrap();
        let dir = d.path().join("data/darcy/test/sample_0000");
        let hf = field_read(&dir.join("hf.fgrd")).unwrap();
        let mask = field_read(&dir.join("mask.fgrd")).unwrap();
        let lf = field_read(&dir.join("lf.fgrd")).unwrap();
        let expect = make_lf_interp(&observe(&hf, &mask).unwrap(), InterpMethod::Nearest).unwrap();
        assert_eq!(lf, expect);
        let s = LoadedSample::from_dir(&dir, Benchmark::Darcy).unwrap();
        assert_eq!(s.lf, lf);
        assert!(s.permeability.is_some());
        assert!(matches!(LoadedSample::from_dir(d.path(), Benchmark::Darcy), Err(Error::MissingFiles(v)) if v.len() == 4));
    }

    #[test]
    fn r3_masks_are_shared() {
        let mut c = small(Benchmark::Kolmogorov);
        c.regime = Regime::R3;
        let d = tempfile::tempdir().unwrap();
        gen_dataset(&c, d.path()).unwrap();
        let base = d.path().join("data/kolmogorov");
        let m0 = field_read(&base.join("train/sample_0000/mask.fgrd")).unwrap();
        let m1 = field_read(&base.join("train/sample_0001/mask.fgrd")).unwrap();
        let m2 = field_read(&base.join("test/sample_0000/mask.fgrd")).unwrap();
        assert_eq!(m0, m1);
        assert_eq!(m0, m2);
    }

    #[test]
    fn tampered_file_is_rejected() {
        let c = small(Benchmark::Burgers);
        let d = tempfile::tempdir().unwrap();
        let m = gen_dataset(&c, d.path()).unwrap();
        let ds = Dataset::open(&d.path().join("data/burgers")).unwrap();
        let lf = ds.root.join(&m.train[0].dir).join("lf.fgrd");
        let f = field_read(&lf).unwrap();
        field_write(&f.map(|v| v + 1.0).unwrap(), &lf).unwrap();
        assert!(ds.load_sample(&m.train[0]).is_err());
    }
}
