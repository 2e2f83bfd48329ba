//! Coordinate-selection observations, sensor masks and the hard projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::rng::RngStream;

/// Sensor-placement regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Fresh random locations at every frame.
    R1,
    /// One random set per trajectory, shared by its frames.
    R2,
    /// One set for the whole dataset.
    R3,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "R1" => Ok(Regime::R1),
            "R2" => Ok(Regime::R2),
            "R3" => Ok(Regime::R3),
            _ => Err(Error::Config(format!("unknown regime {s:?}"))),
        }
    }
}

/// How a state field splits into spatial frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridLayout {
    /// `[space, time]`: each time column is a frame.
    SpaceTime { nx: usize, nt: usize },
    /// `[frame, row, col]`.
    Frames { frames: usize, n0: usize, n1: usize },
    /// `[row, col]`, a single frame.
    Static { n0: usize, n1: usize },
}

impl GridLayout {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            GridLayout::SpaceTime { nx, nt } => vec![nx, nt],
            GridLayout::Frames { frames, n0, n1 } => vec![frames, n0, n1],
            GridLayout::Static { n0, n1 } => vec![n0, n1],
        }
    }

    pub fn frames(&self) -> usize {
        match *self {
            GridLayout::SpaceTime { nt, .. } => nt,
            GridLayout::Frames { frames, .. } => frames,
            GridLayout::Static { .. } => 1,
        }
    }

    pub fn n_spatial(&self) -> usize {
        match *self {
            GridLayout::SpaceTime { nx, .. } => nx,
            GridLayout::Frames { n0, n1, .. } | GridLayout::Static { n0, n1 } => n0 * n1,
        }
    }

    /// Flat index of spatial point `s` in frame `f`.
    pub fn index(&self, frame: usize, s: usize) -> usize {
        match *self {
            GridLayout::SpaceTime { nt, .. } => s * nt + frame,
            GridLayout::Frames { n0, n1, .. } => frame * n0 * n1 + s,
            GridLayout::Static { .. } => s,
        }
    }
}

/// Binary mask `M` plus observed values `y` on the grid (zero where `M = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    mask: Field,
    values: Field,
}

impl ObservationSet {
    pub fn new(mask: Field, values: Field) -> Result<Self> {
        mask.ensure_same_dims(&values)?;
        for (k, (&m, &v)) in mask.values().iter().zip(values.values()).enumerate() {
            if m != 0.0 && m != 1.0 {
                return Err(Error::InvalidArgument(format!("mask entry {k} is {m}, expected 0 or 1")));
            }
            if m == 0.0 && v != 0.0 {
                return Err(Error::InvalidArgument(format!("observed value at unmasked index {k}")));
            }
        }
        Ok(Self { mask, values })
    }

    pub fn mask(&self) -> &Field {
        &self.mask
    }

    pub fn values(&self) -> &Field {
        &self.values
    }

    pub fn dims(&self) -> &[usize] {
        self.mask.dims()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.values().iter().filter(|&&m| m == 1.0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.observed_count() == 0
    }

    pub fn is_observed(&self, k: usize) -> bool {
        self.mask.values()[k] == 1.0
    }

    /// `‖M ⊙ (x − y)‖₂`.
    pub fn misfit(&self, x: &Field) -> Result<f64> {
        x.ensure_same_dims(&self.mask)?;
        let ss: f64 = x
            .values()
            .iter()
            .zip(self.mask.values())
            .zip(self.values.values())
            .filter(|((_, &m), _)| m == 1.0)
            .map(|((a, _), b)| (a - b).powi(2))
            .sum();
        Ok(ss.sqrt())
    }
}

/// Draw a sensor mask.
///
/// Each frame gets exactly `round(ratio · n_spatial)` points. Under R2 and R3
/// one set is drawn and copied to every frame; for R3 the caller passes a
/// dataset-level stream so that all samples share it.
pub fn sample_mask(regime: Regime, ratio: f64, layout: GridLayout, rng: &mut RngStream) -> Result<Field> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("ratio must lie in (0, 1], got {ratio}")));
    }
    let n = layout.n_spatial();
    let count = ((ratio * n as f64).round() as usize).min(n);
    let mut mask = vec![0.0; layout.dims().iter().product()];
    let draw = |rng: &mut RngStream| {
        let mut idx: Vec<usize> = (0..n).collect();
        for k in 0..count {
            let j = k + rng.below(n - k);
            idx.swap(k, j);
        }
        idx.truncate(count);
        idx
    };
    match regime {
        Regime::R1 => {
            for f in 0..layout.frames() {
                for s in draw(rng) {
                    mask[layout.index(f, s)] = 1.0;
                }
            }
        }
        Regime::R2 | Regime::R3 => {
            let set = draw(rng);
            for f in 0..layout.frames() {
                for &s in &set {
                    mask[layout.index(f, s)] = 1.0;
                }
            }
        }
    }
    Field::new(layout.dims(), mask)
}

/// `H(x)`: observed values `M ⊙ x`.
pub fn observe(x: &Field, mask: &Field) -> Result<ObservationSet> {
    let values = x.zip_map(mask, |v, m| if m == 1.0 { v } else { 0.0 })?;
    ObservationSet::new(mask.clone(), values)
}

/// `M ⊙ y + (1 − M) ⊙ x`, taken entry-wise so observed entries equal `y` bit-for-bit.
pub fn project(x: &Field, obs: &ObservationSet) -> Result<Field> {
    x.ensure_same_dims(&obs.mask)?;
    let values = x
        .values()
        .iter()
        .zip(obs.mask.values())
        .zip(obs.values.values())
        .map(|((&v, &m), &y)| if m == 1.0 { y } else { v })
        .collect();
    x.with_values(values)
}

/// Add `N(0, (α·data_std)²)` noise to observed values.
pub fn perturb_observations(obs: &ObservationSet, alpha: f64, data_std: f64, rng: &mut RngStream) -> Result<ObservationSet> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(obs.clone());
    }
    let sigma = alpha * data_std;
    let values = obs
        .values
        .values()
        .iter()
        .zip(obs.mask.values())
        .map(|(&v, &m)| if m == 1.0 { v + sigma * rng.normal() } else { 0.0 })
        .collect();
    ObservationSet::new(obs.mask.clone(), obs.values.with_values(values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> GridLayout {
        GridLayout::SpaceTime { nx: 20, nt: 6 }
    }

    #[test]
    fn full_ratio_observes_everything() {
        let mut rng = RngStream::new(1, 0);
        for regime in [Regime::R1, Regime::R2, Regime::R3] {
            let m = sample_mask(regime, 1.0, layout(), &mut rng).unwrap();
            assert!(m.values().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn per_frame_cardinality() {
        let mut rng = RngStream::new(2, 0);
        let lay = GridLayout::Frames { frames: 3, n0: 8, n1: 8 };
        let m = sample_mask(Regime::R1, 0.1, lay, &mut rng).unwrap();
        for f in 0..3 {
            let c = (0..64).filter(|&s| m.values()[lay.index(f, s)] == 1.0).count();
            assert_eq!(c, 6);
        }
    }

    #[test]
    fn r2_replicates_across_frames() {
        let mut rng = RngStream::new(3, 0);
        let lay = layout();
        let m = sample_mask(Regime::R2, 0.25, lay, &mut rng).unwrap();
        for s in 0..20 {
            let first = m.values()[lay.index(0, s)];
            assert!((1..6).all(|f| m.values()[lay.index(f, s)] == first));
        }
    }

    #[test]
    fn bad_ratio() {
        let mut rng = RngStream::new(3, 0);
        assert!(sample_mask(Regime::R1, 0.0, layout(), &mut rng).is_err());
        assert!(sample_mask(Regime::R1, 1.5, layout(), &mut rng).is_err());
    }

    #[test]
    fn projection_hand_case() {
        let x = Field::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let obs = ObservationSet::new(
            Field::new(vec![3], vec![0.0, 1.0, 0.0]).unwrap(),
            Field::new(vec![3], vec![0.0, 9.0, 0.0]).unwrap(),
        )
        .unwrap();
        let p = project(&x, &obs).unwrap();
        assert_eq!(p.values(), &[1.0, 9.0, 3.0]);
        assert_eq!(project(&p, &obs).unwrap(), p);
        assert_eq!(observe(&p, obs.mask()).unwrap(), obs);
    }

    #[test]
    fn observe_all_and_none() {
        let x = Field::new(vec![4], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let all = observe(&x, &Field::filled(vec![4], 1.0).unwrap()).unwrap();
        assert_eq!(all.values(), &x);
        let none = observe(&x, &Field::zeros(vec![4]).unwrap()).unwrap();
        assert!(none.is_empty());
        assert_eq!(none.values().max_abs(), 0.0);
    }

    #[test]
    fn invalid_sets_rejected() {
        let m = Field::new(vec![2], vec![0.5, 1.0]).unwrap();
        assert!(ObservationSet::new(m, Field::zeros(vec![2]).unwrap()).is_err());
        let m = Field::new(vec![2], vec![0.0, 1.0]).unwrap();
        assert!(ObservationSet::new(m, Field::new(vec![2], vec![1.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn noise_level() {
        let n = 100_000;
        let obs = observe(&Field::zeros(vec![n]).unwrap(), &Field::filled(vec![n], 1.0).unwrap()).unwrap();
        let mut rng = RngStream::new(4, 0);
        assert_eq!(perturb_observations(&obs, 0.0, 2.0, &mut rng).unwrap(), obs);
        let p = perturb_observations(&obs, 0.1, 2.0, &mut rng).unwrap();
        assert!((p.values().std() / 0.2 - 1.0).abs() < 0.02);
        assert!(perturb_observations(&obs, -0.1, 2.0, &mut rng).is_err());
    }
}
