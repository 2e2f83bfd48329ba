use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::observation::Regime;

/// `100·‖x̂ − x_ref‖₂ / ‖x_ref‖₂` over every entry (all frames together).
pub fn rel_error(pred: &Field, reference: &Field) -> Result<f64> {
    pred.ensure_same_dims(reference)?;
    let den = reference.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num = pred
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * num / den)
}

pub const METRICS_COLUMNS: &str = "sample,rel_error_percent,residual_rms,observation_misfit,wall_seconds,regime,noise_alpha";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sample: String,
    pub rel_error_percent: f64,
    pub residual_rms: f64,
    pub observation_misfit: f64,
    /// Inference wall time, when the prediction run recorded one.
    pub wall_seconds: Option<f64>,
    pub regime: Regime,
    pub noise_alpha: f64,
}

impl MetricsRow {
    /// Column-wise mean labelled `mean`; wall time averages the rows that have one.
    pub fn mean(rows: &[MetricsRow]) -> Option<MetricsRow> {
        let first = rows.first()?;
        let n = rows.len() as f64;
        let avg = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let walls: Vec<f64> = rows.iter().filter_map(|r| r.wall_seconds).collect();
        Some(MetricsRow {
            sample: "mean".into(),
            rel_error_percent: avg(|r| r.rel_error_percent),
            residual_rms: avg(|r| r.residual_rms),
            observation_misfit: avg(|r| r.observation_misfit),
            wall_seconds: (!walls.is_empty()).then(|| walls.iter().sum::<f64>() / walls.len() as f64),
            regime: first.regime,
            noise_alpha: first.noise_alpha,
        })
    }

    fn csv_line(&self) -> String {
        let wall = self.wall_seconds.map(|w| format!("{w:.6}")).unwrap_or_default();
        format!(
            "{},{:.12e},{:.12e},{:.12e},{},{:?},{}",
            self.sample, self.rel_error_percent, self.residual_rms, self.observation_misfit, wall, self.regime, self.noise_alpha
        )
    }
}

/// CSV with a fixed header, the given rows and then the mean row.
pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{METRICS_COLUMNS}").unwrap();
    for r in rows.iter().chain(MetricsRow::mean(rows).as_ref()) {
        writeln!(out, "{}", r.csv_line()).unwrap();
    }
    out
}
