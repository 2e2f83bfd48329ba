use std::time::Instant;

use crate::error::{Error, Result};

/// Timings of repeated runs of one operation.
#[derive(Clone, Debug, PartialEq)]
pub struct WallTime {
    pub median: f64,
    pub samples: Vec<f64>,
}

/// Median wall-clock seconds of `repetitions` calls to `run`. Any setup that
/// should not be timed belongs outside the closure.
pub fn bench_walltime(repetitions: usize, mut run: impl FnMut() -> Result<()>) -> Result<WallTime> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument("need at least one repetition".into()));
    }
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        run()?;
        samples.push(t.elapsed().as_secs_f64());
    }
    Ok(WallTime {
        median: median(&samples),
        samples,
    })
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
