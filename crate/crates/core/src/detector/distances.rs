use serde::{Deserialize, Serialize};

use super::DetectorConfig;
use crate::error::{Error, Result};
use crate::shapiro::shapiro_w_sorted;

/// Outcome of the normality test on a distance stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub attack: bool,
    pub w: f64,
    /// Values dropped by the mean ± kσ trimming.
    pub trimmed_count: usize,
    /// The trimmed stream had fewer than 3 values or no spread.
    pub degenerate: bool,
}

/// The d_min stream in arrival order plus a sorted copy, so that trimming
/// is a contiguous slice and W needs no per-query sort.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct DistanceSet {
    values: Vec<f64>,
    sorted: Vec<f64>,
}

impl From<Vec<f64>> for DistanceSet {
    fn from(values: Vec<f64>) -> Self {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        DistanceSet { values, sorted }
    }
}

impl From<DistanceSet> for Vec<f64> {
    fn from(set: DistanceSet) -> Self {
        set.values
    }
}

impl DistanceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, d: f64) {
        self.values.push(d);
        let at = self.sorted.partition_point(|v| v.total_cmp(&d).is_le());
        self.sorted.insert(at, d);
    }

    /// Removes the most recently pushed value.
    pub fn pop(&mut self) -> Option<f64> {
        let d = self.values.pop()?;
        let at = self.sorted.partition_point(|v| v.total_cmp(&d).is_lt());
        self.sorted.remove(at);
        Some(d)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Trims to mean ± `cfg.outlier_sigmas`·σ and tests W against δ.
    /// Does not check the warm-up window; see [`decide`].
    pub fn decide(&self, cfg: &DetectorConfig) -> Decision {
        decide_sorted(&self.sorted, cfg)
    }

    /// W of the trimmed stream, or `None` when it is degenerate.
    pub fn trimmed_w(&self, cfg: &DetectorConfig) -> Option<f64> {
        let d = self.decide(cfg);
        (!d.degenerate).then_some(d.w)
    }
}

fn decide_sorted(sorted: &[f64], cfg: &DetectorConfig) -> Decision {
    let n = sorted.len();
    let degenerate = |trimmed_count| Decision {
        attack: true,
        w: 0.0,
        trimmed_count,
        degenerate: true,
    };
    if n == 0 {
        return degenerate(0);
    }
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    let lo = mean - cfg.outlier_sigmas * std;
    let hi = mean + cfg.outlier_sigmas * std;
    let start = sorted.partition_point(|v| *v < lo);
    let end = sorted.partition_point(|v| *v <= hi);
    let kept = &sorted[start..end.max(start)];
    let trimmed_count = n - kept.len();
    match shapiro_w_sorted(kept) {
        Ok(w) => Decision {
            attack: w < cfg.delta,
            w,
            trimmed_count,
            degenerate: false,
        },
        Err(_) => degenerate(trimmed_count),
    }
}

/// Runs the detection test on a distance stream holding more than
/// `cfg.window_min` values.
pub fn decide(distances: &[f64], cfg: &DetectorConfig) -> Result<Decision> {
    if distances.len() <= cfg.window_min {
        return Err(Error::TooFewSamples {
            needed: cfg.window_min + 1,
            got: distances.len(),
        });
    }
    if distances.iter().any(|d| !d.is_finite()) {
        return Err(Error::Numeric("non-finite distance".into()));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(decide_sorted(&sorted, cfg))
}
