//! Stateful per-client extraction detection.
//!
//! Each client keeps, per predicted class, a growing set of retained
//! queries. Every new query contributes its minimum distance to the growing
//! set of its class to a global distance stream `D`. Once `D` holds more than
//! `window_min` values, the stream is trimmed to mean ± 3σ and its
//! Shapiro-Wilk W is compared with the threshold δ: W < δ raises an alarm.
//!
//! Standard deviations use the population convention (divide by n).

mod distances;
mod response;

pub use distances::{decide, Decision, DistanceSet};
pub use response::{respond, Response};

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_MIN: usize = 100;
pub const DEFAULT_OUTLIER_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    Flag,
    Block,
    Deceive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub delta: f64,
    pub window_min: usize,
    pub outlier_sigmas: f64,
    pub metric: Metric,
    pub response_mode: ResponseMode,
}

impl DetectorConfig {
    pub fn new(delta: f64) -> Self {
        DetectorConfig {
            delta,
            window_min: DEFAULT_WINDOW_MIN,
            outlier_sigmas: DEFAULT_OUTLIER_SIGMAS,
            metric: Metric::L2,
            response_mode: ResponseMode::Flag,
        }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        DetectorConfig { delta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta {} outside (0, 1)",
                self.delta
            )));
        }
        if self.window_min < 3 {
            return Err(Error::invalid("window_min must be at least 3"));
        }
        if !(self.outlier_sigmas > 0.0) {
            return Err(Error::invalid("outlier_sigmas must be positive"));
        }
        Ok(())
    }
}

/// Distance between two samples of equal dimension.
pub fn distance(x: &[f64], y: &[f64], metric: Metric) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(match metric {
        Metric::L2 => x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
        Metric::L1 => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
    })
}

/// Population mean and standard deviation. Both are 0 for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    WarmingUp,
    Benign,
    Attack,
}

impl Status {
    pub fn tag(self) -> &'static str {
        match self {
            Status::WarmingUp => "warming_up",
            Status::Benign => "benign",
            Status::Attack => "attack",
        }
    }
}

/// Outcome of observing one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// 1-based query index within the client stream.
    pub index: usize,
    pub class: usize,
    pub status: Status,
    pub current_w: Option<f64>,
    /// `None` for the query that initialised its class.
    pub d_min: Option<f64>,
    pub trimmed_count: usize,
    /// Sticky: true from the first alarm on.
    pub alarmed: bool,
    pub degenerate: bool,
}

/// Growing set and threshold for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassState {
    pub growing: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    pub threshold: f64,
}

/// Per-client detector state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientState {
    classes: BTreeMap<usize, ClassState>,
    dmins: DistanceSet,
    input_dim: Option<usize>,
    live_alarm: bool,
    first_alarm: Option<usize>,
    queries_seen: usize,
}

impl ClientState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn class(&self, c: usize) -> Option<&ClassState> {
        self.classes.get(&c)
    }

    pub fn classes(&self) -> impl Iterator<Item = (&usize, &ClassState)> {
        self.classes.iter()
    }

    /// The d_min stream in arrival order.
    pub fn distances(&self) -> &[f64] {
        self.dmins.values()
    }

    pub fn queries_seen(&self) -> usize {
        self.queries_seen
    }

    /// Result of the most recent test (false while warming up).
    pub fn live_alarm(&self) -> bool {
        self.live_alarm
    }

    /// 1-based index of the first query that raised an alarm.
    pub fn first_alarm(&self) -> Option<usize> {
        self.first_alarm
    }

    /// Total number of retained samples across classes.
    pub fn growing_set_size(&self) -> usize {
        self.classes.values().map(|c| c.growing.len()).sum()
    }

    /// Bytes needed to hold the growing sets as f64 features.
    pub fn growing_set_bytes(&self) -> usize {
        self.classes
            .values()
            .flat_map(|c| c.growing.iter())
            .map(|s| s.len() * std::mem::size_of::<f64>())
            .sum()
    }

    /// Processes one query `x` that the protected model labelled `class`.
    pub fn observe(&mut self, x: &[f64], class: usize, cfg: &DetectorConfig) -> Result<Verdict> {
        if cfg.response_mode == ResponseMode::Block && self.first_alarm.is_some() {
            return Err(Error::QueryDenied);
        }
        match self.input_dim {
            Some(d) if d != x.len() => {
                return Err(Error::Shape {
                    expected: d,
                    found: x.len(),
                })
            }
            None => self.input_dim = Some(x.len()),
            _ => {}
        }
        self.queries_seen += 1;
        let frozen = self.first_alarm.is_some();
        let d_min = match self.classes.get_mut(&class) {
            None => {
                self.classes.insert(
                    class,
                    ClassState {
                        growing: vec![x.to_vec()],
                        distances: vec![0.0],
                        threshold: 0.0,
                    },
                );
                None
            }
            Some(state) => {
                let mut d_min = f64::INFINITY;
                for y in &state.growing {
                    d_min = d_min.min(distance(y, x, cfg.metric)?);
                }
                self.dmins.push(d_min);
                if !frozen && d_min > state.threshold {
                    state.growing.push(x.to_vec());
                    state.distances.push(d_min);
                    let (m, s) = mean_std(&state.distances);
                    state.threshold = state.threshold.max(m - s);
                }
                Some(d_min)
            }
        };

        let mut verdict = Verdict {
            index: self.queries_seen,
            class,
            status: Status::WarmingUp,
            current_w: None,
            d_min,
            trimmed_count: 0,
            alarmed: self.first_alarm.is_some(),
            degenerate: false,
        };
        if self.dmins.len() > cfg.window_min {
            let decision = self.dmins.decide(cfg);
            self.live_alarm = decision.attack;
            if decision.attack && self.first_alarm.is_none() {
                self.first_alarm = Some(self.queries_seen);
            }
            verdict.status = if decision.attack {
                Status::Attack
            } else {
                Status::Benign
            };
            verdict.current_w = Some(decision.w);
            verdict.trimmed_count = decision.trimmed_count;
            verdict.degenerate = decision.degenerate;
            verdict.alarmed = self.first_alarm.is_some();
        }
        Ok(verdict)
    }
}

/// Detector over many clients, keyed by an opaque client id.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectorConfig,
    clients: BTreeMap<String, ClientState>,
}

impl Detector {
    pub fn new(cfg: DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Detector {
            cfg,
            clients: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn observe(&mut self, client: &str, x: &[f64], class: usize) -> Result<Verdict> {
        let cfg = self.cfg;
        self.clients
            .entry(client.to_string())
            .or_default()
            .observe(x, class, &cfg)
    }

    pub fn client(&self, client: &str) -> Option<&ClientState> {
        self.clients.get(client)
    }
}

/// Replays `(sample, class)` pairs through a fresh client state.
pub fn replay<'a, I>(queries: I, cfg: &DetectorConfig) -> Result<(Vec<Verdict>, ClientState)>
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    cfg.validate()?;
    let mut state = ClientState::new();
    let mut verdicts = Vec::new();
    for (x, c) in queries {
        verdicts.push(state.observe(x, c, cfg)?);
    }
    Ok((verdicts, state))
}

/// Writes verdicts as CSV: `index,class,d_min,w,status` with empty nulls.
pub fn write_verdicts_csv<W: Write>(verdicts: &[Verdict], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "class", "d_min", "w", "status"])?;
    for v in verdicts {
        out.write_record([
            v.index.to_string(),
            v.class.to_string(),
            v.d_min.map(|d| format!("{d:?}")).unwrap_or_default(),
            v.current_w.map(|d| format!("{d:?}")).unwrap_or_default(),
            v.status.tag().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
