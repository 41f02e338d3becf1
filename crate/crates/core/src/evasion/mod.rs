//! Dummy-query planning for an adaptive adversary that knows δ.
//!
//! The planner works on distances only: it decides which d_min values
//! dummy queries would need to contribute so that the detector never fires,
//! and counts how many are needed. It does not construct the inputs.

mod controls;

pub use controls::{run_negative_control, ControlOutcome, ControlSetup, NegativeControl};

use std::io::Write;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detector::{mean_std, Decision, DetectorConfig, DistanceSet};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};
use crate::shapiro::shapiro_w_sorted;

pub const DUMMY_CAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Useful,
    Dummy,
}

impl EntryKind {
    pub fn tag(self) -> &'static str {
        match self {
            EntryKind::Useful => "useful",
            EntryKind::Dummy => "dummy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub kind: EntryKind,
    pub d_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvasionConfig {
    /// Most dummies allowed in front of a single useful value.
    pub cap: usize,
    /// Candidates drawn per attempt; the best one is kept.
    pub candidates: usize,
    /// Attempts (each a fresh batch of candidates) before giving up on a dummy.
    pub attempts: usize,
    /// W is already kept at or above δ from this stream length on, so the
    /// stream is in shape when the detector's window fills.
    pub shape_from: usize,
    pub seed: u64,
}

impl Default for EvasionConfig {
    fn default() -> Self {
        EvasionConfig {
            cap: DUMMY_CAP,
            candidates: 16,
            attempts: 8,
            shape_from: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvasionPlan {
    pub entries: Vec<PlanEntry>,
    pub useful: usize,
    pub dummies: usize,
    /// dummies / useful
    pub overhead_ratio: f64,
}

impl EvasionPlan {
    pub fn stream(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.d_min).collect()
    }

    pub fn useful_stream(&self) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.kind == EntryKind::Useful)
            .map(|e| e.d_min)
            .collect()
    }

    /// `kind,d_min` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["kind", "d_min"])?;
        for e in &self.entries {
            out.write_record([e.kind.tag(), &format!("{:?}", e.d_min)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// The detector's decision at every position of a distance stream, `None`
/// while the window is still filling.
pub fn replay_distances(stream: &[f64], cfg: &DetectorConfig) -> Vec<Option<Decision>> {
    let mut set = DistanceSet::new();
    stream
        .iter()
        .map(|&d| {
            set.push(d);
            (set.len() > cfg.window_min).then(|| set.decide(cfg))
        })
        .collect()
}

fn alarms(set: &DistanceSet, cfg: &DetectorConfig) -> bool {
    set.len() > cfg.window_min && set.decide(cfg).attack
}

/// The smaller of the trimmed and the untrimmed W. Keeping both above δ
/// stops outliers from piling up behind the trimming bound until they all
/// re-enter the trimmed set at once.
fn score(set: &DistanceSet, cfg: &DetectorConfig) -> f64 {
    let d = set.decide(cfg);
    if d.degenerate {
        return f64::NEG_INFINITY;
    }
    match shapiro_w_sorted(set.sorted()) {
        Ok(raw) => d.w.min(raw),
        Err(_) => f64::NEG_INFINITY,
    }
}

fn shape_violated(set: &DistanceSet, cfg: &DetectorConfig, shape_from: usize) -> bool {
    if alarms(set, cfg) {
        return true;
    }
    set.len() >= shape_from.max(3) && score(set, cfg) < cfg.delta
}

fn draw_candidate(envelope: &Option<Normal<f64>>, fallback: f64, rng: &mut Rng) -> f64 {
    match envelope {
        Some(n) => {
            for _ in 0..64 {
                let d = n.sample(rng);
                if d >= 0.0 {
                    return d;
                }
            }
            0.0
        }
        None => fallback,
    }
}

/// Interleaves dummy distances into `attack_dmins` so that the detector
/// never fires on the combined stream.
///
/// Greedy: before each useful value that would break the shape constraint
/// (from `shape_from` values on, both the trimmed and the untrimmed W stay
/// at or above δ), dummies are added one at a time. Each dummy is the best of a batch of
/// candidates drawn from N(mean, std) of the current stream (truncated at
/// zero), where "best" maximizes W once the useful value is appended, among
/// candidates that do not raise an alarm themselves.
pub fn plan_dummy_distances(
    attack_dmins: &[f64],
    cfg: &DetectorConfig,
    ev: &EvasionConfig,
) -> Result<EvasionPlan> {
    cfg.validate()?;
    if attack_dmins.is_empty() {
        return Err(Error::invalid("attack stream is empty"));
    }
    if attack_dmins.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::Numeric(
            "distances must be finite and non-negative".into(),
        ));
    }
    if ev.candidates == 0 || ev.attempts == 0 {
        return Err(Error::invalid(
            "need at least one candidate and one attempt",
        ));
    }
    let mut rng = seeded(ev.seed);
    let mut set = DistanceSet::new();
    let mut entries = Vec::with_capacity(attack_dmins.len());
    let mut dummies = 0usize;
    for (index, &u) in attack_dmins.iter().enumerate() {
        let mut added = 0usize;
        loop {
            set.push(u);
            if !shape_violated(&set, cfg, ev.shape_from) {
                break;
            }
            set.pop();
            if added == ev.cap {
                return Err(Error::EvasionInfeasible { index, cap: ev.cap });
            }
            let (mean, std) = mean_std(set.values());
            let envelope = (set.len() >= 2 && std > 0.0)
                .then(|| Normal::new(mean, std).ok())
                .flatten();
            let fallback = if set.is_empty() { u } else { mean };
            let mut best: Option<(f64, f64)> = None;
            for _ in 0..ev.attempts {
                for _ in 0..ev.candidates {
                    let d = draw_candidate(&envelope, fallback, &mut rng);
                    set.push(d);
                    let admissible = !alarms(&set, cfg);
                    let s = if admissible {
                        set.push(u);
                        let s = score(&set, cfg);
                        set.pop();
                        s
                    } else {
                        f64::NEG_INFINITY
                    };
                    set.pop();
                    if admissible && best.is_none_or(|(_, b)| s > b) {
                        best = Some((d, s));
                    }
                }
                if best.is_some() {
                    break;
                }
            }
            let (d, _) = best.ok_or(Error::EvasionInfeasible { index, cap: ev.cap })?;
            set.push(d);
            entries.push(PlanEntry {
                kind: EntryKind::Dummy,
                d_min: d,
            });
            added += 1;
            dummies += 1;
        }
        entries.push(PlanEntry {
            kind: EntryKind::Useful,
            d_min: u,
        });
    }
    Ok(EvasionPlan {
        entries,
        useful: attack_dmins.len(),
        dummies,
        overhead_ratio: dummies as f64 / attack_dmins.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn normal_stream(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        let dist = Normal::new(1.0, 0.1).unwrap();
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    }

    fn spiked_stream(seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        let mut s = normal_stream(100, seed);
        for _ in 0..200 {
            s.push(if rng.random_bool(0.8) {
                0.3
            } else {
                0.3 + rng.random_range(0.0..0.01)
            });
        }
        s
    }

    #[test]
    fn normal_stream_needs_no_dummies() {
        let cfg = DetectorConfig::new(0.9);
        let s = normal_stream(300, 1);
        assert!(replay_distances(&s, &cfg)
            .iter()
            .flatten()
            .all(|d| !d.attack));
        let plan = plan_dummy_distances(&s, &cfg, &EvasionConfig::default()).unwrap();
        assert_eq!(plan.dummies, 0);
        assert_eq!(plan.overhead_ratio, 0.0);
    }

    #[test]
    fn spiked_stream_is_repaired() {
        let cfg = DetectorConfig::new(0.95);
        let s = spiked_stream(2);
        assert!(replay_distances(&s, &cfg)
            .iter()
            .flatten()
            .any(|d| d.attack));
        let plan = plan_dummy_distances(&s, &cfg, &EvasionConfig::default()).unwrap();
        assert!(plan.dummies > 0 && plan.overhead_ratio > 0.0);
        assert!(replay_distances(&plan.stream(), &cfg)
            .iter()
            .flatten()
            .all(|d| !d.attack));
        assert_eq!(plan.useful_stream(), s);
        let again = plan_dummy_distances(&s, &cfg, &EvasionConfig::default()).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn removing_dummies_restores_verdicts() {
        let cfg = DetectorConfig::new(0.95);
        let s = spiked_stream(3);
        let plan = plan_dummy_distances(&s, &cfg, &EvasionConfig::default()).unwrap();
        assert_eq!(
            replay_distances(&plan.useful_stream(), &cfg),
            replay_distances(&s, &cfg)
        );
    }

    #[test]
    fn cap_exhaustion_reports_index() {
        let cfg = DetectorConfig::new(0.95);
        let s = spiked_stream(4);
        let ev = EvasionConfig {
            cap: 1,
            ..EvasionConfig::default()
        };
        match plan_dummy_distances(&s, &cfg, &ev) {
            Err(Error::EvasionInfeasible { index, cap }) => {
                assert_eq!(cap, 1);
                assert!(index < s.len());
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn bad_inputs() {
        let cfg = DetectorConfig::new(0.9);
        let ev = EvasionConfig::default();
        assert!(plan_dummy_distances(&[], &cfg, &ev).is_err());
        assert!(plan_dummy_distances(&[1.0, f64::NAN], &cfg, &ev).is_err());
        assert!(plan_dummy_distances(&[1.0], &DetectorConfig::new(1.0), &ev).is_err());
    }

    #[test]
    fn csv_rows() {
        let plan = EvasionPlan {
            entries: vec![
                PlanEntry {
                    kind: EntryKind::Dummy,
                    d_min: 0.5,
                },
                PlanEntry {
                    kind: EntryKind::Useful,
                    d_min: 0.25,
                },
            ],
            useful: 1,
            dummies: 1,
            overhead_ratio: 1.0,
        };
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "kind,d_min\ndummy,0.5\nuseful,0.25\n"
        );
    }
}
