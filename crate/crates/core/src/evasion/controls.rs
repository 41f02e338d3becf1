use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{clip_features, Dataset, FEATURE_MAX, FEATURE_MIN};
use crate::detector::{distance, mean_std, ClientState, DetectorConfig, DistanceSet};
use crate::error::{Error, Result};
use crate::neuralnet::Network;
use crate::rng::Rng;

/// Naive dummy-query strategies that an adversary might try first. They
/// are run against the real detector on real inputs and are expected to
/// fail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NegativeControl {
    /// Uniform noise over the feature cube.
    Noise,
    /// Natural samples of the upcoming useful query's class plus Gaussian noise.
    PerturbedNatural,
    /// Noise or perturbed naturals, kept only when their d_min falls within
    /// mean ± `sigmas`·std of the distances seen so far.
    BandConstrained { sigmas: f64 },
    /// Noise or perturbed naturals, kept only when W stays at or above δ.
    AcceptIfWOk,
}

impl NegativeControl {
    pub fn tag(self) -> &'static str {
        match self {
            NegativeControl::Noise => "noise",
            NegativeControl::PerturbedNatural => "perturbed_natural",
            NegativeControl::BandConstrained { .. } => "band_constrained",
            NegativeControl::AcceptIfWOk => "accept_if_w_ok",
        }
    }
}

pub struct ControlSetup<'a> {
    pub target: &'a Network,
    pub naturals: &'a Dataset,
    pub dummies_per_query: usize,
    pub noise_std: f64,
    /// Candidate draws per dummy slot for the filtering strategies; a slot
    /// with no accepted candidate is left empty.
    pub max_draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOutcome {
    /// 1-based position of the first alarm in the interleaved stream.
    pub first_alarm: Option<usize>,
    pub useful_submitted: usize,
    pub dummies: usize,
    pub rejected_draws: usize,
}

struct Mirror {
    state: ClientState,
    set: DistanceSet,
    submitted: usize,
}

impl Mirror {
    fn submit(&mut self, x: &[f64], class: usize, cfg: &DetectorConfig) -> Result<bool> {
        let v = self.state.observe(x, class, cfg)?;
        if let Some(d) = v.d_min {
            self.set.push(d);
        }
        self.submitted += 1;
        Ok(self.state.first_alarm().is_some())
    }

    fn candidate_dmin(&self, x: &[f64], class: usize, cfg: &DetectorConfig) -> Result<Option<f64>> {
        let Some(c) = self.state.class(class) else {
            return Ok(None);
        };
        let mut best = f64::INFINITY;
        for y in &c.growing {
            best = best.min(distance(y, x, cfg.metric)?);
        }
        Ok(Some(best))
    }
}

fn draw(
    control: NegativeControl,
    setup: &ControlSetup<'_>,
    want: usize,
    draw_index: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let noise = |rng: &mut Rng| -> Vec<f64> {
        (0..setup.target.input_dim())
            .map(|_| rng.random_range(FEATURE_MIN..=FEATURE_MAX))
            .collect()
    };
    let perturbed = |rng: &mut Rng| -> Result<Vec<f64>> {
        let pool: Vec<usize> = (0..setup.naturals.len())
            .filter(|&i| setup.naturals.label(i) == want)
            .collect();
        let base = if pool.is_empty() {
            setup
                .naturals
                .sample(rng.random_range(0..setup.naturals.len()))
        } else {
            setup.naturals.sample(pool[rng.random_range(0..pool.len())])
        };
        let n = Normal::new(0.0, setup.noise_std).map_err(|e| Error::Numeric(e.to_string()))?;
        let mut x: Vec<f64> = base.iter().map(|v| v + n.sample(rng)).collect();
        clip_features(&mut x);
        Ok(x)
    };
    match control {
        NegativeControl::Noise => Ok(noise(rng)),
        NegativeControl::PerturbedNatural => perturbed(rng),
        // the filtering strategies alternate between both generators
        _ if draw_index % 2 == 0 => Ok(noise(rng)),
        _ => perturbed(rng),
    }
}

/// Interleaves `dummies_per_query` dummies before every useful query of
/// `attack` and replays everything through a fresh detector state.
/// Stops at the first alarm.
pub fn run_negative_control<'a, I>(
    control: NegativeControl,
    attack: I,
    setup: &ControlSetup<'_>,
    cfg: &DetectorConfig,
    rng: &mut Rng,
) -> Result<ControlOutcome>
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    if setup.naturals.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(setup.noise_std > 0.0) {
        return Err(Error::invalid("noise_std must be positive"));
    }
    let mut m = Mirror {
        state: ClientState::new(),
        set: DistanceSet::new(),
        submitted: 0,
    };
    let mut useful = 0usize;
    let mut dummies = 0usize;
    let mut rejected = 0usize;
    let outcome = |m: &Mirror, useful, dummies, rejected| ControlOutcome {
        first_alarm: m.state.first_alarm(),
        useful_submitted: useful,
        dummies,
        rejected_draws: rejected,
    };
    for (x, class) in attack {
        for _ in 0..setup.dummies_per_query {
            let filtering = matches!(
                control,
                NegativeControl::BandConstrained { .. } | NegativeControl::AcceptIfWOk
            );
            let tries = if filtering { setup.max_draws.max(1) } else { 1 };
            let mut chosen = None;
            for t in 0..tries {
                let cand = draw(control, setup, class, t, rng)?;
                let c = setup.target.predict_label(&cand)?;
                let accepted = match control {
                    NegativeControl::Noise | NegativeControl::PerturbedNatural => true,
                    NegativeControl::BandConstrained { sigmas } => {
                        match m.candidate_dmin(&cand, c, cfg)? {
                            Some(d) if m.set.len() >= 2 => {
                                let (mean, std) = mean_std(m.set.values());
                                (d - mean).abs() <= sigmas * std
                            }
                            _ => true,
                        }
                    }
                    NegativeControl::AcceptIfWOk => match m.candidate_dmin(&cand, c, cfg)? {
                        Some(d) => {
                            m.set.push(d);
                            let ok = m.set.len() <= cfg.window_min || !m.set.decide(cfg).attack;
                            m.set.pop();
                            ok
                        }
                        None => true,
                    },
                };
                if accepted {
                    chosen = Some((cand, c));
                    break;
                }
                rejected += 1;
            }
            if let Some((cand, c)) = chosen {
                dummies += 1;
                if m.submit(&cand, c, cfg)? {
                    return Ok(outcome(&m, useful, dummies, rejected));
                }
            }
        }
        useful += 1;
        if m.submit(x, class, cfg)? {
            return Ok(outcome(&m, useful, dummies, rejected));
        }
    }
    Ok(outcome(&m, useful, dummies, rejected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen_blobs_dataset;
    use crate::neuralnet::Architecture;
    use crate::rng::seeded;

    #[test]
    fn fixed_step_stream_defeats_noise_dummies() {
        let naturals = gen_blobs_dataset(3, 2, 40, 6.0, &mut seeded(1)).unwrap();
        let target = Architecture::new(2, vec![4], 3).init(2);
        // a walk with a constant step: the textbook spiked distance stream
        let attack: Vec<(Vec<f64>, usize)> = (0..300)
            .map(|i| {
                let x = vec![-0.9 + 0.006 * i as f64, 0.1];
                let c = target.predict_label(&x).unwrap();
                (x, c)
            })
            .collect();
        let cfg = DetectorConfig::new(0.9);
        let setup = ControlSetup {
            target: &target,
            naturals: &naturals,
            dummies_per_query: 1,
            noise_std: 0.05,
            max_draws: 5,
        };
        for control in [
            NegativeControl::Noise,
            NegativeControl::PerturbedNatural,
            NegativeControl::BandConstrained { sigmas: 1.0 },
            NegativeControl::AcceptIfWOk,
        ] {
            let out = run_negative_control(
                control,
                attack.iter().map(|(x, c)| (x.as_slice(), *c)),
                &setup,
                &cfg,
                &mut seeded(3),
            )
            .unwrap();
            assert!(out.first_alarm.is_some(), "{}", control.tag());
        }
    }
}
