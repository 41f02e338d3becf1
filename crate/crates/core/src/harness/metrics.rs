use rand::Rng as _;

use crate::crafting::{craft_toward, CraftSpec, Mode, DEFAULT_STEPS, TRANSFER_EPSILON};
use crate::data::{Dataset, FEATURE_MAX, FEATURE_MIN};
use crate::error::{Error, Result};
use crate::neuralnet::Network;
use crate::rng::Rng;

pub const RU_SAMPLES: usize = 4000;

/// Macro-averaged F1 over the classes that occur in `truth` or `pred`.
/// A class never predicted correctly scores 0.
pub fn macro_f1(truth: &[usize], pred: &[usize], classes: usize) -> f64 {
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0;
    for c in 0..classes {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom > 0 {
            present += 1;
            sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    if present == 0 {
        0.0
    } else {
        sum / present as f64
    }
}

fn labels(net: &Network, samples: &[Vec<f64>]) -> Result<Vec<usize>> {
    samples.iter().map(|x| net.predict_label(x)).collect()
}

/// Macro-F of the substitute's labels against the target's labels.
pub fn test_agreement(target: &Network, substitute: &Network, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let truth = labels(target, test.samples())?;
    let pred = labels(substitute, test.samples())?;
    Ok(macro_f1(&truth, &pred, target.classes()))
}

/// Plain label agreement on `n` points drawn uniformly from the feature cube.
pub fn ru_agreement(
    target: &Network,
    substitute: &Network,
    n: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("need at least one random sample"));
    }
    let dim = target.input_dim();
    let mut agree = 0;
    for _ in 0..n {
        let x: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(FEATURE_MIN..=FEATURE_MAX))
            .collect();
        if target.predict_label(&x)? == substitute.predict_label(&x)? {
            agree += 1;
        }
    }
    Ok(agree as f64 / n as f64)
}

/// MI-FGSM at ε = 64/255, 11 steps, decay 1: the default transfer attack.
pub fn default_transfer_spec() -> CraftSpec {
    CraftSpec::mifgsm(Mode::NonTargeted, TRANSFER_EPSILON, DEFAULT_STEPS, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transferability {
    pub targeted: f64,
    pub non_targeted: f64,
}

/// Adversarial examples crafted on the substitute and evaluated on the
/// target, relative to the target's label c of each seed.
///
/// Non-targeted: success when the target's label moves away from c.
/// Targeted: one variant per class c' ≠ c, success when the target outputs c'.
pub fn transferability(
    target: &Network,
    substitute: &Network,
    seeds: &Dataset,
    spec: &CraftSpec,
) -> Result<Transferability> {
    if seeds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = target.classes();
    let untargeted = spec.with_mode(Mode::NonTargeted);
    let targeted = spec.with_mode(Mode::Targeted);
    let mut nt_hits = 0usize;
    let mut t_hits = 0usize;
    let mut t_total = 0usize;
    for x in seeds.samples() {
        let c = target.predict_label(x)?;
        let adv = craft_toward(substitute, x, &untargeted, c)?;
        if target.predict_label(&adv)? != c {
            nt_hits += 1;
        }
        for t in (0..classes).filter(|&t| t != c) {
            let adv = craft_toward(substitute, x, &targeted, t)?;
            t_total += 1;
            if target.predict_label(&adv)? == t {
                t_hits += 1;
            }
        }
    }
    Ok(Transferability {
        targeted: if t_total == 0 {
            0.0
        } else {
            t_hits as f64 / t_total as f64
        },
        non_targeted: nt_hits as f64 / seeds.len() as f64,
    })
}
