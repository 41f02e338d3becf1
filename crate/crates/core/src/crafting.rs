//! Gradient-sign adversarial examples under an L∞ budget.
//!
//! All three methods share one loop: FGSM is a single step of size ε,
//! I-FGSM takes `steps` steps of ε/steps, and MI-FGSM additionally
//! accumulates L1-normalised gradients with decay μ before taking the sign.
//! After every step the sample is projected onto the ε-ball around the
//! original and then onto the feature range.

use serde::{Deserialize, Serialize};

use crate::data::{FEATURE_MAX, FEATURE_MIN};
use crate::error::{Error, Result};
use crate::neuralnet::Network;

/// Default number of steps for the iterative methods.
pub const DEFAULT_STEPS: usize = 11;

/// Transferability budget, in feature units.
pub const TRANSFER_EPSILON: f64 = 64.0 / 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fgsm,
    Ifgsm,
    Mifgsm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Targeted,
    NonTargeted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CraftSpec {
    pub method: Method,
    pub mode: Mode,
    pub epsilon: f64,
    pub steps: usize,
    pub momentum_decay: f64,
    pub clip: (f64, f64),
}

impl CraftSpec {
    pub fn fgsm(mode: Mode, epsilon: f64) -> Self {
        CraftSpec {
            method: Method::Fgsm,
            mode,
            epsilon,
            steps: 1,
            momentum_decay: 0.0,
            clip: (FEATURE_MIN, FEATURE_MAX),
        }
    }

    pub fn ifgsm(mode: Mode, epsilon: f64, steps: usize) -> Self {
        CraftSpec {
            method: Method::Ifgsm,
            steps,
            ..Self::fgsm(mode, epsilon)
        }
    }

    pub fn mifgsm(mode: Mode, epsilon: f64, steps: usize, decay: f64) -> Self {
        CraftSpec {
            method: Method::Mifgsm,
            steps,
            momentum_decay: decay,
            ..Self::fgsm(mode, epsilon)
        }
    }

    pub fn with_mode(self, mode: Mode) -> Self {
        CraftSpec { mode, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clip;
        if !(lo < hi) {
            return Err(Error::invalid("clip range must be non-empty"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= hi - lo) {
            return Err(Error::invalid(format!(
                "epsilon {} outside [0, {}]",
                self.epsilon,
                hi - lo
            )));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.method == Method::Fgsm && self.steps != 1 {
            return Err(Error::invalid("fgsm takes exactly one step"));
        }
        if self.momentum_decay < 0.0 {
            return Err(Error::invalid("momentum decay must be non-negative"));
        }
        Ok(())
    }
}

/// Crafts an adversarial version of `x` against `net`.
///
/// Non-targeted mode ascends the loss of the class `net` currently predicts;
/// targeted mode descends the loss of `target`, which must differ from the
/// current prediction.
pub fn craft(
    net: &Network,
    x: &[f64],
    spec: &CraftSpec,
    target: Option<usize>,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let current = net.predict_label(x)?;
    match spec.mode {
        Mode::NonTargeted => craft_toward(net, x, spec, current),
        Mode::Targeted => {
            let t =
                target.ok_or_else(|| Error::invalid("targeted crafting needs a target class"))?;
            if t >= net.classes() {
                return Err(Error::invalid(format!("target class {t} out of range")));
            }
            if t == current {
                return Err(Error::invalid(format!(
                    "target class {t} is already the predicted class"
                )));
            }
            craft_toward(net, x, spec, t)
        }
    }
}

/// Crafting loop without the prediction checks of [`craft`]: `class` is the
/// class whose loss is ascended (non-targeted) or descended (targeted).
pub fn craft_toward(net: &Network, x: &[f64], spec: &CraftSpec, class: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    let (lo, hi) = spec.clip;
    let direction = match spec.mode {
        Mode::NonTargeted => 1.0,
        Mode::Targeted => -1.0,
    };
    let step = spec.epsilon / spec.steps as f64;
    let mut cur = x.to_vec();
    let mut accum = vec![0.0; x.len()];
    for _ in 0..spec.steps {
        let grad = net.input_gradient(&cur, class)?;
        let signs: Vec<f64> = match spec.method {
            Method::Fgsm | Method::Ifgsm => grad.iter().map(|g| sign(*g)).collect(),
            Method::Mifgsm => {
                let l1: f64 = grad.iter().map(|g| g.abs()).sum();
                // a zero gradient adds nothing; the accumulator still decays
                let scale = if l1 > 0.0 { 1.0 / l1 } else { 0.0 };
                for (a, g) in accum.iter_mut().zip(&grad) {
                    *a = spec.momentum_decay * *a + g * scale;
                }
                accum.iter().map(|a| sign(*a)).collect()
            }
        };
        if signs.iter().all(|s| *s == 0.0) {
            continue;
        }
        for ((c, s), x0) in cur.iter_mut().zip(&signs).zip(x) {
            let moved = *c + direction * step * s;
            *c = moved
                .clamp(x0 - spec.epsilon, x0 + spec.epsilon)
                .clamp(lo, hi);
        }
    }
    Ok(cur)
}

/// One targeted variant per class other than the current prediction.
pub fn craft_targeted_suite(
    net: &Network,
    x: &[f64],
    spec: &CraftSpec,
) -> Result<Vec<(usize, Vec<f64>)>> {
    if spec.mode != Mode::Targeted {
        return Err(Error::invalid("targeted suite needs a targeted spec"));
    }
    if net.classes() < 2 {
        return Err(Error::invalid("targeted suite needs at least two classes"));
    }
    let current = net.predict_label(x)?;
    (0..net.classes())
        .filter(|&c| c != current)
        .map(|c| craft_toward(net, x, spec, c).map(|v| (c, v)))
        .collect()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
