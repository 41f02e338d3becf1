use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Network;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::seeded;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl TrainingConfig {
    /// Fixed rule of thumb: SGD, learning rate 0.01, momentum 0.9, 10 epochs.
    pub fn papernot(seed: u64) -> Self {
        TrainingConfig {
            optimizer: OptimizerKind::SgdMomentum,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 10,
            batch_size: 32,
            dropout_rate: 0.0,
            seed,
        }
    }

    /// Adam at learning rate 0.001 for 100 epochs, used for target models.
    pub fn target_default(seed: u64) -> Self {
        TrainingConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.001,
            momentum: 0.0,
            epochs: 100,
            batch_size: 32,
            dropout_rate: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout rate must be in [0, 1)"));
        }
        Ok(())
    }
}

enum OptimizerState {
    Sgd { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl OptimizerState {
    fn new(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::SgdMomentum => OptimizerState::Sgd {
                velocity: vec![0.0; n],
            },
            OptimizerKind::Adam => OptimizerState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, cfg: &TrainingConfig, params: &mut [f64], grad: &[f64]) {
        let lr = cfg.learning_rate;
        match self {
            OptimizerState::Sgd { velocity } => {
                for ((p, g), v) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
                    *v = cfg.momentum * *v - lr * g;
                    *p += *v;
                }
            }
            OptimizerState::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t);
                let c2 = 1.0 - ADAM_BETA2.powi(*t);
                for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    *p -= lr * mh / (vh.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Minibatch training on cross-entropy. Returns the updated network; the
/// input is left untouched. Deterministic for a fixed `cfg.seed`.
pub fn train(net: &Network, data: &Dataset, cfg: &TrainingConfig) -> Result<Network> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != net.input_dim() {
        return Err(Error::Shape {
            expected: net.input_dim(),
            found: data.dim(),
        });
    }
    if data.classes() != net.classes() {
        return Err(Error::Shape {
            expected: net.classes(),
            found: data.classes(),
        });
    }
    let mut out = net.clone();
    let mut params = out.parameters();
    let mut state = OptimizerState::new(cfg.optimizer, params.len());
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let dropout = (cfg.dropout_rate > 0.0).then_some((&mut rng, cfg.dropout_rate));
            let (loss, grads) = out.accumulate_gradients(data, batch, dropout);
            epoch_loss += loss;
            let scale = 1.0 / batch.len() as f64;
            let grad: Vec<f64> = grads.flatten().into_iter().map(|g| g * scale).collect();
            state.step(cfg, &mut params, &grad);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            out.set_parameters(&params)?;
        }
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::Architecture;
    use rand::Rng;

    fn separable(seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..60 {
            let c = i % 2;
            let cx = if c == 0 { -0.5 } else { 0.5 };
            xs.push(vec![
                cx + rng.random_range(-0.3..0.3),
                rng.random_range(-0.8..0.8),
            ]);
            ys.push(c);
        }
        Dataset::labeled(xs, ys, 2).unwrap()
    }

    #[test]
    fn papernot_preset_values() {
        let cfg = TrainingConfig::papernot(0);
        assert_eq!(cfg.optimizer, OptimizerKind::SgdMomentum);
        assert_eq!(cfg.learning_rate, 0.01);
        assert_eq!(cfg.momentum, 0.9);
        assert_eq!(cfg.epochs, 10);
    }

    #[test]
    fn zero_epochs_leaves_weights() {
        let net = Architecture::new(2, vec![4], 2).init(5);
        let cfg = TrainingConfig {
            epochs: 0,
            ..TrainingConfig::papernot(1)
        };
        let out = train(&net, &separable(1), &cfg).unwrap();
        assert_eq!(out, net);
    }

    #[test]
    fn learns_separable_blobs() {
        let net = Architecture::new(2, vec![8], 2).init(5);
        let cfg = TrainingConfig {
            epochs: 100,
            batch_size: 8,
            ..TrainingConfig::papernot(2)
        };
        let data = separable(3);
        let out = train(&net, &data, &cfg).unwrap();
        assert!(out.accuracy(&data).unwrap() >= 0.95);
    }

    #[test]
    fn training_is_deterministic() {
        let net = Architecture::new(2, vec![8, 8], 2).init(9);
        let cfg = TrainingConfig {
            dropout_rate: 0.2,
            ..TrainingConfig::target_default(4)
        };
        let data = separable(4);
        let a = train(&net, &data, &cfg).unwrap();
        let b = train(&net, &data, &cfg).unwrap();
        let bits = |n: &Network| {
            n.parameters()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn soft_targets_train() {
        let base = separable(6);
        let probs = base
            .labels()
            .iter()
            .map(|&l| {
                if l == 0 {
                    vec![0.9, 0.1]
                } else {
                    vec![0.2, 0.8]
                }
            })
            .collect();
        let data = Dataset::new(
            base.samples().to_vec(),
            crate::data::Targets::Probabilities(probs),
            2,
        )
        .unwrap();
        let net = Architecture::new(2, vec![8], 2).init(1);
        let cfg = TrainingConfig {
            epochs: 50,
            learning_rate: 0.01,
            ..TrainingConfig::target_default(1)
        };
        let before = net.loss(&data).unwrap();
        let out = train(&net, &data, &cfg).unwrap();
        assert!(out.loss(&data).unwrap() < before);
        assert!(out.accuracy(&data).unwrap() > 0.9);
    }

    #[test]
    fn divergence_reports_epoch() {
        let net = Architecture::new(2, vec![8], 2).init(1);
        let cfg = TrainingConfig {
            learning_rate: 1e300,
            momentum: 0.0,
            ..TrainingConfig::papernot(1)
        };
        let err = train(&net, &separable(1), &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0 }), "{err:?}");
    }

    #[test]
    fn empty_dataset_rejected() {
        let net = Architecture::new(2, vec![], 2).init(1);
        let empty = Dataset::labeled(vec![], vec![], 2).unwrap();
        assert!(matches!(
            train(&net, &empty, &TrainingConfig::papernot(0)),
            Err(Error::EmptyDataset)
        ));
    }
}
