//! Cross-validated hyperparameter search over (learning rate, epochs),
//! driven by a Gaussian-process surrogate.
//!
//! Both axes are searched in log scale. Internally every point lives in the
//! unit square of normalized log coordinates.

mod gp;

pub use gp::{gp_fit, gp_predict, GpModel, KernelParams, DEFAULT_LENGTH_SCALE, DEFAULT_NOISE};

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::neuralnet::{train, Architecture, OptimizerKind, TrainingConfig};
use crate::rng::{derive_seed, Rng};

pub const DEFAULT_FOLDS: usize = 5;
pub const CORNER_EVALUATIONS: usize = 4;
pub const RANDOM_EVALUATIONS: usize = 11;
pub const GP_EVALUATIONS: usize = 15;
/// Candidates per axis of the acquisition lattice (32² = 1024 points).
pub const GRID_SIDE: usize = 32;
/// Dropout used while searching.
pub const SEARCH_DROPOUT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperRange {
    pub lr_bounds: (f64, f64),
    pub epoch_bounds: (f64, f64),
}

impl Default for HyperRange {
    fn default() -> Self {
        HyperRange {
            lr_bounds: (1e-4, 1e-2),
            epoch_bounds: (10.0, 320.0),
        }
    }
}

/// A candidate in normalized coordinates plus its decoded values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPoint {
    pub unit: [f64; 2],
    pub learning_rate: f64,
    pub epochs: f64,
}

impl HyperPoint {
    pub fn epochs_rounded(&self) -> usize {
        self.epochs.round() as usize
    }
}

impl HyperRange {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo > 0.0 && lo < hi && hi.is_finite();
        if !ok(self.lr_bounds) || !ok(self.epoch_bounds) {
            return Err(Error::invalid(
                "hyperparameter bounds need 0 < lower < upper",
            ));
        }
        Ok(())
    }

    /// Decodes a point of the unit square; each axis is exp-linear.
    pub fn decode(&self, unit: [f64; 2]) -> HyperPoint {
        let axis = |(lo, hi): (f64, f64), t: f64| (lo.ln() + t * (hi.ln() - lo.ln())).exp();
        HyperPoint {
            unit,
            learning_rate: axis(self.lr_bounds, unit[0]),
            epochs: axis(self.epoch_bounds, unit[1]),
        }
    }

    pub fn encode(&self, learning_rate: f64, epochs: f64) -> [f64; 2] {
        let axis = |(lo, hi): (f64, f64), v: f64| (v.ln() - lo.ln()) / (hi.ln() - lo.ln());
        [
            axis(self.lr_bounds, learning_rate),
            axis(self.epoch_bounds, epochs),
        ]
    }

    pub fn contains(&self, lr: f64, epochs: f64) -> bool {
        (self.lr_bounds.0..=self.lr_bounds.1).contains(&lr)
            && (self.epoch_bounds.0..=self.epoch_bounds.1).contains(&epochs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Partitions `0..data.len()` into `k` validation folds whose sizes differ by
/// at most one. Stratified by class when every present class has at least
/// `k` members.
pub fn kfolds(data: &Dataset, k: usize, rng: &mut Rng) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::invalid("k-fold split needs k >= 2"));
    }
    if data.len() < k {
        return Err(Error::TooFewSamples {
            needed: k,
            got: data.len(),
        });
    }
    let counts = data.class_counts();
    let stratified = counts.iter().all(|&c| c == 0 || c >= k);
    let mut order = Vec::with_capacity(data.len());
    if stratified {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.classes()];
        for i in 0..data.len() {
            by_class[data.label(i)].push(i);
        }
        for members in &mut by_class {
            members.shuffle(rng);
            order.extend_from_slice(members);
        }
    } else {
        order.extend(0..data.len());
        order.shuffle(rng);
    }
    let mut validation = vec![Vec::new(); k];
    for (pos, &i) in order.iter().enumerate() {
        validation[pos % k].push(i);
    }
    Ok(validation
        .into_iter()
        .map(|validation| {
            let mut held = vec![false; data.len()];
            for &i in &validation {
                held[i] = true;
            }
            let train = (0..data.len()).filter(|&i| !held[i]).collect();
            Fold { train, validation }
        })
        .collect())
}

/// Mean validation accuracy over the folds and the per-fold values.
///
/// Each fold trains a freshly initialized network. The fold's seed is keyed
/// on its smallest validation index, so the result does not depend on the
/// order of `folds`. Folds run on separate threads.
pub fn cv_accuracy(
    cfg: &TrainingConfig,
    folds: &[Fold],
    data: &Dataset,
    arch: &Architecture,
) -> Result<(f64, Vec<f64>)> {
    if folds.is_empty() {
        return Err(Error::invalid("no folds"));
    }
    let run = |fold: &Fold| -> Result<f64> {
        let key = fold
            .validation
            .iter()
            .copied()
            .min()
            .ok_or(Error::EmptyDataset)? as u64;
        let seed = derive_seed(cfg.seed, key);
        let net = arch.init(derive_seed(seed, 0));
        let fold_cfg = TrainingConfig {
            seed: derive_seed(seed, 1),
            ..cfg.clone()
        };
        let trained = train(&net, &data.subset(&fold.train), &fold_cfg)?;
        trained.accuracy(&data.subset(&fold.validation))
    };
    let results: Vec<Result<f64>> = std::thread::scope(|s| {
        let handles: Vec<_> = folds.iter().map(|f| s.spawn(move || run(f))).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Numeric("fold worker panicked".into())))
            })
            .collect()
    });
    let mut accs = Vec::with_capacity(folds.len());
    for (fold, r) in results.into_iter().enumerate() {
        accs.push(r.map_err(|e| Error::Fold {
            fold,
            source: Box::new(e),
        })?);
    }
    Ok((accs.iter().sum::<f64>() / accs.len() as f64, accs))
}

/// The seeded acquisition lattice: a `GRID_SIDE`² grid of cell centres
/// shifted by one random offset shared by all cells, in the unit square.
pub fn candidate_grid(rng: &mut Rng) -> Vec<[f64; 2]> {
    let off = [rng.random::<f64>(), rng.random::<f64>()];
    let side = GRID_SIDE as f64;
    let mut grid = Vec::with_capacity(GRID_SIDE * GRID_SIDE);
    for i in 0..GRID_SIDE {
        for j in 0..GRID_SIDE {
            grid.push([(i as f64 + off[0]) / side, (j as f64 + off[1]) / side]);
        }
    }
    grid
}

/// Maximizes posterior mean + one posterior standard deviation over the
/// candidate grid. Ties keep the first candidate in grid order.
pub fn acquire_next(model: &GpModel, range: &HyperRange, rng: &mut Rng) -> HyperPoint {
    let grid = candidate_grid(rng);
    let mut best = grid[0];
    let mut best_score = f64::NEG_INFINITY;
    for c in grid {
        let (mean, std) = model.predict(&c);
        let score = mean + std;
        if score > best_score {
            best_score = score;
            best = c;
        }
    }
    range.decode(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Corner,
    Random,
    Acquired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub phase: Phase,
    pub learning_rate: f64,
    pub epochs: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: HyperPoint,
    pub best_mean: f64,
    pub trace: Vec<SearchRecord>,
}

/// Four corners, eleven uniform points, then fifteen GP-acquired points.
/// `objective` returns per-fold scores; a failed evaluation is logged and
/// skipped. Fails only when every evaluation fails.
pub fn bayes_search<F>(range: &HyperRange, rng: &mut Rng, mut objective: F) -> Result<SearchOutcome>
where
    F: FnMut(&HyperPoint) -> Result<Vec<f64>>,
{
    range.validate()?;
    let mut trace = Vec::with_capacity(CORNER_EVALUATIONS + RANDOM_EVALUATIONS + GP_EVALUATIONS);
    let mut seen: Vec<(HyperPoint, f64)> = Vec::new();
    let mut last_err = None;

    let mut evaluate = |phase: Phase,
                        h: HyperPoint,
                        trace: &mut Vec<SearchRecord>,
                        seen: &mut Vec<(HyperPoint, f64)>| {
        let mut rec = SearchRecord {
            phase,
            learning_rate: h.learning_rate,
            epochs: h.epochs_rounded(),
            fold_accuracies: Vec::new(),
            mean: None,
            error: None,
        };
        match objective(&h) {
            Ok(scores) if !scores.is_empty() => {
                let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                rec.fold_accuracies = scores;
                rec.mean = Some(mean);
                seen.push((h, mean));
            }
            Ok(_) => rec.error = Some("no fold scores".into()),
            Err(e) => {
                rec.error = Some(e.to_string());
                last_err = Some(e);
            }
        }
        trace.push(rec);
    };

    for unit in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
        evaluate(Phase::Corner, range.decode(unit), &mut trace, &mut seen);
    }
    for _ in 0..RANDOM_EVALUATIONS {
        let unit = [rng.random::<f64>(), rng.random::<f64>()];
        evaluate(Phase::Random, range.decode(unit), &mut trace, &mut seen);
    }
    for _ in 0..GP_EVALUATIONS {
        let next = if seen.is_empty() {
            range.decode([rng.random::<f64>(), rng.random::<f64>()])
        } else {
            let points: Vec<Vec<f64>> = seen.iter().map(|(h, _)| h.unit.to_vec()).collect();
            let values: Vec<f64> = seen.iter().map(|(_, v)| *v).collect();
            let model = gp_fit(
                &points,
                &values,
                KernelParams::from_observations(2, &values),
            )?;
            acquire_next(&model, range, rng)
        };
        evaluate(Phase::Acquired, next, &mut trace, &mut seen);
    }

    let mut best: Option<(HyperPoint, f64)> = None;
    for &(h, v) in &seen {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((h, v));
        }
    }
    match best {
        Some((best, best_mean)) => Ok(SearchOutcome {
            best,
            best_mean,
            trace,
        }),
        None => Err(last_err.unwrap_or_else(|| Error::Numeric("no successful evaluation".into()))),
    }
}

/// Training settings explored by the search: SGD with momentum 0.9 and
/// dropout, at a given learning rate and epoch count.
pub fn search_config(learning_rate: f64, epochs: usize, seed: u64) -> TrainingConfig {
    TrainingConfig {
        optimizer: OptimizerKind::SgdMomentum,
        learning_rate,
        momentum: 0.9,
        epochs,
        batch_size: 32,
        dropout_rate: SEARCH_DROPOUT,
        seed,
    }
}

/// Five-fold CV search. Returns the best configuration and the full trace.
pub fn cv_search(
    data: &Dataset,
    range: &HyperRange,
    arch: &Architecture,
    rng: &mut Rng,
) -> Result<(TrainingConfig, SearchOutcome)> {
    if data.len() < DEFAULT_FOLDS {
        return Err(Error::TooFewSamples {
            needed: DEFAULT_FOLDS,
            got: data.len(),
        });
    }
    let folds = kfolds(data, DEFAULT_FOLDS, rng)?;
    let base = rng.next_u64();
    let mut evaluation = 0u64;
    let outcome = bayes_search(range, rng, |h| {
        evaluation += 1;
        let cfg = search_config(
            h.learning_rate,
            h.epochs_rounded(),
            derive_seed(base, evaluation),
        );
        cv_accuracy(&cfg, &folds, data, arch).map(|(_, accs)| accs)
    })?;
    let best = search_config(
        outcome.best.learning_rate,
        outcome.best.epochs_rounded(),
        base,
    );
    Ok((best, outcome))
}
