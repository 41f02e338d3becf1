use rand::Rng as _;

use super::{LabeledSet, Oracle, Provenance, QueryLog};
use crate::data::{FEATURE_MAX, FEATURE_MIN};
use crate::error::{Error, Result};
use crate::neuralnet::{train, Architecture, Network, TrainingConfig};
use crate::rng::{derive_seed, Rng};

/// Binary-search probes spent on each label-discordant pair.
pub const LINE_SEARCH_DEPTH: usize = 10;
const MIN_BUDGET: usize = 8;

#[derive(Debug, Clone)]
pub struct TramerOutcome {
    pub substitute: Network,
    pub log: QueryLog,
    pub labeled: LabeledSet,
    /// Every random-phase point got the same label, so no line search ran.
    pub degenerate_single_class: bool,
    /// Endpoints of each line search, as indices into the log (0-based).
    pub pairs: Vec<(usize, usize)>,
}

/// Random-then-line-search extraction. A quarter of the budget goes to
/// uniform random points; the rest to bisection between random points with
/// different labels, one oracle query per probe.
pub fn tramer_attack(
    oracle: &mut dyn Oracle,
    arch: &Architecture,
    training: &TrainingConfig,
    budget: usize,
    rng: &mut Rng,
) -> Result<TramerOutcome> {
    if budget < MIN_BUDGET {
        return Err(Error::invalid(format!(
            "budget must be at least {MIN_BUDGET}"
        )));
    }
    let dim = oracle.input_dim();
    let classes = oracle.classes();
    let mut log = QueryLog::default();
    let mut labeled = LabeledSet::default();
    let mut ask = |x: Vec<f64>,
                   prov: Provenance,
                   log: &mut QueryLog,
                   labeled: &mut LabeledSet|
     -> Result<usize> {
        let r = oracle.query(&x)?;
        let label = r.label();
        log.push(0, prov, &x, label);
        labeled.push(x, r, prov, 0);
        Ok(label)
    };

    let random_count = budget / 4;
    let mut points = Vec::with_capacity(random_count);
    for _ in 0..random_count {
        let x: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(FEATURE_MIN..=FEATURE_MAX))
            .collect();
        let l = ask(x.clone(), Provenance::Random, &mut log, &mut labeled)?;
        points.push((x, l));
    }

    let first = points[0].1;
    let degenerate = points.iter().all(|(_, l)| *l == first);
    let mut remaining = budget - random_count;
    let mut pairs = Vec::new();
    if degenerate {
        for _ in 0..remaining {
            let x: Vec<f64> = (0..dim)
                .map(|_| rng.random_range(FEATURE_MIN..=FEATURE_MAX))
                .collect();
            ask(x, Provenance::Random, &mut log, &mut labeled)?;
        }
    } else {
        while remaining > 0 {
            // rejection sampling is uniform over discordant pairs
            let (i, j) = loop {
                let i = rng.random_range(0..points.len());
                let j = rng.random_range(0..points.len());
                if points[i].1 != points[j].1 {
                    break (i, j);
                }
            };
            pairs.push((i, j));
            let (mut lo, la) = (points[i].0.clone(), points[i].1);
            let mut hi = points[j].0.clone();
            for _ in 0..LINE_SEARCH_DEPTH.min(remaining) {
                let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
                let l = ask(mid.clone(), Provenance::Linesearch, &mut log, &mut labeled)?;
                remaining -= 1;
                if l == la {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
    }

    let data = labeled.to_dataset(classes)?;
    let substitute = train(
        &arch.init(derive_seed(training.seed, 0x5452)),
        &data,
        training,
    )?;
    Ok(TramerOutcome {
        substitute,
        log,
        labeled,
        degenerate_single_class: degenerate,
        pairs,
    })
}
