//! Black-box extraction: an oracle wrapping the target, the round-based
//! extraction loop, and the query-synthesis strategies.

mod log;
mod synth;
mod tramer;

pub use log::{LabeledSet, Provenance, QueryLog, QueryRecord};
pub use synth::{generate_synthetic, reservoir_subsample};
pub use tramer::{tramer_attack, TramerOutcome, LINE_SEARCH_DEPTH};

use serde::{Deserialize, Serialize};

use crate::data::{argmax, Dataset, Targets};
use crate::error::{Error, Result};
use crate::hyperopt::{cv_search, HyperRange, SearchRecord};
use crate::neuralnet::{train, Architecture, Network, TrainingConfig};
use crate::rng::{derive_seed, seeded};

/// The step size of the original Jacobian-based augmentation.
pub const JBDA_LAMBDA: f64 = 25.5 / 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    LabelsOnly,
    Probabilities,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OracleResponse {
    Label(usize),
    Probabilities(Vec<f64>),
}

impl OracleResponse {
    pub fn label(&self) -> usize {
        match self {
            OracleResponse::Label(l) => *l,
            OracleResponse::Probabilities(p) => argmax(p),
        }
    }
}

/// A prediction API. Every call to `query` is billed exactly once.
pub trait Oracle {
    fn query(&mut self, x: &[f64]) -> Result<OracleResponse>;
    fn queries(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn classes(&self) -> usize;
    fn response_kind(&self) -> ResponseKind;
}

/// Oracle answering from a local network.
#[derive(Debug, Clone)]
pub struct ModelOracle {
    net: Network,
    kind: ResponseKind,
    counter: usize,
}

impl ModelOracle {
    pub fn new(net: Network, kind: ResponseKind) -> Self {
        ModelOracle {
            net,
            kind,
            counter: 0,
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }
}

impl Oracle for ModelOracle {
    fn query(&mut self, x: &[f64]) -> Result<OracleResponse> {
        let p = self.net.forward(x)?;
        self.counter += 1;
        Ok(match self.kind {
            ResponseKind::LabelsOnly => OracleResponse::Label(argmax(&p)),
            ResponseKind::Probabilities => OracleResponse::Probabilities(p),
        })
    }

    fn queries(&self) -> usize {
        self.counter
    }

    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn classes(&self) -> usize {
        self.net.classes()
    }

    fn response_kind(&self) -> ResponseKind {
        self.kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Synthesis {
    Jbda,
    TrndFgsm,
    TrndIfgsm,
    Color,
    Tramer,
}

impl Synthesis {
    pub fn tag(self) -> &'static str {
        match self {
            Synthesis::Jbda => "jbda",
            Synthesis::TrndFgsm => "trnd_fgsm",
            Synthesis::TrndIfgsm => "trnd_ifgsm",
            Synthesis::Color => "color",
            Synthesis::Tramer => "tramer",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [
            Synthesis::Jbda,
            Synthesis::TrndFgsm,
            Synthesis::TrndIfgsm,
            Synthesis::Color,
            Synthesis::Tramer,
        ]
        .into_iter()
        .find(|s| s.tag() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperStrategy {
    PapernotRule,
    Same,
    CvSearch,
}

impl HyperStrategy {
    pub fn tag(self) -> &'static str {
        match self {
            HyperStrategy::PapernotRule => "papernot_rule",
            HyperStrategy::Same => "same",
            HyperStrategy::CvSearch => "cv_search",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [
            HyperStrategy::PapernotRule,
            HyperStrategy::Same,
            HyperStrategy::CvSearch,
        ]
        .into_iter()
        .find(|s| s.tag() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainMode {
    FromScratch,
    Incremental,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Seed samples in total, balanced across classes within one.
    pub seed_count: usize,
    /// Total oracle queries allowed, seed queries included.
    pub budget: Option<usize>,
    pub rounds: usize,
    pub synthesis: Synthesis,
    pub lambda: f64,
    pub expansion: usize,
    pub hyper: HyperStrategy,
    pub reservoir_fraction: f64,
    /// `None` picks incremental for the fixed rule and from-scratch otherwise.
    pub retrain: Option<RetrainMode>,
    /// Interleaved channel count, used by COLOR.
    pub channels: usize,
    pub architecture: Architecture,
    pub seed: u64,
}

impl AttackConfig {
    /// Jacobian-based augmentation with the fixed training rule.
    pub fn papernot(
        architecture: Architecture,
        seed_count: usize,
        rounds: usize,
        seed: u64,
    ) -> Self {
        AttackConfig {
            seed_count,
            budget: None,
            rounds,
            synthesis: Synthesis::Jbda,
            lambda: JBDA_LAMBDA,
            expansion: 2,
            hyper: HyperStrategy::PapernotRule,
            reservoir_fraction: 1.0,
            retrain: None,
            channels: 1,
            architecture,
            seed,
        }
    }

    pub fn retrain_mode(&self) -> RetrainMode {
        self.retrain.unwrap_or(match self.hyper {
            HyperStrategy::PapernotRule => RetrainMode::Incremental,
            _ => RetrainMode::FromScratch,
        })
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("step size must be positive"));
        }
        if !(self.reservoir_fraction > 0.0 && self.reservoir_fraction <= 1.0) {
            return Err(Error::invalid("reservoir fraction must be in (0, 1]"));
        }
        match self.synthesis {
            Synthesis::Jbda if self.expansion != 2 => {
                return Err(Error::invalid(
                    "jacobian augmentation has expansion factor 2",
                ))
            }
            Synthesis::TrndFgsm | Synthesis::TrndIfgsm | Synthesis::Color
                if self.expansion < 2 || self.expansion > classes =>
            {
                return Err(Error::invalid(format!(
                    "expansion factor {} must be in [2, {classes}]",
                    self.expansion
                )))
            }
            _ => {}
        }
        if self.channels == 0 || self.architecture.input_dim % self.channels != 0 {
            return Err(Error::invalid(
                "input dimension must be a multiple of the channel count",
            ));
        }
        Ok(())
    }
}

/// Picks the substitute's training settings.
pub fn resolve_hyperparameters(
    strategy: HyperStrategy,
    seeds: &Dataset,
    target_cfg: Option<&TrainingConfig>,
    arch: &Architecture,
    seed: u64,
) -> Result<(TrainingConfig, Option<Vec<SearchRecord>>)> {
    match strategy {
        HyperStrategy::PapernotRule => Ok((TrainingConfig::papernot(seed), None)),
        HyperStrategy::Same => target_cfg
            .map(|c| (c.clone(), None))
            .ok_or_else(|| Error::invalid("'same' strategy needs the target's training config")),
        HyperStrategy::CvSearch => {
            if seeds.is_empty() {
                return Err(Error::EmptyDataset);
            }
            let (cfg, outcome) = cv_search(seeds, &HyperRange::default(), arch, &mut seeded(seed))?;
            Ok((cfg, Some(outcome.trace)))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtractionOutcome {
    pub substitute: Network,
    /// Substitute after round 0 (seeds only) and after each later round.
    pub checkpoints: Vec<Network>,
    pub log: QueryLog,
    pub labeled: LabeledSet,
    pub training: TrainingConfig,
    pub search_trace: Option<Vec<SearchRecord>>,
    pub budget_truncated: bool,
}

/// The round-based extraction loop: label the seeds, train, then for each
/// round synthesize, label and retrain. Stops early when the budget runs
/// out, after training on what was labeled.
pub fn run_extraction(
    oracle: &mut dyn Oracle,
    seeds: &Dataset,
    cfg: &AttackConfig,
    target_cfg: Option<&TrainingConfig>,
) -> Result<ExtractionOutcome> {
    let classes = oracle.classes();
    cfg.validate(classes)?;
    if cfg.synthesis == Synthesis::Tramer {
        return Err(Error::invalid(
            "use tramer_attack for the random line-search strategy",
        ));
    }
    if seeds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if seeds.dim() != oracle.input_dim() || cfg.architecture.input_dim != oracle.input_dim() {
        return Err(Error::Shape {
            expected: oracle.input_dim(),
            found: seeds.dim(),
        });
    }
    if cfg.architecture.classes != classes {
        return Err(Error::Shape {
            expected: classes,
            found: cfg.architecture.classes,
        });
    }
    if let Some(b) = cfg.budget {
        if b < seeds.len() {
            return Err(Error::invalid(format!(
                "budget {b} is smaller than the {} seed queries",
                seeds.len()
            )));
        }
    }

    let mut log = QueryLog::default();
    let mut labeled = LabeledSet::default();
    for x in seeds.samples() {
        let r = oracle.query(x)?;
        log.push(0, Provenance::Seed, x, r.label());
        labeled.push(x.clone(), r, Provenance::Seed, 0);
    }

    let seed_set = labeled.to_dataset(classes)?;
    let (training, search_trace) = resolve_hyperparameters(
        cfg.hyper,
        &seed_set,
        target_cfg,
        &cfg.architecture,
        derive_seed(cfg.seed, 0x4859),
    )?;
    let retrain = cfg.retrain_mode();
    let round_cfg = |round: usize| TrainingConfig {
        seed: derive_seed(cfg.seed, 0x5452 + round as u64),
        ..training.clone()
    };
    let init = |round: usize| {
        cfg.architecture
            .init(derive_seed(cfg.seed, 0x494e + round as u64))
    };

    let mut substitute = train(&init(0), &seed_set, &round_cfg(0))?;
    let mut checkpoints = vec![substitute.clone()];
    let mut rng = seeded(derive_seed(cfg.seed, 0x5359));
    let mut budget_truncated = false;

    for round in 1..=cfg.rounds {
        let fresh = generate_synthetic(&labeled, &substitute, cfg, classes, &mut rng)?;
        let fresh = reservoir_subsample(fresh, cfg.reservoir_fraction, &mut rng);
        for x in fresh {
            if cfg.budget.is_some_and(|b| oracle.queries() >= b) {
                budget_truncated = true;
                break;
            }
            let r = oracle.query(&x)?;
            log.push(round, Provenance::Synthetic, &x, r.label());
            labeled.push(x, r, Provenance::Synthetic, round);
        }
        let data = labeled.to_dataset(classes)?;
        let start = match retrain {
            RetrainMode::FromScratch => init(round),
            RetrainMode::Incremental => substitute,
        };
        substitute = train(&start, &data, &round_cfg(round))?;
        checkpoints.push(substitute.clone());
        if budget_truncated {
            break;
        }
    }

    Ok(ExtractionOutcome {
        substitute,
        checkpoints,
        log,
        labeled,
        training,
        search_trace,
        budget_truncated,
    })
}

/// Converts oracle responses into training targets. All responses of one
/// run share a kind.
pub(crate) fn targets_from(responses: &[&OracleResponse]) -> Targets {
    if responses
        .iter()
        .all(|r| matches!(r, OracleResponse::Probabilities(_)))
        && !responses.is_empty()
    {
        Targets::Probabilities(
            responses
                .iter()
                .map(|r| match r {
                    OracleResponse::Probabilities(p) => p.clone(),
                    OracleResponse::Label(_) => unreachable!(),
                })
                .collect(),
        )
    } else {
        Targets::Labels(responses.iter().map(|r| r.label()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::Architecture;
    use rand::Rng;

    pub(crate) fn blob_target() -> (Network, Dataset) {
        let mut rng = seeded(1);
        let centres = [[-0.5, -0.5], [0.5, -0.5], [0.0, 0.5]];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..300 {
            let c = i % 3;
            xs.push(vec![
                centres[c][0] + rng.random_range(-0.2..0.2),
                centres[c][1] + rng.random_range(-0.2..0.2),
            ]);
            ys.push(c);
        }
        let data = Dataset::labeled(xs, ys, 3).unwrap();
        let arch = Architecture::new(2, vec![16], 3);
        let cfg = TrainingConfig {
            epochs: 40,
            ..TrainingConfig::target_default(2)
        };
        let net = train(&arch.init(3), &data, &cfg).unwrap();
        (net, data)
    }

    fn seeds(data: &Dataset, per_class: usize) -> Dataset {
        let mut idx = Vec::new();
        for c in 0..data.classes() {
            idx.extend(
                (0..data.len())
                    .filter(|&i| data.label(i) == c)
                    .take(per_class),
            );
        }
        data.subset(&idx)
    }

    #[test]
    fn oracle_counts_queries() {
        let (net, data) = blob_target();
        let mut o = ModelOracle::new(net.clone(), ResponseKind::LabelsOnly);
        for x in data.samples().iter().take(7) {
            let r = o.query(x).unwrap();
            assert_eq!(r.label(), net.predict_label(x).unwrap());
        }
        assert_eq!(o.queries(), 7);
        let mut p = ModelOracle::new(net, ResponseKind::Probabilities);
        assert!(matches!(
            p.query(data.sample(0)).unwrap(),
            OracleResponse::Probabilities(_)
        ));
    }

    #[test]
    fn rho_zero_queries_only_seeds() {
        let (net, data) = blob_target();
        let s = seeds(&data, 4);
        let mut o = ModelOracle::new(net, ResponseKind::LabelsOnly);
        let cfg = AttackConfig::papernot(Architecture::new(2, vec![8], 3), 4, 0, 5);
        let out = run_extraction(&mut o, &s, &cfg, None).unwrap();
        assert_eq!(o.queries(), 12);
        assert_eq!(out.log.len(), 12);
        assert_eq!(out.checkpoints.len(), 1);
        assert!(!out.budget_truncated);
    }

    #[test]
    fn jbda_doubles_each_round() {
        let (net, data) = blob_target();
        let s = seeds(&data, 5);
        let mut o = ModelOracle::new(net, ResponseKind::LabelsOnly);
        let cfg = AttackConfig::papernot(Architecture::new(2, vec![8], 3), 5, 3, 5);
        let out = run_extraction(&mut o, &s, &cfg, None).unwrap();
        assert_eq!(o.queries(), 15 * 8);
        assert_eq!(out.log.len(), o.queries());
        for r in 0..=3 {
            let n = out.log.records().iter().filter(|q| q.round == r).count();
            assert_eq!(n, if r == 0 { 15 } else { 15 << (r - 1) });
        }
        assert!(out
            .labeled
            .samples()
            .all(|x| x.iter().all(|v| (-1.0..=1.0).contains(v))));
        assert_eq!(out.checkpoints.len(), 4);
    }

    #[test]
    fn trnd_expands_by_k() {
        let (net, data) = blob_target();
        let s = seeds(&data, 2);
        let mut o = ModelOracle::new(net, ResponseKind::Probabilities);
        let cfg = AttackConfig {
            synthesis: Synthesis::TrndIfgsm,
            expansion: 3,
            lambda: 64.0 / 255.0,
            ..AttackConfig::papernot(Architecture::new(2, vec![8], 3), 2, 2, 5)
        };
        run_extraction(&mut o, &s, &cfg, None).unwrap();
        assert_eq!(o.queries(), 6 * 9);
    }

    #[test]
    fn budget_truncates_round() {
        let (net, data) = blob_target();
        let s = seeds(&data, 5);
        let mut o = ModelOracle::new(net, ResponseKind::LabelsOnly);
        let cfg = AttackConfig {
            budget: Some(40),
            ..AttackConfig::papernot(Architecture::new(2, vec![8], 3), 5, 4, 5)
        };
        let out = run_extraction(&mut o, &s, &cfg, None).unwrap();
        assert!(out.budget_truncated);
        assert_eq!(o.queries(), 40);
        assert_eq!(out.log.len(), 40);
        assert_eq!(out.checkpoints.len(), 3);
        let small = AttackConfig {
            budget: Some(10),
            ..cfg
        };
        let mut o = ModelOracle::new(o.network().clone(), ResponseKind::LabelsOnly);
        assert!(run_extraction(&mut o, &s, &small, None).is_err());
    }

    #[test]
    fn hyperparameter_strategies() {
        let (_, data) = blob_target();
        let s = seeds(&data, 5);
        let arch = Architecture::new(2, vec![4], 3);
        let (p, _) =
            resolve_hyperparameters(HyperStrategy::PapernotRule, &s, None, &arch, 1).unwrap();
        assert_eq!((p.learning_rate, p.momentum, p.epochs), (0.01, 0.9, 10));
        let target = TrainingConfig::target_default(3);
        let (same, _) =
            resolve_hyperparameters(HyperStrategy::Same, &s, Some(&target), &arch, 1).unwrap();
        assert_eq!(same, target);
        assert!(resolve_hyperparameters(HyperStrategy::Same, &s, None, &arch, 1).is_err());
    }

    #[test]
    fn config_preconditions() {
        let arch = Architecture::new(2, vec![4], 3);
        let mut cfg = AttackConfig::papernot(arch, 1, 1, 0);
        assert!(cfg.validate(3).is_ok());
        cfg.expansion = 3;
        assert!(cfg.validate(3).is_err());
        cfg.synthesis = Synthesis::TrndFgsm;
        assert!(cfg.validate(3).is_ok());
        cfg.expansion = 4;
        assert!(cfg.validate(3).is_err());
        cfg.expansion = 2;
        cfg.reservoir_fraction = 0.0;
        assert!(cfg.validate(3).is_err());
    }

    #[test]
    fn extraction_is_deterministic() {
        let (net, data) = blob_target();
        let s = seeds(&data, 3);
        let cfg = AttackConfig {
            synthesis: Synthesis::TrndFgsm,
            expansion: 3,
            ..AttackConfig::papernot(Architecture::new(2, vec![8], 3), 3, 2, 11)
        };
        let run = || {
            let mut o = ModelOracle::new(net.clone(), ResponseKind::LabelsOnly);
            run_extraction(&mut o, &s, &cfg, None).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.log, b.log);
        assert_eq!(a.substitute, b.substitute);
    }
}
