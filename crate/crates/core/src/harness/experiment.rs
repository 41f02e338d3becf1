use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::benign::{benign_stream, BenignMode, BenignSource, BenignStreamSpec};
use super::datasets::{
    balanced_seeds, gen_blobs_dataset, load_csv_dataset, sample_blob, stratified_split,
};
use super::metrics::{default_transfer_spec, ru_agreement, test_agreement, transferability};
use super::{fpr, FPR_CHUNK};
use crate::data::Dataset;
use crate::detector::{replay, write_verdicts_csv, DetectorConfig, Metric, Verdict};
use crate::error::{Error, Result};
use crate::evasion::{plan_dummy_distances, EvasionConfig, EvasionPlan};
use crate::extraction::{
    run_extraction, tramer_attack, AttackConfig, HyperStrategy, ModelOracle, QueryLog,
    ResponseKind, RetrainMode, Synthesis, JBDA_LAMBDA,
};
use crate::hyperopt::SearchRecord;
use crate::neuralnet::{train, write_network, Architecture, Network, TrainingConfig};
use crate::rng::{derive_seed, seeded};

const TAG_DATASET: u64 = 0x4441;
const TAG_SPLIT: u64 = 0x5350;
const TAG_TARGET: u64 = 0x5447;
const TAG_SEEDS: u64 = 0x5345;
const TAG_ATTACK: u64 = 0x4154;
const TAG_RU: u64 = 0x5255;
const TAG_BENIGN: u64 = 0x4245;
const TAG_EVASION: u64 = 0x4556;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs,
    Csv,
}

/// One experiment, read from a flat TOML document. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,

    pub dataset: DatasetKind,
    pub dataset_path: Option<PathBuf>,
    pub rescale: bool,
    pub blob_classes: usize,
    pub blob_dim: usize,
    pub blob_per_class: usize,
    pub blob_margin: f64,
    /// Share of the data held out for agreement metrics.
    pub test_fraction: f64,
    /// Share of the remainder given to the attacker as its natural pool; the
    /// rest trains the target.
    pub attacker_fraction: f64,

    pub target_arch: String,
    pub target_epochs: usize,

    pub attack: Synthesis,
    pub response: ResponseKind,
    pub seed_count: usize,
    pub rounds: usize,
    pub lambda: Option<f64>,
    pub expansion: usize,
    pub hyper: HyperStrategy,
    pub budget: Option<usize>,
    pub reservoir_fraction: f64,
    pub retrain: Option<RetrainMode>,
    pub channels: usize,
    pub substitute_arch: Option<String>,

    pub delta: f64,
    pub window_min: usize,
    pub outlier_sigmas: f64,
    pub metric: Metric,

    pub benign_clients: usize,
    pub benign_length: usize,
    pub sequence_length: usize,
    pub sequence_noise: f64,

    pub compute_ru: bool,
    pub compute_transfer: bool,
    pub compute_fpr: bool,
    pub compute_evasion: bool,
    pub ru_samples: usize,
    pub sweep_deltas: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            dataset: DatasetKind::Blobs,
            dataset_path: None,
            rescale: true,
            blob_classes: 3,
            blob_dim: 2,
            blob_per_class: 1000,
            blob_margin: 6.0,
            test_fraction: 0.2,
            attacker_fraction: 0.5,
            target_arch: "blobs".into(),
            target_epochs: 100,
            attack: Synthesis::Jbda,
            response: ResponseKind::LabelsOnly,
            seed_count: 100,
            rounds: 2,
            lambda: None,
            expansion: 2,
            hyper: HyperStrategy::PapernotRule,
            budget: None,
            reservoir_fraction: 1.0,
            retrain: None,
            channels: 1,
            substitute_arch: None,
            delta: 0.9,
            window_min: crate::detector::DEFAULT_WINDOW_MIN,
            outlier_sigmas: crate::detector::DEFAULT_OUTLIER_SIGMAS,
            metric: Metric::L2,
            benign_clients: 5,
            benign_length: super::DEFAULT_STREAM_LENGTH,
            sequence_length: super::DEFAULT_SEQUENCE_LENGTH,
            sequence_noise: 0.05,
            compute_ru: true,
            compute_transfer: true,
            compute_fpr: true,
            compute_evasion: false,
            ru_samples: super::RU_SAMPLES,
            sweep_deltas: vec![0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            delta: self.delta,
            window_min: self.window_min,
            outlier_sigmas: self.outlier_sigmas,
            metric: self.metric,
            ..DetectorConfig::new(self.delta)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.detector().validate()?;
        if self.dataset == DatasetKind::Csv && self.dataset_path.is_none() {
            return Err(Error::invalid("dataset = \"csv\" needs dataset_path"));
        }
        if !(0.0..1.0).contains(&self.test_fraction)
            || !(0.0..1.0).contains(&self.attacker_fraction)
        {
            return Err(Error::invalid("split fractions must lie in [0, 1)"));
        }
        if self.target_epochs == 0 {
            return Err(Error::invalid("target_epochs must be positive"));
        }
        for d in &self.sweep_deltas {
            if !(*d > 0.0 && *d < 1.0) {
                return Err(Error::invalid(format!("sweep delta {d} outside (0, 1)")));
            }
        }
        // presets must resolve
        Architecture::preset(&self.target_arch, 1, 2)?;
        if let Some(s) = &self.substitute_arch {
            Architecture::preset(s, 1, 2)?;
        }
        Ok(())
    }
}

/// Data splits and the trained target.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub target: Network,
    pub target_training: TrainingConfig,
    pub target_train: Dataset,
    pub attacker_pool: Dataset,
    pub test: Dataset,
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match cfg.dataset {
        DatasetKind::Blobs => gen_blobs_dataset(
            cfg.blob_classes,
            cfg.blob_dim,
            cfg.blob_per_class,
            cfg.blob_margin,
            &mut seeded(derive_seed(cfg.seed, TAG_DATASET)),
        ),
        DatasetKind::Csv => {
            let path = cfg
                .dataset_path
                .as_ref()
                .ok_or_else(|| Error::invalid("dataset_path missing"))?;
            load_csv_dataset(path, cfg.rescale)
        }
    }
}

/// Builds the data splits and trains the target.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let data = load_dataset(cfg).map_err(|e| e.in_stage("dataset"))?;
    let mut rng = seeded(derive_seed(cfg.seed, TAG_SPLIT));
    let (rest, test) =
        stratified_split(&data, cfg.test_fraction, &mut rng).map_err(|e| e.in_stage("dataset"))?;
    let (target_train, attacker_pool) = stratified_split(&rest, cfg.attacker_fraction, &mut rng)
        .map_err(|e| e.in_stage("dataset"))?;
    let arch = Architecture::preset(&cfg.target_arch, data.dim(), data.classes())
        .map_err(|e| e.in_stage("target"))?;
    let tseed = derive_seed(cfg.seed, TAG_TARGET);
    let target_training = TrainingConfig {
        epochs: cfg.target_epochs,
        ..TrainingConfig::target_default(derive_seed(tseed, 1))
    };
    let target = train(&arch.init(tseed), &target_train, &target_training)
        .map_err(|e| e.in_stage("target"))?;
    Ok(Prepared {
        target,
        target_training,
        target_train,
        attacker_pool,
        test,
    })
}

/// What the attack stage produced.
#[derive(Debug, Clone)]
pub struct AttackRun {
    pub seeds: Dataset,
    pub substitute: Network,
    pub checkpoints: Vec<Network>,
    pub log: QueryLog,
    pub training: TrainingConfig,
    pub search_trace: Option<Vec<SearchRecord>>,
}

pub fn attack_config(
    cfg: &ExperimentConfig,
    input_dim: usize,
    classes: usize,
) -> Result<AttackConfig> {
    let arch_name = cfg.substitute_arch.as_deref().unwrap_or(&cfg.target_arch);
    Ok(AttackConfig {
        budget: cfg.budget,
        synthesis: cfg.attack,
        lambda: cfg.lambda.unwrap_or(JBDA_LAMBDA),
        expansion: cfg.expansion,
        hyper: cfg.hyper,
        reservoir_fraction: cfg.reservoir_fraction,
        retrain: cfg.retrain,
        channels: cfg.channels,
        ..AttackConfig::papernot(
            Architecture::preset(arch_name, input_dim, classes)?,
            cfg.seed_count,
            cfg.rounds,
            derive_seed(cfg.seed, TAG_ATTACK),
        )
    })
}

/// Runs the configured attack against the prepared target.
pub fn run_attack(cfg: &ExperimentConfig, prep: &Prepared) -> Result<AttackRun> {
    let stage = |e: Error| e.in_stage("attack");
    let target = &prep.target;
    let acfg = attack_config(cfg, target.input_dim(), target.classes()).map_err(stage)?;
    let mut oracle = ModelOracle::new(target.clone(), cfg.response);
    if cfg.attack == Synthesis::Tramer {
        let budget = cfg
            .budget
            .ok_or_else(|| stage(Error::invalid("the tramer attack needs a budget")))?;
        let training = match cfg.hyper {
            HyperStrategy::PapernotRule => TrainingConfig::papernot(acfg.seed),
            HyperStrategy::Same => prep.target_training.clone(),
            HyperStrategy::CvSearch => {
                return Err(stage(Error::invalid(
                    "cv_search needs seed samples; tramer has none",
                )));
            }
        };
        let out = tramer_attack(
            &mut oracle,
            &acfg.architecture,
            &training,
            budget,
            &mut seeded(acfg.seed),
        )
        .map_err(stage)?;
        return Ok(AttackRun {
            seeds: Dataset::labeled(vec![], vec![], target.classes()).map_err(stage)?,
            checkpoints: vec![out.substitute.clone()],
            substitute: out.substitute,
            log: out.log,
            training,
            search_trace: None,
        });
    }
    let seeds = balanced_seeds(
        &prep.attacker_pool,
        cfg.seed_count,
        &mut seeded(derive_seed(cfg.seed, TAG_SEEDS)),
    )
    .map_err(stage)?;
    let out =
        run_extraction(&mut oracle, &seeds, &acfg, Some(&prep.target_training)).map_err(stage)?;
    Ok(AttackRun {
        seeds,
        substitute: out.substitute,
        checkpoints: out.checkpoints,
        log: out.log,
        training: out.training,
        search_trace: out.search_trace,
    })
}

/// The benign clients of every mode, in `BenignMode::ALL` order.
pub fn benign_streams(
    cfg: &ExperimentConfig,
    prep: &Prepared,
) -> Result<Vec<(BenignMode, Vec<Vec<f64>>)>> {
    let dim = prep.target.input_dim();
    let classes = prep.target.classes();
    let base = derive_seed(cfg.seed, TAG_BENIGN);
    let mut out = Vec::new();
    for (m, mode) in BenignMode::ALL.into_iter().enumerate() {
        for client in 0..cfg.benign_clients {
            let spec = BenignStreamSpec {
                mode,
                length: cfg.benign_length,
                sequence_length: cfg.sequence_length,
                sequence_noise: cfg.sequence_noise,
            };
            let mut rng = seeded(derive_seed(base, (m * 1000 + client) as u64));
            let stream = match cfg.dataset {
                DatasetKind::Blobs => {
                    let mut g = |r: &mut crate::rng::Rng| {
                        let c = r.random_range(0..classes);
                        sample_blob(c, classes, dim, cfg.blob_margin, r)
                    };
                    benign_stream(&spec, Some(BenignSource::Generator(&mut g)), dim, &mut rng)?
                }
                DatasetKind::Csv => {
                    benign_stream(&spec, Some(BenignSource::Pool(&prep.test)), dim, &mut rng)?
                }
            };
            out.push((mode, stream));
        }
    }
    Ok(out)
}

/// Benign streams with the target's labels attached, ready for replay.
pub struct LabeledStreams {
    pub streams: Vec<(BenignMode, Vec<Vec<f64>>, Vec<usize>)>,
}

impl LabeledStreams {
    pub fn new(target: &Network, streams: Vec<(BenignMode, Vec<Vec<f64>>)>) -> Result<Self> {
        let streams = streams
            .into_iter()
            .map(|(mode, s)| {
                let labels = s
                    .iter()
                    .map(|x| target.predict_label(x))
                    .collect::<Result<Vec<_>>>()?;
                Ok((mode, s, labels))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledStreams { streams })
    }

    /// Verdicts of every stream under `det`.
    pub fn replay(&self, det: &DetectorConfig) -> Result<Vec<(BenignMode, Vec<Verdict>, usize)>> {
        self.streams
            .iter()
            .map(|(mode, s, labels)| {
                let (v, state) = replay(
                    s.iter().map(|x| x.as_slice()).zip(labels.iter().copied()),
                    det,
                )?;
                Ok((*mode, v, state.growing_set_bytes()))
            })
            .collect()
    }

    /// Mean chunk FPR per mode, keyed by mode tag.
    pub fn fpr_by_mode(&self, det: &DetectorConfig) -> Result<BTreeMap<String, f64>> {
        Ok(summarize_fpr(&self.replay(det)?))
    }
}

fn summarize_fpr(replayed: &[(BenignMode, Vec<Verdict>, usize)]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (mode, v, _) in replayed {
        let e = sums.entry(mode.tag().to_string()).or_default();
        e.0 += fpr(v, FPR_CHUNK);
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}

/// Smallest W over all verdicts per mode. With the alarm rule W < δ, every
/// δ at or below the overall minimum yields zero false positives.
pub fn min_w_by_mode(replayed: &[(BenignMode, Vec<Verdict>, usize)]) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for (mode, v, _) in replayed {
        let w = v
            .iter()
            .filter_map(|x| x.current_w)
            .fold(f64::INFINITY, f64::min);
        let e = out.entry(mode.tag().to_string()).or_insert(f64::INFINITY);
        *e = e.min(w);
    }
    out
}

fn mean_of(map: &BTreeMap<String, f64>) -> Option<f64> {
    (!map.is_empty()).then(|| map.values().sum::<f64>() / map.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvasionSummary {
    pub useful: usize,
    pub dummies: usize,
    pub overhead_ratio: f64,
}

/// Everything an experiment measures. Absent metrics are explicit nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub target_accuracy: f64,
    pub test_agreement: f64,
    /// Test agreement after round 0 (seeds only) and after each later round.
    pub round_agreements: Vec<f64>,
    pub ru_agreement: Option<f64>,
    pub transfer_targeted: Option<f64>,
    pub transfer_nontargeted: Option<f64>,
    /// Mean of the per-mode benign FPRs.
    pub fpr: Option<f64>,
    pub fpr_by_mode: Option<BTreeMap<String, f64>>,
    pub benign_min_w: Option<BTreeMap<String, f64>>,
    pub benign_growing_set_bytes: Option<usize>,
    pub detection_index: Option<usize>,
    pub queries_total: usize,
    pub growing_set_bytes: usize,
    pub substitute_learning_rate: f64,
    pub substitute_epochs: usize,
    pub search_evaluations: Option<usize>,
    pub evasion: Option<EvasionSummary>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub fpr_by_mode: BTreeMap<String, f64>,
    pub fpr_mean: f64,
    pub detection_index: Option<usize>,
}

fn create(out_dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out_dir.join(name))?))
}

pub fn write_search_trace<W: Write>(trace: &[SearchRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "phase",
        "learning_rate",
        "epochs",
        "mean",
        "fold_accuracies",
        "error",
    ])?;
    for r in trace {
        let phase = serde_json::to_value(r.phase)?;
        out.write_record([
            phase.as_str().unwrap_or_default().to_string(),
            format!("{:?}", r.learning_rate),
            r.epochs.to_string(),
            r.mean.map(|m| format!("{m:?}")).unwrap_or_default(),
            r.fold_accuracies
                .iter()
                .map(|a| format!("{a:?}"))
                .collect::<Vec<_>>()
                .join(";"),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a query log written by `QueryLog::write_csv` back as
/// (sample, label) pairs in query order.
pub fn read_query_stream(path: &Path) -> Result<Vec<(Vec<f64>, usize)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::Parse("query log has no label column".into()))?;
    let first_feature = headers
        .iter()
        .position(|h| h == "f0")
        .ok_or_else(|| Error::Parse("query log has no feature columns".into()))?;
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse_err = |what: &str| Error::Parse(format!("query log row {}: bad {what}", row + 1));
        let label = rec
            .get(label_col)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err("label"))?;
        let x = rec
            .iter()
            .skip(first_feature)
            .map(|v| v.parse::<f64>().map_err(|_| parse_err("feature")))
            .collect::<Result<Vec<_>>>()?;
        out.push((x, label));
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// d_min values of an attack replay, i.e. the detector's distance stream.
pub fn attack_distances(verdicts: &[Verdict]) -> Vec<f64> {
    verdicts.iter().filter_map(|v| v.d_min).collect()
}

/// Plans dummy distances against the attack's replay at the configured δ.
pub fn plan_evasion(cfg: &ExperimentConfig, verdicts: &[Verdict]) -> Result<EvasionPlan> {
    let ev = EvasionConfig {
        seed: derive_seed(cfg.seed, TAG_EVASION),
        ..EvasionConfig::default()
    };
    plan_dummy_distances(&attack_distances(verdicts), &cfg.detector(), &ev)
}

/// Trains the target, runs the attack, replays it through the detector,
/// computes the enabled metrics and writes the report plus CSV traces to
/// `out_dir`. Artifacts of finished stages stay on disk if a later stage
/// fails.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<MetricsReport> {
    let io = |e: Error| e.in_stage("report");
    std::fs::create_dir_all(out_dir).map_err(|e| Error::from(e).in_stage("report"))?;
    let prep = prepare(cfg)?;
    write_network(&prep.target, create(out_dir, "target.net").map_err(io)?).map_err(io)?;

    let run = run_attack(cfg, &prep)?;
    run.log
        .write_csv(create(out_dir, "queries.csv").map_err(io)?)
        .map_err(io)?;
    write_network(
        &run.substitute,
        create(out_dir, "substitute.net").map_err(io)?,
    )
    .map_err(io)?;
    if let Some(trace) = &run.search_trace {
        write_search_trace(trace, create(out_dir, "search_trace.csv").map_err(io)?).map_err(io)?;
    }

    let det = cfg.detector();
    let (verdicts, state) = replay(run.log.stream(), &det).map_err(|e| e.in_stage("detect"))?;
    write_verdicts_csv(&verdicts, create(out_dir, "verdicts.csv").map_err(io)?).map_err(io)?;

    let metrics = |e: Error| e.in_stage("metrics");
    let target_accuracy = prep.target.accuracy(&prep.test).map_err(metrics)?;
    let round_agreements = run
        .checkpoints
        .iter()
        .map(|c| test_agreement(&prep.target, c, &prep.test))
        .collect::<Result<Vec<_>>>()
        .map_err(metrics)?;
    let test_agreement =
        test_agreement(&prep.target, &run.substitute, &prep.test).map_err(metrics)?;
    let ru = if cfg.compute_ru {
        let mut rng = seeded(derive_seed(cfg.seed, TAG_RU));
        Some(
            ru_agreement(&prep.target, &run.substitute, cfg.ru_samples, &mut rng)
                .map_err(metrics)?,
        )
    } else {
        None
    };
    let transfer = if cfg.compute_transfer && !run.seeds.is_empty() {
        Some(
            transferability(
                &prep.target,
                &run.substitute,
                &run.seeds,
                &default_transfer_spec(),
            )
            .map_err(metrics)?,
        )
    } else {
        None
    };

    let (fpr_by_mode, benign_min_w, benign_bytes) = if cfg.compute_fpr {
        let benign = |e: Error| e.in_stage("benign");
        let streams =
            LabeledStreams::new(&prep.target, benign_streams(cfg, &prep).map_err(benign)?)
                .map_err(benign)?;
        let replayed = streams.replay(&det).map_err(benign)?;
        let probe = streams
            .replay(&det.with_delta(f64::MIN_POSITIVE))
            .map_err(benign)?;
        let bytes = replayed.iter().map(|r| r.2).max();
        (
            Some(summarize_fpr(&replayed)),
            Some(min_w_by_mode(&probe)),
            bytes,
        )
    } else {
        (None, None, None)
    };

    let evasion = if cfg.compute_evasion {
        let plan = plan_evasion(cfg, &verdicts).map_err(|e| e.in_stage("evasion"))?;
        plan.write_csv(create(out_dir, "evasion_plan.csv").map_err(io)?)
            .map_err(io)?;
        Some(EvasionSummary {
            useful: plan.useful,
            dummies: plan.dummies,
            overhead_ratio: plan.overhead_ratio,
        })
    } else {
        None
    };

    let report = MetricsReport {
        seed: cfg.seed,
        target_accuracy,
        test_agreement,
        round_agreements,
        ru_agreement: ru,
        transfer_targeted: transfer.map(|t| t.targeted),
        transfer_nontargeted: transfer.map(|t| t.non_targeted),
        fpr: fpr_by_mode.as_ref().and_then(mean_of),
        fpr_by_mode,
        benign_min_w,
        benign_growing_set_bytes: benign_bytes,
        detection_index: state.first_alarm(),
        queries_total: run.log.len(),
        growing_set_bytes: state.growing_set_bytes(),
        substitute_learning_rate: run.training.learning_rate,
        substitute_epochs: run.training.epochs,
        search_evaluations: run.search_trace.as_ref().map(|t| t.len()),
        evasion,
        config: cfg.clone(),
    };
    write_report(&report, out_dir).map_err(io)?;
    Ok(report)
}

pub fn write_report(report: &MetricsReport, out_dir: &Path) -> Result<()> {
    let mut w = create(out_dir, "report.json")?;
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// FPR per benign mode and the attack's detection index at each δ of
/// `cfg.sweep_deltas`, written to `sweep.csv` when `out_dir` is given.
pub fn sweep_delta(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Vec<SweepPoint>> {
    let prep = prepare(cfg)?;
    let run = run_attack(cfg, &prep)?;
    let benign = |e: Error| e.in_stage("benign");
    let streams = LabeledStreams::new(&prep.target, benign_streams(cfg, &prep).map_err(benign)?)
        .map_err(benign)?;
    let mut deltas = cfg.sweep_deltas.clone();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    let mut points = Vec::with_capacity(deltas.len());
    for delta in deltas {
        let det = cfg.detector().with_delta(delta);
        let fpr_by_mode = streams.fpr_by_mode(&det).map_err(benign)?;
        let (_, state) = replay(run.log.stream(), &det).map_err(|e| e.in_stage("detect"))?;
        points.push(SweepPoint {
            delta,
            fpr_mean: mean_of(&fpr_by_mode).unwrap_or(0.0),
            fpr_by_mode,
            detection_index: state.first_alarm(),
        });
    }
    if let Some(dir) = out_dir {
        let io = |e: Error| e.in_stage("report");
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_stage("report"))?;
        let mut out = csv::Writer::from_writer(create(dir, "sweep.csv").map_err(io)?);
        let mut header = vec!["delta".to_string()];
        header.extend(BenignMode::ALL.iter().map(|m| format!("fpr_{}", m.tag())));
        header.extend(["fpr_mean".to_string(), "detection_index".to_string()]);
        out.write_record(&header)
            .map_err(|e| Error::from(e).in_stage("report"))?;
        for p in &points {
            let mut row = vec![format!("{:?}", p.delta)];
            row.extend(BenignMode::ALL.iter().map(|m| {
                p.fpr_by_mode
                    .get(m.tag())
                    .map(|v| format!("{v:?}"))
                    .unwrap_or_default()
            }));
            row.push(format!("{:?}", p.fpr_mean));
            row.push(p.detection_index.map(|i| i.to_string()).unwrap_or_default());
            out.write_record(&row)
                .map_err(|e| Error::from(e).in_stage("report"))?;
        }
        out.flush().map_err(|e| Error::from(e).in_stage("report"))?;
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            blob_per_class: 200,
            target_epochs: 30,
            seed_count: 30,
            rounds: 1,
            benign_clients: 1,
            benign_length: 300,
            ru_samples: 500,
            compute_evasion: true,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn flat_toml_round_trip() {
        let cfg = small();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        let partial =
            ExperimentConfig::from_toml("seed = 7\nattack = \"trnd_ifgsm\"\ndelta = 0.8\n")
                .unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.attack, Synthesis::TrndIfgsm);
        assert_eq!(partial.rounds, ExperimentConfig::default().rounds);
        assert!(ExperimentConfig::from_toml("sed = 7\n").is_err());
        assert!(ExperimentConfig::from_toml("attack = \"nope\"\n").is_err());
    }

    #[test]
    fn invalid_configs_name_their_stage() {
        let cfg = ExperimentConfig {
            target_arch: "conv".into(),
            ..small()
        };
        let err = prepare(&cfg).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Stage {
                    stage: "config",
                    ..
                }
            ),
            "{err}"
        );
        let cfg = ExperimentConfig {
            seed_count: 10_000,
            ..small()
        };
        let prep = prepare(&cfg).unwrap();
        assert!(matches!(
            run_attack(&cfg, &prep),
            Err(Error::Stage {
                stage: "attack",
                ..
            })
        ));
    }

    #[test]
    fn report_is_complete_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let a = run_experiment(&cfg, dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("report.json")).unwrap();
        let b = run_experiment(&cfg, dir.path()).unwrap();
        let second = std::fs::read(dir.path().join("report.json")).unwrap();
        assert_eq!(a, b);
        assert_eq!(first, second);
        for f in [
            "target.net",
            "substitute.net",
            "queries.csv",
            "verdicts.csv",
            "evasion_plan.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let json: serde_json::Value = serde_json::from_slice(&first).unwrap();
        for key in [
            "test_agreement",
            "ru_agreement",
            "transfer_targeted",
            "transfer_nontargeted",
            "fpr",
            "detection_index",
            "queries_total",
            "growing_set_bytes",
            "config",
            "seed",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
        for r in [a.test_agreement, a.ru_agreement.unwrap(), a.fpr.unwrap()] {
            assert!((0.0..=1.0).contains(&r));
        }
        assert_eq!(a.queries_total, 60);
        assert_eq!(a.round_agreements.len(), 2);
    }

    #[test]
    fn disabled_metrics_are_null() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            compute_ru: false,
            compute_transfer: false,
            compute_fpr: false,
            compute_evasion: false,
            ..small()
        };
        run_experiment(&cfg, dir.path()).unwrap();
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap())
                .unwrap();
        for key in [
            "ru_agreement",
            "transfer_targeted",
            "fpr",
            "fpr_by_mode",
            "evasion",
        ] {
            assert_eq!(json[key], serde_json::Value::Null, "{key}");
        }
    }

    #[test]
    fn query_log_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let prep = prepare(&cfg).unwrap();
        let run = run_attack(&cfg, &prep).unwrap();
        let p = dir.path().join("q.csv");
        run.log.write_csv(File::create(&p).unwrap()).unwrap();
        let back = read_query_stream(&p).unwrap();
        let orig: Vec<(Vec<f64>, usize)> = run.log.stream().map(|(x, c)| (x.to_vec(), c)).collect();
        assert_eq!(back, orig);
    }

    #[test]
    fn sweep_fpr_is_monotone() {
        let cfg = ExperimentConfig {
            sweep_deltas: vec![0.99, 0.5, 0.9, 0.95, 0.8],
            ..small()
        };
        let dir = tempfile::tempdir().unwrap();
        let pts = sweep_delta(&cfg, Some(dir.path())).unwrap();
        assert_eq!(pts.len(), 5);
        for w in pts.windows(2) {
            assert!(w[0].delta < w[1].delta);
            assert!(w[0].fpr_mean <= w[1].fpr_mean);
        }
        let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), 6);
    }
}
