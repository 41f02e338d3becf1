//! Datasets, agreement and transfer metrics, benign traffic, and detector
//! evaluation.

mod benign;
mod datasets;
mod experiment;
mod metrics;

pub use benign::{
    benign_stream, BenignMode, BenignSource, BenignStreamSpec, DEFAULT_SEQUENCE_LENGTH,
    DEFAULT_STREAM_LENGTH,
};
pub use datasets::{
    balanced_seeds, blob_centroid, blob_sigma, gen_blobs_dataset, load_csv_dataset, sample_blob,
    stratified_split, write_csv_dataset,
};
pub use experiment::{
    attack_config, attack_distances, benign_streams, min_w_by_mode, plan_evasion, prepare,
    read_query_stream, run_attack, run_experiment, sweep_delta, write_report, write_search_trace,
    AttackRun, DatasetKind, EvasionSummary, ExperimentConfig, LabeledStreams, MetricsReport,
    Prepared, SweepPoint,
};
pub use metrics::{
    default_transfer_spec, macro_f1, ru_agreement, test_agreement, transferability,
    Transferability, RU_SAMPLES,
};

use crate::detector::{replay, DetectorConfig, Status, Verdict};
use crate::error::Result;
use crate::extraction::QueryLog;
use crate::neuralnet::Network;

pub const FPR_CHUNK: usize = 50;

/// Fraction of consecutive `chunk`-query windows holding at least one
/// attack verdict. A trailing partial chunk counts as a chunk.
pub fn fpr(verdicts: &[Verdict], chunk: usize) -> f64 {
    if verdicts.is_empty() || chunk == 0 {
        return 0.0;
    }
    let chunks: Vec<&[Verdict]> = verdicts.chunks(chunk).collect();
    let flagged = chunks
        .iter()
        .filter(|c| c.iter().any(|v| v.status == Status::Attack))
        .count();
    flagged as f64 / chunks.len() as f64
}

/// 1-based index of the first attack verdict when the logged queries are
/// replayed in order, each under the label the oracle returned for it.
pub fn detection_speed(log: &QueryLog, cfg: &DetectorConfig) -> Result<Option<usize>> {
    let (_, state) = replay(log.stream(), cfg)?;
    Ok(state.first_alarm())
}

/// Replays a benign stream, labelling each query with the target's
/// prediction, and returns its verdicts.
pub fn replay_benign(
    target: &Network,
    stream: &[Vec<f64>],
    cfg: &DetectorConfig,
) -> Result<Vec<Verdict>> {
    let labels = stream
        .iter()
        .map(|x| target.predict_label(x))
        .collect::<Result<Vec<usize>>>()?;
    let (verdicts, _) = replay(stream.iter().map(|x| x.as_slice()).zip(labels), cfg)?;
    Ok(verdicts)
}
