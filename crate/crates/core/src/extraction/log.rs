use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{targets_from, OracleResponse};
use crate::data::Dataset;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Seed,
    Synthetic,
    Random,
    Linesearch,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::Seed => "seed",
            Provenance::Synthetic => "synthetic",
            Provenance::Random => "random",
            Provenance::Linesearch => "linesearch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub sample: Vec<f64>,
    pub response: OracleResponse,
    pub provenance: Provenance,
    pub round: usize,
}

/// Every sample the attacker has had labeled, in query order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    entries: Vec<LabeledEntry>,
}

impl LabeledSet {
    pub fn push(
        &mut self,
        sample: Vec<f64>,
        response: OracleResponse,
        provenance: Provenance,
        round: usize,
    ) {
        self.entries.push(LabeledEntry {
            sample,
            response,
            provenance,
            round,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LabeledEntry] {
        &self.entries
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(|e| e.sample.as_slice())
    }

    /// Soft targets when every response carries probabilities, else labels.
    pub fn to_dataset(&self, classes: usize) -> Result<Dataset> {
        let responses: Vec<&OracleResponse> = self.entries.iter().map(|e| &e.response).collect();
        Dataset::new(
            self.entries.iter().map(|e| e.sample.clone()).collect(),
            targets_from(&responses),
            classes,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub index: usize,
    pub round: usize,
    pub provenance: Provenance,
    pub label: usize,
    pub sample: Vec<f64>,
}

/// Queries in the exact order the oracle received them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryLog {
    records: Vec<QueryRecord>,
}

impl QueryLog {
    pub fn push(&mut self, round: usize, provenance: Provenance, sample: &[f64], label: usize) {
        self.records.push(QueryRecord {
            index: self.records.len() + 1,
            round,
            provenance,
            label,
            sample: sample.to_vec(),
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    /// (sample, label) pairs for detector replay.
    pub fn stream(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.records.iter().map(|r| (r.sample.as_slice(), r.label))
    }

    /// One row per query: `index,round,provenance,label,f0,f1,...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.records.first().map_or(0, |r| r.sample.len());
        let mut header = vec![
            "index".to_string(),
            "round".into(),
            "provenance".into(),
            "label".into(),
        ];
        header.extend((0..dim).map(|i| format!("f{i}")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.index.to_string(),
                r.round.to_string(),
                r.provenance.tag().to_string(),
                r.label.to_string(),
            ];
            row.extend(r.sample.iter().map(|v| format!("{v:?}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
