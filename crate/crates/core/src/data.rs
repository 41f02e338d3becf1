//! Labeled sample collections shared by training, attacks and metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Features are kept inside this closed range everywhere in the crate.
pub const FEATURE_MIN: f64 = -1.0;
pub const FEATURE_MAX: f64 = 1.0;

const PROB_TOLERANCE: f64 = 1e-6;

/// Training targets: either all hard labels or all probability vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Labels(Vec<usize>),
    Probabilities(Vec<Vec<f64>>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(l) => l.len(),
            Targets::Probabilities(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hard label of entry `i`; argmax (lowest index on ties) for soft targets.
    pub fn label(&self, i: usize) -> usize {
        match self {
            Targets::Labels(l) => l[i],
            Targets::Probabilities(p) => argmax(&p[i]),
        }
    }

    pub fn is_soft(&self) -> bool {
        matches!(self, Targets::Probabilities(_))
    }
}

/// Samples with matching targets over `classes` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<Vec<f64>>,
    targets: Targets,
    classes: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Vec<f64>>, targets: Targets, classes: usize) -> Result<Self> {
        if samples.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} samples but {} targets",
                samples.len(),
                targets.len()
            )));
        }
        if classes == 0 {
            return Err(Error::invalid("class count must be positive"));
        }
        if let Some(first) = samples.first() {
            let dim = first.len();
            for s in &samples {
                if s.len() != dim {
                    return Err(Error::Shape {
                        expected: dim,
                        found: s.len(),
                    });
                }
                if s.iter()
                    .any(|v| !v.is_finite() || *v < FEATURE_MIN || *v > FEATURE_MAX)
                {
                    return Err(Error::invalid("feature outside [-1, 1]"));
                }
            }
        }
        match &targets {
            Targets::Labels(labels) => {
                if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
                    return Err(Error::invalid(format!("label {bad} out of range")));
                }
            }
            Targets::Probabilities(probs) => {
                for p in probs {
                    if p.len() != classes {
                        return Err(Error::Shape {
                            expected: classes,
                            found: p.len(),
                        });
                    }
                    let sum: f64 = p.iter().sum();
                    if (sum - 1.0).abs() > PROB_TOLERANCE || p.iter().any(|v| *v < 0.0) {
                        return Err(Error::invalid("probability target does not sum to 1"));
                    }
                }
            }
        }
        Ok(Dataset {
            samples,
            targets,
            classes,
        })
    }

    pub fn labeled(samples: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        Self::new(samples, Targets::Labels(labels), classes)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i]
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn label(&self, i: usize) -> usize {
        self.targets.label(i)
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    /// Builds a new dataset from the entries at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let targets = match &self.targets {
            Targets::Labels(l) => Targets::Labels(indices.iter().map(|&i| l[i]).collect()),
            Targets::Probabilities(p) => {
                Targets::Probabilities(indices.iter().map(|&i| p[i].clone()).collect())
            }
        };
        Dataset {
            samples,
            targets,
            classes: self.classes,
        }
    }

    /// Per-class entry counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for i in 0..self.len() {
            counts[self.label(i)] += 1;
        }
        counts
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Clamps every feature into the valid range.
pub fn clip_features(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(FEATURE_MIN, FEATURE_MAX);
    }
}
