use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{clip_features, Dataset, FEATURE_MAX, FEATURE_MIN};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_STREAM_LENGTH: usize = 6000;
pub const DEFAULT_SEQUENCE_LENGTH: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenignMode {
    IidNatural,
    RandomUniform,
    Sequences,
}

impl BenignMode {
    pub const ALL: [BenignMode; 3] = [
        BenignMode::IidNatural,
        BenignMode::RandomUniform,
        BenignMode::Sequences,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            BenignMode::IidNatural => "iid_natural",
            BenignMode::RandomUniform => "random_uniform",
            BenignMode::Sequences => "sequences",
        }
    }
}

/// Where natural benign samples come from.
pub enum BenignSource<'a> {
    /// Draw with replacement from a fixed pool.
    Pool(&'a Dataset),
    /// Fresh draws from a generator (for example the blob distribution).
    Generator(&'a mut dyn FnMut(&mut Rng) -> Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenignStreamSpec {
    pub mode: BenignMode,
    pub length: usize,
    pub sequence_length: usize,
    /// Noise std at the start of each sequence; it decays linearly to
    /// `sequence_noise / sequence_length` at the end.
    pub sequence_noise: f64,
}

impl BenignStreamSpec {
    pub fn new(mode: BenignMode, sequence_noise: f64) -> Self {
        BenignStreamSpec {
            mode,
            length: DEFAULT_STREAM_LENGTH,
            sequence_length: DEFAULT_SEQUENCE_LENGTH,
            sequence_noise,
        }
    }
}

/// Ordered benign queries for one simulated client.
///
/// - iid_natural: independent natural samples.
/// - random_uniform: uniform points of the feature cube.
/// - sequences: runs of `sequence_length` noisy copies of one natural base
///   sample, the noise shrinking along the run.
pub fn benign_stream(
    spec: &BenignStreamSpec,
    source: Option<BenignSource<'_>>,
    dim: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    if spec.length == 0 {
        return Err(Error::invalid("stream length must be positive"));
    }
    let mut source = source;
    let mut natural = |rng: &mut Rng| -> Result<Vec<f64>> {
        match source.as_mut() {
            Some(BenignSource::Pool(pool)) => {
                if pool.is_empty() {
                    return Err(Error::EmptyDataset);
                }
                Ok(pool.sample(rng.random_range(0..pool.len())).to_vec())
            }
            Some(BenignSource::Generator(g)) => Ok(g(rng)),
            None => Err(Error::invalid(
                "this benign mode needs a natural sample source",
            )),
        }
    };
    let mut out = Vec::with_capacity(spec.length);
    match spec.mode {
        BenignMode::IidNatural => {
            for _ in 0..spec.length {
                out.push(natural(rng)?);
            }
        }
        BenignMode::RandomUniform => {
            for _ in 0..spec.length {
                out.push(
                    (0..dim)
                        .map(|_| rng.random_range(FEATURE_MIN..=FEATURE_MAX))
                        .collect(),
                );
            }
        }
        BenignMode::Sequences => {
            if spec.sequence_length == 0 || !(spec.sequence_noise > 0.0) {
                return Err(Error::invalid(
                    "sequences need a positive run length and noise level",
                ));
            }
            let l = spec.sequence_length as f64;
            while out.len() < spec.length {
                let base = natural(rng)?;
                for j in 0..spec.sequence_length {
                    if out.len() == spec.length {
                        break;
                    }
                    let sigma = spec.sequence_noise * (l - j as f64) / l;
                    let noise =
                        Normal::new(0.0, sigma).map_err(|e| Error::Numeric(e.to_string()))?;
                    let mut x: Vec<f64> = base.iter().map(|v| v + noise.sample(rng)).collect();
                    clip_features(&mut x);
                    out.push(x);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{distance, Metric};
    use crate::harness::gen_blobs_dataset;
    use crate::rng::seeded;

    #[test]
    fn default_length_and_ranges() {
        let spec = BenignStreamSpec::new(BenignMode::RandomUniform, 0.1);
        assert_eq!(spec.length, 6000);
        let s = benign_stream(&spec, None, 3, &mut seeded(1)).unwrap();
        assert_eq!(s.len(), 6000);
        assert!(s.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn sequences_form_runs() {
        let pool = gen_blobs_dataset(3, 2, 50, 6.0, &mut seeded(2)).unwrap();
        let spec = BenignStreamSpec {
            length: 60,
            ..BenignStreamSpec::new(BenignMode::Sequences, 0.05)
        };
        let two = benign_stream(&spec, Some(BenignSource::Pool(&pool)), 2, &mut seeded(3)).unwrap();
        assert_eq!(two.len(), 60);
        let spec = BenignStreamSpec {
            length: 600,
            ..spec
        };
        let s = benign_stream(&spec, Some(BenignSource::Pool(&pool)), 2, &mut seeded(3)).unwrap();
        let mean_dist = |pairs: &[(usize, usize)]| {
            pairs
                .iter()
                .map(|&(i, j)| distance(&s[i], &s[j], Metric::L2).unwrap())
                .sum::<f64>()
                / pairs.len() as f64
        };
        let mut within = Vec::new();
        let mut between = Vec::new();
        for i in 0..600 {
            for j in i + 1..600 {
                if i / 30 == j / 30 {
                    within.push((i, j));
                } else {
                    between.push((i, j));
                }
            }
        }
        assert!(mean_dist(&within) < mean_dist(&between));
    }

    #[test]
    fn natural_modes_need_a_source() {
        let spec = BenignStreamSpec::new(BenignMode::IidNatural, 0.1);
        assert!(benign_stream(&spec, None, 2, &mut seeded(0)).is_err());
        let empty = Dataset::labeled(vec![], vec![], 2).unwrap();
        assert!(benign_stream(&spec, Some(BenignSource::Pool(&empty)), 2, &mut seeded(0)).is_err());
        let mut g = |_: &mut Rng| vec![0.25, -0.5];
        let s = benign_stream(
            &BenignStreamSpec { length: 5, ..spec },
            Some(BenignSource::Generator(&mut g)),
            2,
            &mut seeded(0),
        )
        .unwrap();
        assert_eq!(s, vec![vec![0.25, -0.5]; 5]);
    }
}
