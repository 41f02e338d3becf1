use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use super::{AttackConfig, LabeledSet, Synthesis};
use crate::crafting::{craft_toward, CraftSpec, Mode, DEFAULT_STEPS};
use crate::data::clip_features;
use crate::error::{Error, Result};
use crate::neuralnet::Network;
use crate::rng::Rng;

/// New candidate queries derived from every labeled sample.
///
/// - jbda: one FGSM step of size λ ascending the loss of the oracle label.
/// - trnd: k−1 targeted steps toward distinct random classes other than the
///   oracle label, by FGSM or 11-step I-FGSM with total budget λ.
/// - color: k−1 copies, each channel shifted by ±λ with a random sign.
///
/// All outputs are clipped to the feature range.
pub fn generate_synthetic(
    labeled: &LabeledSet,
    sub: &Network,
    cfg: &AttackConfig,
    classes: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate(classes)?;
    let k = cfg.expansion;
    let mut out = Vec::with_capacity(labeled.len() * (k - 1).max(1));
    match cfg.synthesis {
        Synthesis::Jbda => {
            let spec = CraftSpec::fgsm(Mode::NonTargeted, cfg.lambda);
            for e in labeled.entries() {
                out.push(craft_toward(sub, &e.sample, &spec, e.response.label())?);
            }
        }
        Synthesis::TrndFgsm | Synthesis::TrndIfgsm => {
            let spec = if cfg.synthesis == Synthesis::TrndFgsm {
                CraftSpec::fgsm(Mode::Targeted, cfg.lambda)
            } else {
                CraftSpec::ifgsm(Mode::Targeted, cfg.lambda, DEFAULT_STEPS)
            };
            for e in labeled.entries() {
                let current = e.response.label();
                let mut others: Vec<usize> = (0..classes).filter(|&c| c != current).collect();
                others.shuffle(rng);
                for &t in &others[..k - 1] {
                    out.push(craft_toward(sub, &e.sample, &spec, t)?);
                }
            }
        }
        Synthesis::Color => {
            let ch = cfg.channels;
            for e in labeled.entries() {
                for _ in 0..k - 1 {
                    let shifts: Vec<f64> = (0..ch)
                        .map(|_| {
                            if rng.random::<bool>() {
                                cfg.lambda
                            } else {
                                -cfg.lambda
                            }
                        })
                        .collect();
                    let mut x: Vec<f64> = e
                        .sample
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v + shifts[i % ch])
                        .collect();
                    clip_features(&mut x);
                    out.push(x);
                }
            }
        }
        Synthesis::Tramer => {
            return Err(Error::invalid(
                "random line-search does not synthesize from labeled data",
            ))
        }
    }
    Ok(out)
}

/// Keeps ⌈fraction·n⌉ items chosen uniformly without replacement, in their
/// original order.
pub fn reservoir_subsample<T>(items: Vec<T>, fraction: f64, rng: &mut Rng) -> Vec<T> {
    if fraction >= 1.0 {
        return items;
    }
    let n = items.len();
    let keep = ((fraction * n as f64).ceil() as usize).min(n);
    let mut chosen = vec![false; n];
    for i in index::sample(rng, n, keep) {
        chosen[i] = true;
    }
    items
        .into_iter()
        .zip(chosen)
        .filter_map(|(x, c)| c.then_some(x))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{OracleResponse, Provenance};
    use crate::neuralnet::Architecture;
    use crate::rng::seeded;

    fn set(points: &[[f64; 2]], labels: &[usize]) -> LabeledSet {
        let mut s = LabeledSet::default();
        for (p, &l) in points.iter().zip(labels) {
            s.push(p.to_vec(), OracleResponse::Label(l), Provenance::Seed, 0);
        }
        s
    }

    fn cfg(synthesis: Synthesis, k: usize, lambda: f64) -> AttackConfig {
        AttackConfig {
            synthesis,
            expansion: k,
            lambda,
            ..AttackConfig::papernot(Architecture::new(2, vec![4], 4), 1, 1, 0)
        }
    }

    #[test]
    fn jbda_one_child_per_parent() {
        let sub = Architecture::new(2, vec![4], 4).init(1);
        let l = set(&[[0.1, 0.2], [0.9, -0.95], [-0.3, 0.0]], &[0, 1, 3]);
        let u =
            generate_synthetic(&l, &sub, &cfg(Synthesis::Jbda, 2, 0.1), 4, &mut seeded(0)).unwrap();
        assert_eq!(u.len(), 3);
        for (child, parent) in u.iter().zip(l.samples()) {
            for (c, p) in child.iter().zip(parent) {
                let d = (c - p).abs();
                assert!(d < 1e-12 || (d - 0.1).abs() < 1e-12 || *c == 1.0 || *c == -1.0);
            }
        }
    }

    #[test]
    fn trnd_children_and_targets() {
        let sub = Architecture::new(2, vec![4], 4).init(1);
        let l = set(&[[0.1, 0.2], [0.5, -0.5]], &[2, 0]);
        let u = generate_synthetic(
            &l,
            &sub,
            &cfg(Synthesis::TrndFgsm, 4, 0.2),
            4,
            &mut seeded(0),
        )
        .unwrap();
        assert_eq!(u.len(), 6);
        // with k = m every other class is targeted exactly once
        let spec = CraftSpec::fgsm(Mode::Targeted, 0.2);
        for (p, parent) in l.entries().iter().enumerate() {
            let mut expected: Vec<Vec<f64>> = (0..4)
                .filter(|&c| c != parent.response.label())
                .map(|c| craft_toward(&sub, &parent.sample, &spec, c).unwrap())
                .collect();
            let mut got = u[p * 3..p * 3 + 3].to_vec();
            let key = |v: &Vec<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            expected.sort_by_key(key);
            got.sort_by_key(key);
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn color_shifts_whole_channels() {
        let sub = Architecture::new(4, vec![], 4).init(1);
        let mut l = LabeledSet::default();
        l.push(
            vec![0.0, 0.1, 0.2, 0.95],
            OracleResponse::Label(0),
            Provenance::Seed,
            0,
        );
        let c = AttackConfig {
            channels: 2,
            architecture: Architecture::new(4, vec![], 4),
            ..cfg(Synthesis::Color, 4, 0.1)
        };
        let u = generate_synthetic(&l, &sub, &c, 4, &mut seeded(3)).unwrap();
        assert_eq!(u.len(), 3);
        for x in &u {
            let s0 = x[0] - 0.0;
            assert!((x[2] - 0.2 - s0).abs() < 1e-12);
            let s1 = x[1] - 0.1;
            assert!((s1.abs() - 0.1).abs() < 1e-12);
            assert!(x[3] <= 1.0);
        }
    }

    #[test]
    fn reservoir_counts() {
        let items: Vec<usize> = (0..100).collect();
        assert_eq!(
            reservoir_subsample(items.clone(), 1.0, &mut seeded(0)),
            items
        );
        let half = reservoir_subsample(items.clone(), 0.5, &mut seeded(0));
        assert_eq!(half.len(), 50);
        assert!(half.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(reservoir_subsample(items, 0.333, &mut seeded(0)).len(), 34);
    }

    #[test]
    fn reservoir_is_uniform() {
        let mut rng = seeded(42);
        let mut freq = [0usize; 20];
        let trials = 10_000;
        for _ in 0..trials {
            for i in reservoir_subsample((0..20).collect(), 0.25, &mut rng) {
                freq[i] += 1;
            }
        }
        let p: f64 = 5.0 / 20.0;
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for f in freq {
            assert!((f as f64 - mean).abs() <= 3.0 * sd, "{f} vs {mean}");
        }
    }
}
