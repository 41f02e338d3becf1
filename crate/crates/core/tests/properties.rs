use mexlab_core::crafting::{craft, CraftSpec, Mode};
use mexlab_core::detector::{distance, ClientState, DetectorConfig, Metric, Status};
use mexlab_core::evasion::{plan_dummy_distances, replay_distances, EvasionConfig};
use mexlab_core::harness::{fpr, gen_blobs_dataset, replay_benign, stratified_split};
use mexlab_core::neuralnet::{read_network, write_network};
use mexlab_core::rng::seeded;
use mexlab_core::shapiro::shapiro_w;
use mexlab_core::Architecture;
use proptest::prelude::*;

fn features(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..=1.0, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shapiro_w_is_a_proportion(values in prop::collection::vec(-1e3f64..1e3, 3..300)) {
        prop_assume!(values.iter().any(|v| *v != values[0]));
        let w = shapiro_w(&values).unwrap();
        prop_assert!(w > 0.0 && w <= 1.0 + 1e-12, "w = {w}");
    }

    #[test]
    fn shapiro_w_ignores_scale_and_shift(
        values in prop::collection::vec(-10.0f64..10.0, 5..200),
        a in 0.01f64..100.0,
        b in -50.0f64..50.0,
    ) {
        prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-6));
        let w = shapiro_w(&values).unwrap();
        let moved: Vec<f64> = values.iter().map(|v| a * v + b).collect();
        prop_assert!((shapiro_w(&moved).unwrap() - w).abs() < 1e-9);
    }

    #[test]
    fn metrics_are_symmetric_and_ordered(x in features(6), y in features(6)) {
        let l1 = distance(&x, &y, Metric::L1).unwrap();
        let l2 = distance(&x, &y, Metric::L2).unwrap();
        prop_assert_eq!(l2, distance(&y, &x, Metric::L2).unwrap());
        prop_assert!(l2 <= l1 + 1e-12);
    }

    #[test]
    fn detector_state_evolves_consistently(
        queries in prop::collection::vec((features(3), 0usize..3), 1..250),
        delta in 0.5f64..0.99,
    ) {
        let cfg = DetectorConfig::new(delta);
        let mut st = ClientState::new();
        let mut thresholds = [0.0f64; 3];
        let mut seen_alarm = false;
        for (i, (x, c)) in queries.iter().enumerate() {
            let before = st.class(*c).map(|s| s.growing.len());
            let v = st.observe(x, *c, &cfg).unwrap();
            prop_assert_eq!(v.index, i + 1);
            prop_assert_eq!(v.d_min.is_none(), before.is_none());
            if let Some(d) = v.d_min {
                prop_assert!(d >= 0.0);
            }
            let class = st.class(*c).unwrap();
            prop_assert!(class.threshold >= thresholds[*c]);
            thresholds[*c] = class.threshold;
            if seen_alarm {
                // growing sets freeze once the client is flagged
                prop_assert_eq!(Some(class.growing.len()), before);
            }
            prop_assert_eq!(v.status == Status::WarmingUp, st.distances().len() <= cfg.window_min);
            seen_alarm = st.first_alarm().is_some();
            prop_assert_eq!(v.alarmed, seen_alarm);
        }
    }

    #[test]
    fn crafted_samples_respect_the_budget(x in features(4), eps in 0.0f64..0.8, seed in 0u64..1000, steps in 1usize..12) {
        let net = Architecture::new(4, vec![8], 3).init(seed);
        for spec in [
            CraftSpec::fgsm(Mode::NonTargeted, eps),
            CraftSpec::ifgsm(Mode::NonTargeted, eps, steps),
            CraftSpec::mifgsm(Mode::NonTargeted, eps, steps, 1.0),
        ] {
            let adv = craft(&net, &x, &spec, None).unwrap();
            for (a, x0) in adv.iter().zip(&x) {
                prop_assert!((a - x0).abs() <= eps + 1e-12);
                prop_assert!((-1.0..=1.0).contains(a));
            }
        }
    }

    #[test]
    fn persisted_networks_are_bit_exact(seed in 0u64..10_000, hidden in prop::collection::vec(1usize..12, 0..3)) {
        let net = Architecture::new(5, hidden, 4).init(seed);
        let mut bytes = Vec::new();
        write_network(&net, &mut bytes).unwrap();
        let back = read_network(&bytes[..]).unwrap();
        let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        prop_assert_eq!(bits(back.parameters()), bits(net.parameters()));
    }

    #[test]
    fn planned_streams_never_alarm(values in prop::collection::vec(0.0f64..2.0, 120..220), seed in 0u64..100) {
        let cfg = DetectorConfig::new(0.9);
        let ev = EvasionConfig { seed, ..EvasionConfig::default() };
        if let Ok(plan) = plan_dummy_distances(&values, &cfg, &ev) {
            prop_assert_eq!(plan.useful_stream(), values);
            prop_assert!(replay_distances(&plan.stream(), &cfg).iter().flatten().all(|d| !d.attack));
        }
    }
}

#[test]
fn stratified_split_keeps_every_sample_once() {
    let data = gen_blobs_dataset(3, 2, 50, 6.0, &mut seeded(1)).unwrap();
    let (a, b) = stratified_split(&data, 0.2, &mut seeded(2)).unwrap();
    assert_eq!(a.len() + b.len(), data.len());
    for c in 0..3 {
        assert_eq!(a.class_counts()[c] + b.class_counts()[c], 50);
        assert_eq!(b.class_counts()[c], 10);
    }
}

#[test]
fn fpr_grows_with_delta() {
    let net = Architecture::new(2, vec![8], 3).init(4);
    let mut rng = seeded(5);
    let stream: Vec<Vec<f64>> = (0..1500)
        .map(|_| {
            use rand::Rng;
            vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
        })
        .collect();
    let mut last = 0.0;
    for delta in [0.5, 0.7, 0.8, 0.9, 0.95, 0.99] {
        let f = fpr(
            &replay_benign(&net, &stream, &DetectorConfig::new(delta)).unwrap(),
            50,
        );
        assert!(f >= last, "fpr {f} below {last} at delta {delta}");
        last = f;
    }
}
