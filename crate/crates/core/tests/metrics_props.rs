use pnav_core::harness::{compute_metrics, metrics_from, EpisodeResult};
use proptest::prelude::*;

fn episode() -> impl Strategy<Value = (bool, f64, f64, usize)> {
    (any::<bool>(), 0.0f64..30.0, 0.0f64..60.0, 0usize..6).prop_map(|(s, l, extra, i)| (s, l, l + extra, if s { i.max(1) } else { i }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn spl_and_sit_never_exceed_sr(rows in prop::collection::vec(episode(), 1..60)) {
        let m = metrics_from(rows.iter().copied()).unwrap();
        prop_assert!(m.spl <= m.sr + 1e-9);
        prop_assert!(m.sit <= m.sr + 1e-9);
        prop_assert!((0.0..=100.0).contains(&m.sr));
        prop_assert_eq!(m.n, rows.len());
    }

    #[test]
    fn order_does_not_matter(rows in prop::collection::vec(episode(), 1..40), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let results: Vec<EpisodeResult> = rows
            .iter()
            .enumerate()
            .map(|(k, &(success, l, a, i))| EpisodeResult {
                scene: "s".into(), seed: 0, goal_index: k, goal: format!("g{k}"), success,
                path_length: a, shortest_path: l, interactions: i, steps: 0, reason: None,
            })
            .collect();
        let mut shuffled = results.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (a, b) = (compute_metrics(&results).unwrap(), compute_metrics(&shuffled).unwrap());
        prop_assert_eq!(a.sr, b.sr);
        prop_assert!((a.spl - b.spl).abs() < 1e-9 && (a.sit - b.sit).abs() < 1e-9);
    }

    #[test]
    fn one_talk_everywhere_makes_sit_equal_sr(succ in prop::collection::vec(any::<bool>(), 1..60)) {
        let m = metrics_from(succ.iter().map(|&s| (s, 1.0, 2.0, 1))).unwrap();
        prop_assert_eq!(m.sit, m.sr);
    }
}

#[test]
fn hand_example_to_1e6() {
    let m = metrics_from([(true, 4.0, 5.0, 1), (false, 2.0, 2.0, 3), (true, 5.0, 10.0, 5)]).unwrap();
    assert!((m.sr - 66.667).abs() < 1e-3 && (m.sr - 200.0 / 3.0).abs() < 1e-6);
    assert!((m.spl - 130.0 / 3.0).abs() < 1e-6);
    assert!((m.sit - 40.0).abs() < 1e-6);
}
