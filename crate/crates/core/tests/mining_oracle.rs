mod common;

use common::{mine_literal, random_glances, random_track};
use glancevad::mining::{mine, MiningConfig};
use glancevad::types::{GlanceSet, RngSeed, ScoreTrack};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn matches_literal_algorithm() {
    let mut rng = RngSeed(11).rng();
    for case in 0..1000 {
        let len = rng.random_range(1..=64);
        let a = random_track(&mut rng, len);
        let g = random_glances(&mut rng, len);
        let alpha = match case % 5 {
            0 => 1.0,
            _ => rng.random_range(0.05..1.0),
        };
        for dynamic in [true, false] {
            let cfg = MiningConfig { alpha, dynamic };
            let got = mine(&a, &g, &cfg).unwrap();
            let want: Vec<usize> = mine_literal(a.as_slice(), g.snippets(), alpha, dynamic).into_iter().collect();
            assert_eq!(got, want, "case {case}: scores {:?}, glances {:?}, alpha {alpha}", a.as_slice(), g.snippets());
        }
    }
}

#[test]
fn alpha_one_mines_nothing() {
    let mut rng = RngSeed(12).rng();
    for _ in 0..300 {
        let len = rng.random_range(1..=64);
        let a = random_track(&mut rng, len);
        let g = random_glances(&mut rng, len);
        let mined = mine(&a, &g, &MiningConfig::new(1.0).unwrap()).unwrap();
        assert!(mined.iter().all(|t| g.snippets().contains(t)), "{mined:?}");
    }
}

#[test]
fn glance_is_mined_iff_its_score_is_positive() {
    let a = ScoreTrack::new(vec![0.0, 0.4, 0.0]).unwrap();
    let g = GlanceSet::new("v", vec![0, 1], 1, 3).unwrap();
    assert_eq!(mine(&a, &g, &MiningConfig::default()).unwrap(), vec![1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mined_set_shrinks_as_alpha_grows(
        seed in any::<u64>(),
        a1 in 0.01f64..=1.0,
        a2 in 0.01f64..=1.0,
    ) {
        let mut rng = RngSeed(seed).rng();
        let len = rng.random_range(1..=64);
        let a = random_track(&mut rng, len);
        let g = random_glances(&mut rng, len);
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let wide = mine(&a, &g, &MiningConfig::new(lo).unwrap()).unwrap();
        let narrow = mine(&a, &g, &MiningConfig::new(hi).unwrap()).unwrap();
        prop_assert!(narrow.iter().all(|t| wide.contains(t)));
    }

    #[test]
    fn mined_runs_are_contiguous_around_glances(seed in any::<u64>(), alpha in 0.05f64..1.0) {
        let mut rng = RngSeed(seed).rng();
        let len = rng.random_range(1..=64);
        let a = random_track(&mut rng, len);
        let g = random_glances(&mut rng, len);
        let mined = mine(&a, &g, &MiningConfig::new(alpha).unwrap()).unwrap();
        for &t in &mined {
            // Every mined snippet is linked to some glance through mined snippets.
            let linked = g.snippets().iter().any(|&s| {
                let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
                (lo..=hi).all(|u| mined.contains(&u))
            });
            prop_assert!(linked, "snippet {} isolated in {:?}", t, mined);
        }
    }
}
