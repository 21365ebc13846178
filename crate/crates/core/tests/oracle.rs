//! Sampled-tree game solver: verdict structure and agreement with the analytic iterates.

use percgame::fixpoint::{analytic_iterates, EdgeWeightLaw, GameSpec};
use percgame::offspring::OffspringDistribution;
use percgame::oracle::{
    estimate_probs_all, sample_tree, solve_game_exact, GameTable, GameVerdict, OracleOptions,
    DEFAULT_NODE_CAP,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_dist() -> impl Strategy<Value = OffspringDistribution> {
    prop_oneof![
        (1u32..4).prop_map(|m| OffspringDistribution::dirac(m).unwrap()),
        (0.5f64..2.5).prop_map(|l| OffspringDistribution::poisson(l).unwrap()),
        (0.2f64..0.8, 2u32..4).prop_map(|(p, d)| OffspringDistribution::two_point(p, d).unwrap()),
    ]
}

fn law() -> impl Strategy<Value = EdgeWeightLaw> {
    (0.0f64..=1.0, 0.0f64..=1.0)
        .prop_map(|(p0, b)| EdgeWeightLaw::from_p0_p1(p0, b * (1.0 - p0)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn verdicts_respect_capital_order_and_horizon(
        d in small_dist(), l in law(), kappa in 2u32..6, seed in any::<u64>()
    ) {
        let depth = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = sample_tree(&d, &l, depth, 200_000, &mut rng).unwrap();
        let mut previous: Option<GameTable> = None;
        for horizon in 0..=depth {
            let table = solve_game_exact(&tree, kappa, horizon).unwrap();
            for u in 0..tree.len() {
                if tree.generation(u) + horizon > depth {
                    continue;
                }
                for i in 1..kappa {
                    for j in 1..kappa {
                        let v = table.verdict(u, i, j);
                        if j + 1 < kappa && table.verdict(u, i, j + 1) == GameVerdict::Win {
                            prop_assert_eq!(v, GameVerdict::Win);
                        }
                        if i + 1 < kappa && v == GameVerdict::Win {
                            prop_assert_eq!(table.verdict(u, i + 1, j), GameVerdict::Win);
                        }
                        if i + 1 < kappa && table.verdict(u, i + 1, j) == GameVerdict::Lose {
                            prop_assert_eq!(v, GameVerdict::Lose);
                        }
                        if j + 1 < kappa && v == GameVerdict::Lose {
                            prop_assert_eq!(table.verdict(u, i, j + 1), GameVerdict::Lose);
                        }
                        if let Some(prev) = &previous {
                            let p = prev.verdict(u, i, j);
                            if p != GameVerdict::Undecided {
                                prop_assert_eq!(v, p);
                            }
                        }
                    }
                }
            }
            previous = Some(table);
        }
    }
}

#[test]
fn estimates_grow_with_horizon() {
    let spec = GameSpec::new(
        3,
        OffspringDistribution::poisson(2.0).unwrap(),
        EdgeWeightLaw::from_p0_p1(0.5, 0.25).unwrap(),
    )
    .unwrap();
    let opts = OracleOptions {
        samples: 4_000,
        seed: 11,
        node_cap: DEFAULT_NODE_CAP,
    };
    let all = estimate_probs_all(&spec, 6, &opts).unwrap();
    for pair in all.windows(2) {
        assert!(pair[0].l.dominated_by(&pair[1].l, 0.0));
        assert!(pair[0].w.dominated_by(&pair[1].w, 0.0));
    }
    assert_eq!(all[0].l.max_entry(), 0.0);
    assert_eq!(all[0].w.max_entry(), 0.0);
}

#[test]
fn estimates_are_reproducible() {
    let spec = GameSpec::new(
        2,
        OffspringDistribution::dirac(2).unwrap(),
        EdgeWeightLaw::from_p0_p1(0.8, 0.1).unwrap(),
    )
    .unwrap();
    let opts = OracleOptions {
        samples: 3_000,
        seed: 5,
        node_cap: DEFAULT_NODE_CAP,
    };
    let a = estimate_probs_all(&spec, 4, &opts).unwrap();
    let b = estimate_probs_all(&spec, 4, &opts).unwrap();
    assert_eq!(a, b);
    let c = estimate_probs_all(&spec, 4, &OracleOptions { seed: 6, ..opts }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn binary_tree_horizon_six_matches_iterate() {
    let spec = GameSpec::new(
        2,
        OffspringDistribution::dirac(2).unwrap(),
        EdgeWeightLaw::from_p0_p1(0.8, 0.1).unwrap(),
    )
    .unwrap();
    let est = estimate_probs_all(&spec, 6, &OracleOptions::default()).unwrap();
    let it = analytic_iterates(&spec, 6);
    let l = it[6].0.get(0, 0);
    let w = it[6].1.get(0, 0);
    let se_l = (l * (1.0 - l) / 1e5).sqrt();
    let se_w = (w * (1.0 - w) / 1e5).sqrt();
    assert!(
        (est[6].l.get(0, 0) - l).abs() <= 3.0 * se_l,
        "{} vs {l}",
        est[6].l.get(0, 0)
    );
    assert!(
        (est[6].w.get(0, 0) - w).abs() <= 3.0 * se_w,
        "{} vs {w}",
        est[6].w.get(0, 0)
    );
}
