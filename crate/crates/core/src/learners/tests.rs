use super::*;
use crate::confidence::PlausibleGameSampler;
use crate::game::{q_values, visit_counts};
use crate::generators::{bandit_dataset, random_dataset, random_policy, example_game_dataset, RandomDatasetSpec, EXAMPLE_GAME_BOUND};
use crate::markov::{solve_markov_attack, MarkovAttackInstance, MarkovLpOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn zero(shape: &GameShape) -> RewardTable<f64> {
    RewardTable::filled(shape, 0.0)
}

#[test]
fn zero_bonus_one_period_picks_dominant_profile() {
    let ds = example_game_dataset(&[1, 2, 3, 4]).unwrap();
    let out = povi(&ds, &zero(ds.shape()), EXAMPLE_GAME_BOUND).unwrap();
    assert_eq!(out.policy, vec![vec![0]]);
    assert!(out.all_strict());
}

#[test]
fn zero_bonus_reproduces_mle_q_values() {
    let shape = GameShape::new(2, vec![2, 2], 3).unwrap();
    let spec = RandomDatasetSpec { min_visits: 1, max_visits: 3, bound: 1.0, noise: 0.0 };
    for seed in 0..5 {
        let ds = random_dataset(&shape, &spec, seed).unwrap();
        let out = match povi(&ds, &zero(&shape), 1.0) {
            Ok(o) => o,
            Err(LearnerError::NoEquilibrium { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        let game = mle_game(&ds, 1.0).unwrap().to_game(&shape).unwrap();
        let q = q_values(&game, &out.joint_policy(&shape)).q;
        for (x, y) in q.values().iter().zip(out.q_lower.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn bonus_vanishes_with_counts_and_scales_with_horizon() {
    let ds1 = example_game_dataset(&[1, 1, 1, 1]).unwrap();
    let ds2 = example_game_dataset(&[100, 100, 100, 100]).unwrap();
    let g1 = bonus_gamma(ds1.shape(), &visit_counts(&ds1), BonusKind::Pessimistic, 1.0, 0.1).unwrap();
    let g2 = bonus_gamma(ds2.shape(), &visit_counts(&ds2), BonusKind::Pessimistic, 1.0, 0.1).unwrap();
    assert!(g2.get(0, 0, 0, 0) < g1.get(0, 0, 0, 0) / 5.0);
    // |Γ| / H · √(N + 1) = √β in every cell.
    let shape = GameShape::new(2, vec![2, 2], 2).unwrap();
    let ds = random_dataset(&shape, &RandomDatasetSpec { min_visits: 1, max_visits: 4, bound: 1.0, noise: 0.0 }, 1).unwrap();
    let counts = visit_counts(&ds);
    let g = bonus_gamma(&shape, &counts, BonusKind::Optimistic, 0.5, 0.1).unwrap();
    let beta = 0.5 * ((2.0 * 4.0 * 2.0 * counts.period_total(0) as f64) / 0.1).ln();
    for h in 0..2 {
        for s in 0..2 {
            for a in 0..4 {
                let x = g.get(1, h, s, a);
                assert!(x < 0.0);
                assert!((x.abs() / 2.0 * (counts.get(h, s, a) as f64 + 1.0).sqrt() - beta.sqrt()).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn bonus_equal_to_widths_is_compatible() {
    let shape = GameShape::new(2, vec![2, 2], 2).unwrap();
    let ds = random_dataset(&shape, &RandomDatasetSpec { min_visits: 1, max_visits: 4, bound: 1.0, noise: 0.1 }, 2).unwrap();
    let counts = visit_counts(&ds);
    let g = bonus_gamma(&shape, &counts, BonusKind::Pessimistic, 1.0, 0.1).unwrap();
    let rho_r: Vec<Vec<Vec<f64>>> = (0..2).map(|h| (0..2).map(|s| (0..4).map(|a| g.get(0, h, s, a)).collect()).collect()).collect();
    let rho_p = vec![vec![vec![0.0; 4]; 2]; 1];
    let w = ConfidenceWidths::explicit(&shape, &rho_r, &rho_p).unwrap();
    let mle = mle_game(&ds, 1.0).unwrap();
    let v = vec![vec![vec![0.3, -0.2]; 2]; 2];
    let report = check_bonus_compatibility(&mle, &g, &w, &v);
    assert!(report.holds);
    assert!(report.min_slack.abs() < 1e-12);
}

#[test]
fn constant_values_reduce_to_reward_width() {
    let shape = GameShape::new(2, vec![2, 2], 2).unwrap();
    let ds = random_dataset(&shape, &RandomDatasetSpec { min_visits: 2, max_visits: 2, bound: 1.0, noise: 0.0 }, 3).unwrap();
    let mle = mle_game(&ds, 1.0).unwrap();
    let w = ConfidenceWidths::constant(&shape, 0.2, 0.5).unwrap();
    let v = vec![vec![vec![0.7, 0.7]; 2]; 2];
    let g = RewardTable::filled(&shape, 0.2);
    let report = check_bonus_compatibility(&mle, &g, &w, &v);
    assert!(report.cells.iter().all(|c| c.inner.abs() < 1e-15));
    assert!(report.holds);
    let over = RewardTable::filled(&shape, 0.21);
    assert!(!check_bonus_compatibility(&mle, &over, &w, &v).holds);
}

#[test]
fn inflated_bonus_fails_by_its_excess() {
    let shape = GameShape::new(2, vec![2, 2], 2).unwrap();
    let ds = random_dataset(&shape, &RandomDatasetSpec { min_visits: 2, max_visits: 3, bound: 1.0, noise: 0.0 }, 4).unwrap();
    let mle = mle_game(&ds, 1.0).unwrap();
    let w = ConfidenceWidths::constant(&shape, 0.1, 0.3).unwrap();
    let v = vec![vec![vec![1.0, -1.0]; 2]; 2];
    let base = check_bonus_compatibility(&mle, &zero(&shape), &w, &v);
    let mut inflated = zero(&shape);
    for c in &base.cells {
        inflated.set(c.player, c.h, c.s, c.a, c.rho_r + c.inner + 0.01);
    }
    let report = check_bonus_compatibility(&mle, &inflated, &w, &v);
    assert!(!report.holds);
    assert!((report.min_slack + 0.01).abs() < 1e-12);
}

#[test]
fn pessimism_and_optimism_can_disagree() {
    // Action 0 looks better but was seen once; action 1 was seen often.
    let ds = bandit_dataset(vec![2], &[vec![0.5], vec![0.4]], &[1, 100]).unwrap();
    let counts = visit_counts(&ds);
    let pess = bonus_gamma(ds.shape(), &counts, BonusKind::Pessimistic, 1.0, 0.1).unwrap();
    let opt = bonus_gamma(ds.shape(), &counts, BonusKind::Optimistic, 1.0, 0.1).unwrap();
    assert_eq!(povi(&ds, &pess, 1.0).unwrap().policy, vec![vec![1]]);
    assert_eq!(povi(&ds, &opt, 1.0).unwrap().policy, vec![vec![0]]);
}

#[test]
fn missing_pure_equilibrium_is_reported() {
    let ds = bandit_dataset(vec![2, 2], &[vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0]], &[1, 1, 1, 1]).unwrap();
    assert_eq!(povi(&ds, &zero(ds.shape()), 1.0).unwrap_err(), LearnerError::NoEquilibrium { h: 0, s: 0 });
}

fn attacked(seed: u64) -> (MarkovAttackInstance, OfflineDataset) {
    let shape = GameShape::new(2, vec![2, 2], 2).unwrap();
    let ds = random_dataset(&shape, &RandomDatasetSpec { min_visits: 2, max_visits: 4, bound: 1.0, noise: 0.2 }, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = random_policy(&shape, &mut rng);
    let w = ConfidenceWidths::constant(&shape, 0.15, 0.3).unwrap();
    let inst = MarkovAttackInstance::new(ds, pi, w, 0.1, 1.0).unwrap();
    let res = solve_markov_attack(&inst, &MarkovLpOptions::default()).unwrap();
    (inst, res.attack.poisoned)
}

#[test]
fn witness_games_are_plausible_and_reproduce_lower_values() {
    for seed in 0..4 {
        let (inst, poisoned) = attacked(seed);
        let shape = inst.shape().clone();
        let counts = visit_counts(&poisoned);
        let c = largest_compatible_constant(&shape, &counts, inst.widths(), 0.1);
        let mle = mle_game(&poisoned, 1.0).unwrap();
        let sampler = PlausibleGameSampler::new(
            shape.clone(),
            mle.rewards.clone(),
            mle.transitions.clone(),
            mle.initial_dist.clone(),
            inst.widths().clone(),
            1.0,
            false,
            0,
        )
        .unwrap();
        for kind in [BonusKind::Pessimistic, BonusKind::Optimistic] {
            let g = bonus_gamma(&shape, &counts, kind, c, 0.1).unwrap();
            let out = povi(&poisoned, &g, 1.0).unwrap();
            let games = compatibility_witness(&mle, &shape, &g, inst.widths(), &out).unwrap();
            let policy = out.joint_policy(&shape);
            for (i, game) in games.iter().enumerate() {
                sampler.check_membership(game).unwrap();
                let q = q_values(game, &policy).q;
                for h in 0..2 {
                    for s in 0..2 {
                        for a in 0..4 {
                            assert!((q.get(i, h, s, a) - out.q_lower.get(i, h, s, a)).abs() < 1e-8);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn learners_recover_target_after_attack() {
    for seed in 0..4 {
        let (inst, poisoned) = attacked(seed);
        let shape = inst.shape().clone();
        let counts = visit_counts(&poisoned);
        let c = largest_compatible_constant(&shape, &counts, inst.widths(), 0.1);
        for kind in [BonusKind::Pessimistic, BonusKind::Optimistic, BonusKind::Zero] {
            let g = bonus_gamma(&shape, &counts, kind, c, 0.1).unwrap();
            let out = povi(&poisoned, &g, 1.0).unwrap();
            assert!(check_bonus_compatibility(&mle_game(&poisoned, 1.0).unwrap(), &g, inst.widths(), &out.v_lower).holds);
            assert_eq!(out.joint_policy(&shape), *inst.target());
            assert!(out.all_strict());
        }
    }
}
