//! Per-episode rewards realising a prescribed table of cell means.

use crate::game::{GameError, OfflineDataset, RewardTable};

/// Rewards `clip(r0_k + c, -b, b)` with the common shift `c` chosen so the
/// mean equals `target`.
///
/// Every entry moves in the direction of `target - mean(r0)`, so the L1
/// change equals `N |target - mean(r0)|`, the least possible for that mean.
/// Requires `r0` and `target` inside `[-b, b]`.
pub fn lift_cell(r0: &[f64], target: f64, bound: f64) -> Vec<f64> {
    let n = r0.len() as f64;
    if n == 0.0 {
        return Vec::new();
    }
    let mean = r0.iter().sum::<f64>() / n;
    if !bound.is_finite() {
        return r0.iter().map(|r| r + (target - mean)).collect();
    }
    let target = target.clamp(-bound, bound);
    if target == bound || target == -bound {
        return vec![target; r0.len()];
    }
    let shifted = |c: f64| r0.iter().map(|r| (r + c).clamp(-bound, bound)).sum::<f64>() / n;
    let (mut lo, mut hi) = (-2.0 * bound, 2.0 * bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shifted(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * bound {
            break;
        }
    }
    // Solve the linear piece containing the root exactly.
    let c0 = 0.5 * (lo + hi);
    let (mut fixed, mut free_sum, mut free) = (0.0, 0.0, 0usize);
    for &r in r0 {
        let x = r + c0;
        if x >= bound {
            fixed += bound;
        } else if x <= -bound {
            fixed -= bound;
        } else {
            free_sum += r;
            free += 1;
        }
    }
    let c = if free > 0 { (n * target - fixed - free_sum) / free as f64 } else { c0 };
    r0.iter().map(|r| (r + c).clamp(-bound, bound)).collect()
}

/// Replaces the rewards of every cell so that its cell means equal `target`.
///
/// Errors when the target or a dataset reward lies outside `[-b, b]`, or
/// when the table shape does not match the dataset.
pub fn lift_mle_to_rewards(dataset: &OfflineDataset, target: &RewardTable<f64>, bound: f64) -> Result<OfflineDataset, GameError> {
    let shape = dataset.shape();
    let (n, hz, ns, nj) = (shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint());
    if target.n_players() != n || target.horizon() != hz || target.n_states() != ns || target.n_joint() != nj {
        return Err(GameError::ShapeMismatch("target table does not match dataset".into()));
    }
    let tol = 1e-9 * bound.max(1.0);
    for (idx, &t) in target.values().iter().enumerate() {
        if t.is_nan() || t.abs() > bound + tol {
            let a = idx % nj;
            let s = (idx / nj) % ns;
            let h = (idx / (nj * ns)) % hz;
            return Err(GameError::RewardOutOfBounds { i: idx / (nj * ns * hz), h, s, a });
        }
    }
    if dataset.max_abs_reward() > bound + tol {
        return Err(GameError::ShapeMismatch("dataset rewards exceed the bound".into()));
    }
    let members = dataset.cell_members();
    let mut lifted = vec![0.0; dataset.n_episodes() * hz * n];
    for h in 0..hz {
        for s in 0..ns {
            for a in 0..nj {
                let ks = &members[(h * ns + s) * nj + a];
                for i in 0..n {
                    let r0: Vec<f64> = ks.iter().map(|&k| dataset.reward(k, h, i)).collect();
                    for (&k, r) in ks.iter().zip(lift_cell(&r0, target.get(i, h, s, a), bound)) {
                        lifted[(k * hz + h) * n + i] = r;
                    }
                }
            }
        }
    }
    Ok(dataset.with_rewards(|k, h, i| lifted[(k * hz + h) * n + i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l1(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }

    #[test]
    fn identity_when_target_is_mean() {
        let r0 = [0.2, -0.4, 0.9];
        let mean = r0.iter().sum::<f64>() / 3.0;
        let out = lift_cell(&r0, mean, 1.0);
        for (a, b) in out.iter().zip(&r0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_episode_takes_target() {
        assert_eq!(lift_cell(&[0.3], -0.7, 1.0), vec![-0.7]);
    }

    #[test]
    fn clipping_keeps_mean() {
        let r0 = [0.95, 0.9, -1.0, 0.1];
        let out = lift_cell(&r0, 0.8, 1.0);
        let mean = out.iter().sum::<f64>() / 4.0;
        assert!((mean - 0.8).abs() < 1e-12);
        assert!(out.iter().all(|r| r.abs() <= 1.0));
        let m0 = r0.iter().sum::<f64>() / 4.0;
        assert!((l1(&out, &r0) - 4.0 * (0.8 - m0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mean_and_cost_are_exact(r0 in prop::collection::vec(-1.0f64..=1.0, 1..12), t in -1.0f64..=1.0) {
            let out = lift_cell(&r0, t, 1.0);
            let n = r0.len() as f64;
            let mean = out.iter().sum::<f64>() / n;
            prop_assert!((mean - t).abs() < 1e-9);
            let m0 = r0.iter().sum::<f64>() / n;
            prop_assert!((l1(&out, &r0) - n * (t - m0).abs()).abs() < 1e-9);
            prop_assert!(out.iter().all(|r| r.abs() <= 1.0));
        }
    }
}
