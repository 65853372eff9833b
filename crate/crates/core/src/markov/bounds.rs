//! Exact confidence bounds on Q, the feasibility condition and the visit
//! counts that guarantee it.

use serde::Serialize;

use crate::attack::AttackError;
use crate::confidence::ConfidenceWidths;
use crate::game::{Cell, GameShape, JointPolicy, RewardTable, TransitionTable};

/// `max Σ_s P(s) q(s)` over distributions within L1 distance `rho` of `p_hat`.
pub fn l1_ball_max(p_hat: &[f64], q: &[f64], rho: f64) -> f64 {
    l1_ball_argmax(p_hat, q, rho).iter().zip(q).map(|(p, v)| p * v).sum()
}

/// A maximiser of `Σ_s P(s) q(s)` within L1 distance `rho` of `p_hat`.
///
/// Moves up to `rho / 2` mass into the best state, taking it from the
/// worst states first.
pub fn l1_ball_argmax(p_hat: &[f64], q: &[f64], rho: f64) -> Vec<f64> {
    let best = (0..q.len()).fold(0, |b, s| if q[s] > q[b] { s } else { b });
    let mut budget = (rho / 2.0).min(1.0 - p_hat[best]).max(0.0);
    let mut order: Vec<usize> = (0..q.len()).filter(|&s| s != best).collect();
    order.sort_by(|&a, &b| q[a].total_cmp(&q[b]));
    let mut p = p_hat.to_vec();
    for s in order {
        if budget <= 0.0 {
            break;
        }
        let moved = budget.min(p_hat[s]);
        p[s] -= moved;
        p[best] += moved;
        budget -= moved;
    }
    p
}

/// A minimiser of `Σ_s P(s) q(s)` over the same set.
pub fn l1_ball_argmin(p_hat: &[f64], q: &[f64], rho: f64) -> Vec<f64> {
    let neg: Vec<f64> = q.iter().map(|v| -v).collect();
    l1_ball_argmax(p_hat, &neg, rho)
}

/// `min Σ_s P(s) q(s)` over the same set.
pub fn l1_ball_min(p_hat: &[f64], q: &[f64], rho: f64) -> f64 {
    let neg: Vec<f64> = q.iter().map(|v| -v).collect();
    -l1_ball_max(p_hat, &neg, rho)
}

/// Lower and upper confidence bounds on Q under a fixed policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QBounds {
    pub q_lower: RewardTable<f64>,
    pub q_upper: RewardTable<f64>,
}

/// Backward recursion of the confidence bounds with exact inner
/// optimisation over the transition sets.
///
/// `Q̲_h = r̲ + min_P Σ P Q̲_{h+1}(·, π_{h+1})` and symmetrically for `Q̄`,
/// where `r̲ = R - ρ^R` and `r̄ = R + ρ^R`, clipped to `[-b, b]` when
/// `clip_bound` is given.
pub fn exact_q_bounds(
    shape: &GameShape,
    means: &RewardTable<f64>,
    p_hat: &TransitionTable<f64>,
    widths: &ConfidenceWidths,
    policy: &JointPolicy,
    clip_bound: Option<f64>,
) -> QBounds {
    let (n, hz, ns, nj) = (shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint());
    let b = clip_bound.unwrap_or(f64::INFINITY);
    let mut lo = RewardTable::filled(shape, 0.0);
    let mut hi = RewardTable::filled(shape, 0.0);
    for i in 0..n {
        for h in (0..hz).rev() {
            let next = (h + 1 < hz).then(|| {
                let vl: Vec<f64> = (0..ns).map(|s2| lo.get(i, h + 1, s2, policy.action(h + 1, s2))).collect();
                let vu: Vec<f64> = (0..ns).map(|s2| hi.get(i, h + 1, s2, policy.action(h + 1, s2))).collect();
                (vl, vu)
            });
            for s in 0..ns {
                for a in 0..nj {
                    let (r, w) = (means.get(i, h, s, a), widths.rho_r(h, s, a));
                    let (mut l, mut u) = ((r - w).max(-b), (r + w).min(b));
                    if let Some((vl, vu)) = &next {
                        let (p, rp) = (p_hat.row(h, s, a), widths.rho_p(h, s, a));
                        l += l1_ball_min(p, vl, rp);
                        u += l1_ball_max(p, vu, rp);
                    }
                    lo.set(i, h, s, a, l);
                    hi.set(i, h, s, a, u);
                }
            }
        }
    }
    QBounds { q_lower: lo, q_upper: hi }
}

/// One cell breaking `ι ≤ 2b - (H + 1) ρ^R_h(s, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityViolation {
    pub cell: Cell,
    pub rho_r: f64,
    /// `2b - (H + 1) ρ^R_h(s, a)`.
    pub threshold: f64,
}

/// Outcome of the cell-wise feasibility condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub holds: bool,
    pub violations: Vec<FeasibilityViolation>,
}

/// Checks `ι ≤ 2b - (H + 1) ρ^R_h(s, a)` for every cell.
pub fn feasibility_condition(shape: &GameShape, widths: &ConfidenceWidths, iota: f64, bound: f64) -> Result<FeasibilityReport, AttackError> {
    if !bound.is_finite() {
        return Err(AttackError::InvalidInstance("the feasibility condition needs a finite bound".into()));
    }
    let factor = (shape.horizon() + 1) as f64;
    let mut violations = Vec::new();
    for h in 0..shape.horizon() {
        for s in 0..shape.n_states() {
            for a in 0..shape.n_joint() {
                let rho_r = widths.rho_r(h, s, a);
                let threshold = 2.0 * bound - factor * rho_r;
                if iota > threshold {
                    violations.push(FeasibilityViolation { cell: Cell { h, s, a }, rho_r, threshold });
                }
            }
        }
    }
    Ok(FeasibilityReport { holds: violations.is_empty(), violations })
}

/// Largest count returned before reporting overflow.
pub const MAX_COUNT: f64 = 9_007_199_254_740_992.0;

/// Smallest uniform count `N ≥ 4b²(H+1)² ln(H|S||A|/δ) / (2b - ι)²`, for
/// which the Hoeffding reward widths (scale 2) meet the feasibility
/// condition in every cell.
pub fn required_counts(shape: &GameShape, bound: f64, iota: f64, delta: f64) -> Result<u64, AttackError> {
    if !(bound.is_finite() && bound > 0.0) {
        return Err(AttackError::InvalidInstance("required counts need a finite positive bound".into()));
    }
    if !(iota >= 0.0 && iota < 2.0 * bound) {
        return Err(AttackError::InvalidMargin(iota));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AttackError::InvalidInstance(format!("confidence level must lie in (0, 1), got {delta}")));
    }
    let hz = shape.horizon() as f64;
    let log = ((shape.horizon() * shape.n_states() * shape.n_joint()) as f64 / delta).ln();
    let n = 4.0 * bound * bound * (hz + 1.0).powi(2) * log / (2.0 * bound - iota).powi(2);
    to_count(n.ceil().max(1.0))
}

fn to_count(n: f64) -> Result<u64, AttackError> {
    if n.is_finite() && n <= MAX_COUNT {
        Ok(n as u64)
    } else {
        Err(AttackError::CountOverflow(n))
    }
}

/// Smallest `N` with `f(1/N) ≤ (2b - ι) / (H + 1)` for a width function
/// `f` nondecreasing in its argument.
pub fn required_counts_for_width(width: impl Fn(f64) -> f64, horizon: usize, bound: f64, iota: f64) -> Result<u64, AttackError> {
    if !(bound.is_finite() && bound > 0.0) {
        return Err(AttackError::InvalidInstance("required counts need a finite positive bound".into()));
    }
    if !(iota >= 0.0 && iota < 2.0 * bound) {
        return Err(AttackError::InvalidMargin(iota));
    }
    let limit = (2.0 * bound - iota) / (horizon + 1) as f64;
    let ok = |n: u64| width(1.0 / n as f64) <= limit;
    let mut hi = 1u64;
    while !ok(hi) {
        if hi as f64 >= MAX_COUNT {
            return Err(AttackError::CountOverflow(f64::INFINITY));
        }
        hi = hi.saturating_mul(2);
    }
    let mut lo = hi / 2;
    if lo == 0 {
        return Ok(1);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{q_values, MarkovGame};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Grid search over the simplex of three states.
    fn brute_max(p: &[f64; 3], q: &[f64; 3], rho: f64) -> f64 {
        let steps = 300;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let x = [i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
                let d: f64 = x.iter().zip(p).map(|(a, b)| (a - b).abs()).sum();
                if d <= rho + 1e-12 {
                    best = best.max(x.iter().zip(q).map(|(a, b)| a * b).sum());
                }
            }
        }
        best
    }

    #[test]
    fn greedy_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            // Centre on the grid so the brute force can reach the optimum.
            let i = rng.gen_range(0..=300);
            let j = rng.gen_range(0..=(300 - i));
            let p = [i as f64 / 300.0, j as f64 / 300.0, (300 - i - j) as f64 / 300.0];
            let q = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let rho = (rng.gen_range(0..=60) as f64) / 150.0;
            assert!((l1_ball_max(&p, &q, rho) - brute_max(&p, &q, rho)).abs() < 1e-9);
        }
    }

    #[test]
    fn greedy_respects_nonnegativity() {
        // Only 0.1 mass is available outside the best state.
        let v = l1_ball_max(&[0.9, 0.1, 0.0], &[1.0, 0.0, -5.0], 1.5);
        assert!((v - 1.0).abs() < 1e-12);
        let v = l1_ball_min(&[0.5, 0.5], &[1.0, 3.0], 0.4);
        assert!((v - (0.7 + 0.3 * 3.0)).abs() < 1e-12);
    }

    fn setup(seed: u64) -> (GameShape, RewardTable<f64>, TransitionTable<f64>, JointPolicy) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = GameShape::new(2, vec![2, 2], 3).unwrap();
        let r = RewardTable::from_fn(&shape, |_, _, _, _| rng.gen_range(-1.0..1.0));
        let p = TransitionTable::from_rows(&shape, |_, _, _| {
            let x = rng.gen_range(0.1..0.9);
            vec![x, 1.0 - x]
        })
        .unwrap();
        let pol = JointPolicy::from_joint_table(&shape, &[vec![1, 2], vec![0, 3], vec![2, 2]]).unwrap();
        (shape, r, p, pol)
    }

    #[test]
    fn zero_widths_reduce_to_q_values() {
        let (shape, r, p, pol) = setup(1);
        let w = ConfidenceWidths::zero(&shape);
        let qb = exact_q_bounds(&shape, &r, &p, &w, &pol, None);
        let g = MarkovGame::new(shape.clone(), p, r, vec![0.5, 0.5], 1.0).unwrap();
        let q = q_values(&g, &pol);
        for ((a, b), c) in qb.q_lower.values().iter().zip(qb.q_upper.values()).zip(q.q.values()) {
            assert!((a - c).abs() < 1e-12 && (b - c).abs() < 1e-12);
        }
    }

    #[test]
    fn last_period_width_is_twice_rho() {
        let (shape, r, p, pol) = setup(2);
        let w = ConfidenceWidths::constant(&shape, 0.2, 0.3).unwrap();
        let qb = exact_q_bounds(&shape, &r, &p, &w, &pol, None);
        for i in 0..2 {
            for s in 0..2 {
                for a in 0..4 {
                    let d = qb.q_upper.get(i, 2, s, a) - qb.q_lower.get(i, 2, s, a);
                    assert!((d - 0.4).abs() < 1e-12);
                }
            }
        }
        assert!(qb.q_lower.values().iter().zip(qb.q_upper.values()).all(|(l, u)| l <= u));
        let clipped = exact_q_bounds(&shape, &r, &p, &w, &pol, Some(1.0));
        for (c, u) in clipped.q_lower.values().iter().zip(qb.q_lower.values()) {
            assert!(c >= u);
        }
    }

    #[test]
    fn single_period_condition_matches_bandit() {
        let shape = GameShape::new(1, vec![2, 2], 1).unwrap();
        let w = ConfidenceWidths::constant(&shape, 0.2, 0.0).unwrap();
        assert!(feasibility_condition(&shape, &w, 1.6, 1.0).unwrap().holds);
        assert!(!feasibility_condition(&shape, &w, 1.61, 1.0).unwrap().holds);
    }

    #[test]
    fn condition_by_substitution() {
        let shape = GameShape::new(2, vec![2, 2], 3).unwrap();
        let w = ConfidenceWidths::constant(&shape, 0.3, 0.1).unwrap();
        let rep = feasibility_condition(&shape, &w, 0.9, 1.0).unwrap();
        assert!(!rep.holds);
        assert_eq!(rep.violations.len(), 3 * 2 * 4);
        assert!((rep.violations[0].threshold - 0.8).abs() < 1e-12);
    }

    #[test]
    fn required_count_value() {
        let shape = GameShape::new(2, vec![2, 2], 2).unwrap();
        // 4 * 9 * ln(320) / 2.25 = 92.2907..., evaluated with mpmath.
        assert_eq!(required_counts(&shape, 1.0, 0.5, 0.05).unwrap(), 93);
    }

    #[test]
    fn generic_width_agrees_with_closed_form() {
        let shape = GameShape::new(2, vec![2, 2], 2).unwrap();
        let log = (320.0f64).ln();
        for iota in [0.0, 0.3, 0.5, 1.2, 1.9] {
            let n1 = required_counts(&shape, 1.0, iota, 0.05).unwrap();
            let n2 = required_counts_for_width(|x| 2.0 * (log * x).sqrt(), 2, 1.0, iota).unwrap();
            assert!(n1.abs_diff(n2) <= 1, "{n1} vs {n2}");
        }
    }

    #[test]
    fn margin_near_twice_bound_overflows() {
        let shape = GameShape::new(2, vec![2, 2], 2).unwrap();
        assert!(matches!(required_counts(&shape, 1.0, 2.0, 0.05), Err(AttackError::InvalidMargin(_))));
        assert!(matches!(required_counts(&shape, 1.0, 2.0 - 1e-12, 0.05), Err(AttackError::CountOverflow(_))));
        let a = required_counts(&shape, 1.0, 1.9, 0.05).unwrap();
        let b = required_counts(&shape, 1.0, 1.99, 0.05).unwrap();
        assert!(b > a);
    }
}
