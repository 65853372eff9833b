//! Cost bounds of a Markov attack, the worst-case instance and the
//! random-game gap estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::period::{delta_h, DeltaBreakdown, PeriodInstance};
use crate::attack::AttackError;
use crate::confidence::{uniform_transition_in_ci, ConfidenceWidths};
use crate::game::{GameShape, JointPolicy};
use crate::generators::worst_case_dataset;
use crate::markov::{solve_markov_attack, MarkovAttackInstance, MarkovLpOptions};

/// Closed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// `N̲_h Δ_h ≤ C*(I_h) ≤ N̄_h Δ_h` for one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodSandwich {
    pub h: usize,
    pub delta: DeltaBreakdown,
    pub min_count: u64,
    pub max_count: u64,
    pub bounds: Interval,
    /// Solved one-period optimum when supplied.
    pub optimum: Option<f64>,
}

/// Every applicable bound on the optimal attack cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBoundsReport {
    /// `0 ≤ C* ≤ N̄ H |S| n |A| 2b` with `|A|` the joint action count.
    pub universal: Interval,
    /// `C*(I_H)`: the last period alone.
    pub last_period_lower: Option<f64>,
    /// `Σ_h C*(I_h)`, valid when the uniform transition lies in every
    /// transition confidence set.
    pub uniform_transition_lower: Option<f64>,
    /// `Σ_h C*(I_h) + 2b n H |S| N̄ + H² ρ̄ |S| n |A| N̄`, emitted when the
    /// feasibility condition holds.
    pub decomposition_upper: Option<f64>,
    pub period_sandwiches: Vec<PeriodSandwich>,
    /// Why a bound was left out.
    pub notes: Vec<String>,
}

impl CostBoundsReport {
    /// Largest applicable lower bound.
    pub fn best_lower(&self) -> f64 {
        [Some(self.universal.lower), self.last_period_lower, self.uniform_transition_lower].into_iter().flatten().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest applicable upper bound.
    pub fn best_upper(&self) -> f64 {
        [Some(self.universal.upper), self.decomposition_upper].into_iter().flatten().fold(f64::INFINITY, f64::min)
    }

    /// Whether `cost` lies within every applicable bound up to `tol`
    /// relative to `max(1, cost)`.
    pub fn brackets(&self, cost: f64, tol: f64) -> bool {
        let slack = tol * cost.abs().max(1.0);
        self.best_lower() <= cost + slack && cost <= self.best_upper() + slack
    }
}

/// Optimal cost of each one-period restriction.
pub fn period_optima(inst: &MarkovAttackInstance, opts: &MarkovLpOptions) -> Result<Vec<f64>, AttackError> {
    (0..inst.shape().horizon()).map(|h| Ok(solve_markov_attack(&inst.period(h)?, opts)?.attack.cost)).collect()
}

/// Collects the bounds; the bounds that need one-period optima are only
/// emitted when `period_optima` is given.
pub fn cost_bounds(inst: &MarkovAttackInstance, period_optima: Option<&[f64]>) -> Result<CostBoundsReport, AttackError> {
    let shape = inst.shape();
    let (n, hz, ns, nj) = (shape.n_players() as f64, shape.horizon(), shape.n_states(), shape.n_joint());
    let counts = &inst.mle().counts;
    let n_max = counts.max() as f64;
    let b = inst.bound();
    let mut notes = Vec::new();
    if let Some(opt) = period_optima {
        if opt.len() != hz {
            return Err(AttackError::InvalidInstance(format!("expected {hz} period optima, got {}", opt.len())));
        }
    }
    let universal = Interval { lower: 0.0, upper: n_max * hz as f64 * ns as f64 * n * nj as f64 * 2.0 * b };
    let mut period_sandwiches = Vec::with_capacity(hz);
    for h in 0..hz {
        let p = PeriodInstance::from_markov(inst, h)?;
        let delta = delta_h(&p);
        let (lo, hi) = (p.min_count(), p.max_count());
        period_sandwiches.push(PeriodSandwich {
            h,
            delta,
            min_count: lo,
            max_count: hi,
            bounds: Interval { lower: lo as f64 * delta.total, upper: hi as f64 * delta.total },
            optimum: period_optima.map(|o| o[h]),
        });
    }
    let (mut last_period_lower, mut uniform_transition_lower, mut decomposition_upper) = (None, None, None);
    match period_optima {
        None => notes.push("one-period optima not supplied; bounds built from them are omitted".into()),
        Some(opt) => {
            last_period_lower = Some(opt[hz - 1]);
            let sum: f64 = opt.iter().sum();
            let uniform = (0..hz.saturating_sub(1))
                .all(|h| (0..ns).all(|s| (0..nj).all(|a| uniform_transition_in_ci(inst.mle().transitions.row(h, s, a), inst.widths().rho_p(h, s, a), ns))));
            if uniform {
                uniform_transition_lower = Some(sum);
            } else {
                notes.push("uniform transition outside some transition confidence set; summed one-period lower bound omitted".into());
            }
            if inst.feasibility()?.holds {
                let rho_bar = inst.widths().max_rho_r();
                let hf = hz as f64;
                decomposition_upper = Some(sum + 2.0 * b * n * hf * ns as f64 * n_max + hf * hf * rho_bar * ns as f64 * n * nj as f64 * n_max);
            } else {
                notes.push("feasibility condition fails; decomposition upper bound omitted".into());
            }
        }
    }
    Ok(CostBoundsReport { universal, last_period_lower, uniform_transition_lower, decomposition_upper, period_sandwiches, notes })
}

/// Worst-case instance: the same stage game in every period and state,
/// where each player receives `-b` for its target action 0 and `+b`
/// otherwise. Every cell is visited `visits` times, next states cycle so
/// `P̂` is uniform when `n_states` divides `visits`, reward widths are
/// `rho` and transition widths zero.
#[allow(clippy::too_many_arguments)]
pub fn worst_case_instance(
    n: usize,
    actions: usize,
    n_states: usize,
    horizon: usize,
    visits: usize,
    bound: f64,
    rho: f64,
    iota: f64,
) -> Result<MarkovAttackInstance, AttackError> {
    if n == 0 || actions == 0 || n_states == 0 || horizon == 0 || visits == 0 {
        return Err(AttackError::InvalidInstance("players, actions, states, horizon and visits must be positive".into()));
    }
    if !(bound.is_finite() && bound > 0.0) || !(rho.is_finite() && rho >= 0.0) {
        return Err(AttackError::InvalidInstance("bound must be positive and finite, widths nonnegative".into()));
    }
    if !(iota > 0.0 && iota < bound) {
        return Err(AttackError::InvalidMargin(iota));
    }
    let ds = worst_case_dataset(n, actions, n_states, horizon, visits, bound)?;
    let shape: GameShape = ds.shape().clone();
    let widths = ConfidenceWidths::constant(&shape, rho, 0.0)?;
    MarkovAttackInstance::new(ds, JointPolicy::all_zeros(&shape), widths, iota, bound)
}

/// `N H |S| n |A|^{n-1} (2b + 2ρ + ι)`: a lower bound on the cost of the
/// worst-case instance, equal to the summed one-period optima for two
/// actions per player. With `A` actions each group costs
/// `2b + (A - 1)(2ρ + ι)`.
#[allow(clippy::too_many_arguments)]
pub fn worst_case_lower_bound(n: usize, actions: usize, n_states: usize, horizon: usize, visits: usize, bound: f64, rho: f64, iota: f64) -> f64 {
    (visits * horizon * n_states * n) as f64 * (actions as f64).powi(n as i32 - 1) * (2.0 * bound + 2.0 * rho + iota)
}

/// Monte Carlo estimate of the summed zero-margin dominance gap of a
/// uniformly random game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// `n |A|^{n-1} b / 6`.
    pub reference: f64,
}

/// Draws payoffs uniform in `[-b, b]` and averages
/// `Σ_{i, a_-i} [max_{a_i ≠ 0} R_i(a_i, a_-i) - R_i(0, a_-i)]₊`.
pub fn random_game_gap_estimate(n: usize, actions: usize, bound: f64, samples: usize, seed: u64) -> Result<GapEstimate, AttackError> {
    if samples == 0 || n == 0 || actions == 0 || !(bound.is_finite() && bound >= 0.0) {
        return Err(AttackError::InvalidInstance("need samples, players and actions ≥ 1 and a finite bound ≥ 0".into()));
    }
    let shape = GameShape::symmetric(n, actions, 1, 1)?;
    let nj = shape.n_joint();
    let profiles: Vec<Vec<usize>> = (0..n).map(|i| shape.opponent_profiles(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut payoff = vec![0.0; n * nj];
    for _ in 0..samples {
        for x in payoff.iter_mut() {
            *x = if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 };
        }
        let mut total = 0.0;
        for (i, reps) in profiles.iter().enumerate() {
            for &rep in reps {
                let t = payoff[i * nj + shape.with_action(rep, i, 0)];
                let best = (1..actions).map(|x| payoff[i * nj + shape.with_action(rep, i, x)] - t).fold(0.0, f64::max);
                total += best;
            }
        }
        sum += total;
        sq += total * total;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = if samples > 1 { ((sq - m * mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
    let reference = n as f64 * (actions as f64).powi(n as i32 - 1) * bound / 6.0;
    Ok(GapEstimate { mean, std_error: (var / m).sqrt(), samples, reference })
}
