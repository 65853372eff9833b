//! One-period quantities: dominance gaps, overflow terms, their total and
//! the closed-form mean-level attack.

use serde::Serialize;

use crate::attack::AttackError;
use crate::bandit::BanditAttackInstance;
use crate::game::{GameShape, RewardTable};
use crate::markov::MarkovAttackInstance;

/// Restriction of an attack instance to one period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodInstance {
    /// One-period shape with the instance's states and actions.
    shape: GameShape,
    /// Clean cell means, one period.
    means: RewardTable<f64>,
    /// Visits per `(s, a)`.
    counts: Vec<u64>,
    /// Reward widths per `(s, a)`.
    rho: Vec<f64>,
    /// Target joint action per state.
    target: Vec<usize>,
    iota: f64,
    bound: f64,
}

impl PeriodInstance {
    pub fn new(
        shape: GameShape,
        means: RewardTable<f64>,
        counts: Vec<u64>,
        rho: Vec<f64>,
        target: Vec<usize>,
        iota: f64,
        bound: f64,
    ) -> Result<Self, AttackError> {
        let (ns, nj) = (shape.n_states(), shape.n_joint());
        if shape.horizon() != 1 || means.horizon() != 1 || means.n_states() != ns || means.n_joint() != nj || means.n_players() != shape.n_players() {
            return Err(AttackError::InvalidInstance("period tables must cover one period of the shape".into()));
        }
        if counts.len() != ns * nj || rho.len() != ns * nj || target.len() != ns {
            return Err(AttackError::InvalidInstance("period counts, widths or target have the wrong length".into()));
        }
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(AttackError::InvalidInstance(format!("cell (s={}, a={}) is not covered", c / nj, c % nj)));
        }
        if target.iter().any(|&a| a >= nj) {
            return Err(AttackError::InvalidInstance("target joint action out of range".into()));
        }
        if !(iota.is_finite() && iota >= 0.0) {
            return Err(AttackError::InvalidMargin(iota));
        }
        if bound.is_finite() && means.values().iter().any(|r| r.abs() > bound + 1e-12) {
            return Err(AttackError::InvalidInstance("cell means must lie in [-b, b]".into()));
        }
        Ok(Self { shape, means, counts, rho, target, iota, bound })
    }

    /// Period `h` of a Markov instance.
    pub fn from_markov(inst: &MarkovAttackInstance, h: usize) -> Result<Self, AttackError> {
        let shape = inst.shape();
        let (ns, nj) = (shape.n_states(), shape.n_joint());
        let one = shape.reshaped(ns, 1)?;
        let cells = (0..ns).flat_map(|s| (0..nj).map(move |a| (s, a)));
        let counts = cells.clone().map(|(s, a)| inst.mle().counts.get(h, s, a)).collect();
        let rho = cells.map(|(s, a)| inst.widths().rho_r(h, s, a)).collect();
        let target = (0..ns).map(|s| inst.target().action(h, s)).collect();
        Self::new(one, inst.mle().rewards.period(h), counts, rho, target, inst.iota(), inst.bound())
    }

    pub fn from_bandit(inst: &BanditAttackInstance) -> Result<Self, AttackError> {
        let shape = inst.shape();
        let nj = shape.n_joint();
        let counts = (0..nj).map(|a| inst.mle().counts.get(0, 0, a)).collect();
        let rho = (0..nj).map(|a| inst.widths().rho_r(0, 0, a)).collect();
        Self::new(shape.clone(), inst.mle().rewards.clone(), counts, rho, vec![inst.target()], inst.iota(), inst.bound())
    }

    pub fn shape(&self) -> &GameShape {
        &self.shape
    }
    pub fn means(&self) -> &RewardTable<f64> {
        &self.means
    }
    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.shape.n_joint() + a]
    }
    pub fn rho(&self, s: usize, a: usize) -> f64 {
        self.rho[s * self.shape.n_joint() + a]
    }
    pub fn target(&self, s: usize) -> usize {
        self.target[s]
    }
    pub fn iota(&self) -> f64 {
        self.iota
    }
    pub fn bound(&self) -> f64 {
        self.bound
    }
    pub fn min_count(&self) -> u64 {
        self.counts.iter().copied().min().unwrap_or(0)
    }
    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Required separation `ρ(a) + ρ(t) + ι` between target `t` and deviation `a`.
    pub fn epsilon(&self, s: usize, target: usize, deviation: usize) -> f64 {
        self.rho(s, deviation) + self.rho(s, target) + self.iota
    }

    /// Every `(player, state, target joint action, deviations)` group.
    fn groups(&self) -> Vec<(usize, usize, usize, Vec<usize>)> {
        let shape = &self.shape;
        let mut out = Vec::new();
        for i in 0..shape.n_players() {
            let profiles = shape.opponent_profiles(i);
            for s in 0..shape.n_states() {
                let own = shape.player_action(self.target[s], i);
                for &rep in &profiles {
                    let t = shape.with_action(rep, i, own);
                    let devs = (0..shape.n_actions(i)).filter(|&x| x != own).map(|x| shape.with_action(rep, i, x)).collect();
                    out.push((i, s, t, devs));
                }
            }
        }
        out
    }
}

/// A per-`(player, state, opponent profile)` quantity. `target` is the
/// joint action with the player's target action and the opponents' profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupValue {
    pub player: usize,
    pub s: usize,
    pub target: usize,
    pub value: f64,
}

/// Smallest increase of the target cell that separates it by `ε` from
/// every deviation: `[max_{a_i ≠ π†_i}(R̂(a_i, a_-i) - R̂(π†_i, a_-i) + ε)]₊`.
///
/// Clamping each term before the max gives the same value, since `[·]₊`
/// is nondecreasing.
pub fn dominance_gaps(p: &PeriodInstance) -> Vec<GroupValue> {
    p.groups()
        .into_iter()
        .map(|(i, s, t, devs)| {
            let rt = p.means.get(i, 0, s, t);
            let m = devs.iter().map(|&o| p.means.get(i, 0, s, o) - rt + p.epsilon(s, t, o)).fold(f64::NEG_INFINITY, f64::max);
            GroupValue { player: i, s, target: t, value: m.max(0.0) }
        })
        .collect()
}

/// Required decrease of deviations lying above `b - ε`:
/// `Σ_{a_i ≠ π†_i, R̂ > b - ε} (R̂ - b + ε)`. Zero for an infinite bound.
pub fn overflow_terms(p: &PeriodInstance) -> Vec<GroupValue> {
    p.groups()
        .into_iter()
        .map(|(i, s, t, devs)| {
            let value = if p.bound.is_finite() {
                devs.iter().map(|&o| (p.means.get(i, 0, s, o) - p.bound + p.epsilon(s, t, o)).max(0.0)).sum()
            } else {
                0.0
            };
            GroupValue { player: i, s, target: t, value }
        })
        .collect()
}

/// Per-period total `Δ_h(ι)` with its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaBreakdown {
    /// `Σ d`.
    pub gaps: f64,
    /// `Σ δ`.
    pub overflow: f64,
    /// `Σ [d - (b - R̂_t)]₊`: the part of a gap the target cell cannot
    /// absorb below `b`, already paid for by the overflow of the same group.
    pub overlap: f64,
    /// `gaps + overflow - overlap`, the minimal mean-level L1 change.
    pub total: f64,
}

/// `Δ_h(ι)`: gaps plus overflow terms, with the part counted by both
/// removed so that the total equals the cost of [`atk_mechanism`].
pub fn delta_h(p: &PeriodInstance) -> DeltaBreakdown {
    let d = dominance_gaps(p);
    let o = overflow_terms(p);
    let gaps: f64 = d.iter().map(|g| g.value).sum();
    let overflow: f64 = o.iter().map(|g| g.value).sum();
    let overlap: f64 = if p.bound.is_finite() {
        d.iter().map(|g| (g.value - (p.bound - p.means.get(g.player, 0, g.s, g.target))).max(0.0)).sum()
    } else {
        0.0
    };
    DeltaBreakdown { gaps, overflow, overlap, total: gaps + overflow - overlap }
}

/// Closed-form minimal mean-level attack: the target cell rises by its gap
/// up to `b`, then each deviation above `R†_t - ε` is lowered to it.
///
/// Fails with `Infeasible` when a deviation would have to drop below `-b`.
pub fn atk_mechanism(p: &PeriodInstance) -> Result<RewardTable<f64>, AttackError> {
    let mut out = p.means.clone();
    let gaps = dominance_gaps(p);
    for ((i, s, t, devs), gap) in p.groups().into_iter().zip(gaps) {
        let rt = p.means.get(i, 0, s, t);
        let raised = (rt + gap.value).min(p.bound);
        out.set(i, 0, s, t, raised);
        for o in devs {
            let cap = raised - p.epsilon(s, t, o);
            if p.bound.is_finite() && cap < -p.bound - 1e-12 {
                return Err(AttackError::Infeasible);
            }
            let r = p.means.get(i, 0, s, o);
            if r > cap {
                out.set(i, 0, s, o, cap);
            }
        }
    }
    Ok(out)
}

/// Worst separation `R_t - ρ_t - (R_o + ρ_o) - ι` over all groups, with
/// interval endpoints clipped to `[-b, b]`.
pub fn clipped_separation(p: &PeriodInstance, means: &RewardTable<f64>) -> f64 {
    let b = p.bound;
    let mut worst = f64::INFINITY;
    for (i, s, t, devs) in p.groups() {
        let lo = (means.get(i, 0, s, t) - p.rho(s, t)).max(-b);
        for o in devs {
            let hi = (means.get(i, 0, s, o) + p.rho(s, o)).min(b);
            worst = worst.min(lo - hi - p.iota);
        }
    }
    worst
}

/// `Σ |R† - R̂|` over all cells of the period.
pub fn mean_level_cost(p: &PeriodInstance, poisoned: &RewardTable<f64>) -> f64 {
    p.means.values().iter().zip(poisoned.values()).map(|(a, b)| (a - b).abs()).sum()
}
