//! Offline pessimistic/optimistic value iteration learners and the check
//! that their bonuses are compatible with the attack's confidence sets.

mod ne;

pub use ne::{ne_oracle, NeOutcome, NeStatus, NE_TOL};

use serde::Serialize;
use thiserror::Error;

use crate::confidence::ConfidenceWidths;
use crate::game::{mle_game, GameError, GameShape, JointPolicy, MarkovGame, MleEstimate, OfflineDataset, RewardTable, VisitCounts};
use crate::markov::{l1_ball_argmax, l1_ball_argmin};

/// Learner failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("no pure equilibrium at period {h}, state {s}")]
    NoEquilibrium { h: usize, s: usize },
    #[error("invalid bonus: {0}")]
    InvalidBonus(String),
    #[error("bonus is not compatible with the confidence widths (worst slack {0})")]
    Incompatible(f64),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Sign convention of the bonus `Γ`, subtracted from the empirical Q.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusKind {
    /// `Γ ≥ 0`: lower confidence values.
    Pessimistic,
    /// `Γ ≤ 0`: upper confidence values.
    Optimistic,
    Zero,
}

/// A bonus table: the count-based formula or an explicit table.
#[derive(Debug, Clone, PartialEq)]
pub enum BonusSpec {
    /// `±H √(β / (N + 1))` with `β = c ln(|S| |A| H K / δ)`.
    Formula { kind: BonusKind, c: f64, delta: f64 },
    /// `Γ_{i,h}(s, a)` given directly.
    Custom(RewardTable<f64>),
}

/// `±H √(β / (N_h(s, a) + 1))` with `β = c ln(|S| |A| H K / δ)`, `|A|` the
/// joint action count and `K` the number of episodes. The same value is
/// used for every player.
pub fn bonus_gamma(shape: &GameShape, counts: &VisitCounts, kind: BonusKind, c: f64, delta: f64) -> Result<RewardTable<f64>, LearnerError> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(LearnerError::InvalidBonus(format!("constant must be finite and nonnegative, got {c}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LearnerError::InvalidBonus(format!("delta must lie in (0, 1), got {delta}")));
    }
    let sign = match kind {
        BonusKind::Pessimistic => 1.0,
        BonusKind::Optimistic => -1.0,
        BonusKind::Zero => return Ok(RewardTable::filled(shape, 0.0)),
    };
    let hz = shape.horizon() as f64;
    let beta = c * (shape.n_states() as f64 * shape.n_joint() as f64 * hz * counts.period_total(0) as f64 / delta).ln();
    Ok(RewardTable::from_fn(shape, |_, h, s, a| sign * hz * (beta / (counts.get(h, s, a) as f64 + 1.0)).sqrt()))
}

impl BonusSpec {
    pub fn table(&self, shape: &GameShape, counts: &VisitCounts) -> Result<RewardTable<f64>, LearnerError> {
        match self {
            BonusSpec::Formula { kind, c, delta } => bonus_gamma(shape, counts, *kind, *c, *delta),
            BonusSpec::Custom(t) => {
                if t.n_players() != shape.n_players() || t.horizon() != shape.horizon() || t.n_states() != shape.n_states() || t.n_joint() != shape.n_joint() {
                    return Err(LearnerError::InvalidBonus("custom table does not match the shape".into()));
                }
                if t.values().iter().any(|x| !x.is_finite()) {
                    return Err(LearnerError::InvalidBonus("custom table has non-finite entries".into()));
                }
                Ok(t.clone())
            }
        }
    }
}

/// Largest formula constant `c` with `|Γ| ≤ ρ^R` in every cell.
pub fn largest_compatible_constant(shape: &GameShape, counts: &VisitCounts, widths: &ConfidenceWidths, delta: f64) -> f64 {
    let hz = shape.horizon() as f64;
    let log = (shape.n_states() as f64 * shape.n_joint() as f64 * hz * counts.period_total(0) as f64 / delta).ln();
    let mut best = f64::INFINITY;
    for h in 0..shape.horizon() {
        for s in 0..shape.n_states() {
            for a in 0..shape.n_joint() {
                let rho = widths.rho_r(h, s, a);
                best = best.min(rho * rho * (counts.get(h, s, a) as f64 + 1.0) / (hz * hz * log));
            }
        }
    }
    best
}

/// Values indexed by `(player, period, state)`.
pub type StateValues = Vec<Vec<Vec<f64>>>;

/// Result of a value-iteration run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnerOutput {
    /// Joint action table `[h][s]`.
    pub policy: Vec<Vec<usize>>,
    pub q_lower: RewardTable<f64>,
    pub v_lower: StateValues,
    pub ne_status: Vec<Vec<NeStatus>>,
    /// Pure equilibria found per `(h, s)`.
    pub pure_equilibria: Vec<Vec<Vec<usize>>>,
}

impl LearnerOutput {
    pub fn joint_policy(&self, shape: &GameShape) -> JointPolicy {
        JointPolicy::from_joint_table(shape, &self.policy).expect("learner policy matches its shape")
    }

    /// Whether every `(h, s)` was solved by strict dominance.
    pub fn all_strict(&self) -> bool {
        self.ne_status.iter().flatten().all(|s| *s == NeStatus::StrictDse)
    }
}

/// Backward value iteration on the empirical model: `Q̃ = R̂ + ⟨P̂, V̲_{h+1}⟩`,
/// `Q̲ = Q̃ - Γ`, a pure equilibrium of `Q̲_h(s, ·)` per state, and
/// `V̲_h(s) = Q̲_h(s, π_h(s))`.
pub fn povi(dataset: &OfflineDataset, gamma: &RewardTable<f64>, bound: f64) -> Result<LearnerOutput, LearnerError> {
    let shape = dataset.shape();
    let mle = mle_game(dataset, bound)?;
    let (n, hz, ns, nj) = (shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint());
    if gamma.n_players() != n || gamma.horizon() != hz || gamma.n_states() != ns || gamma.n_joint() != nj {
        return Err(LearnerError::InvalidBonus("bonus table does not match the shape".into()));
    }
    let mut q = RewardTable::filled(shape, 0.0);
    let mut v = vec![vec![vec![0.0; ns]; hz]; n];
    let mut policy = vec![vec![0; ns]; hz];
    let mut status = vec![vec![NeStatus::NoneFound; ns]; hz];
    let mut equilibria = vec![vec![Vec::new(); ns]; hz];
    for h in (0..hz).rev() {
        for s in 0..ns {
            for i in 0..n {
                for a in 0..nj {
                    let cont: f64 = if h + 1 < hz { mle.transitions.row(h, s, a).iter().zip(&v[i][h + 1]).map(|(p, x)| p * x).sum() } else { 0.0 };
                    q.set(i, h, s, a, mle.rewards.get(i, h, s, a) + cont - gamma.get(i, h, s, a));
                }
            }
            let rows: Vec<&[f64]> = (0..n).map(|i| q.row(i, h, s)).collect();
            let out = ne_oracle(shape, &rows);
            let a = out.action.ok_or(LearnerError::NoEquilibrium { h, s })?;
            for (i, vi) in v.iter_mut().enumerate() {
                vi[h][s] = q.get(i, h, s, a);
            }
            policy[h][s] = a;
            status[h][s] = out.status;
            equilibria[h][s] = out.pure_equilibria;
        }
    }
    Ok(LearnerOutput { policy, q_lower: q, v_lower: v, ne_status: status, pure_equilibria: equilibria })
}

/// Per-cell evaluation of `|Γ| ≤ ρ^R + inner`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompatibilityCell {
    pub player: usize,
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub gamma: f64,
    pub rho_r: f64,
    /// Largest shift of `⟨P, V̲_{h+1}⟩` from `⟨P̂, V̲_{h+1}⟩` in the direction
    /// of `-Γ` over transitions in the confidence set.
    pub inner: f64,
    /// `ρ^R + inner - |Γ|`.
    pub slack: f64,
}

/// Outcome of the compatibility check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub holds: bool,
    pub min_slack: f64,
    pub cells: Vec<CompatibilityCell>,
}

fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Checks that every bonus can be explained by a game in the confidence
/// set: `|Γ| ≤ ρ^R + max ⟨P̂ - P, V̲_{h+1}⟩ · sign(Γ)` with `P` a distribution
/// within L1 distance `ρ^P` of `P̂`. The inner term is computed exactly;
/// it is zero in the last period and for constant `V̲`.
pub fn check_bonus_compatibility(mle: &MleEstimate, gamma: &RewardTable<f64>, widths: &ConfidenceWidths, v_lower: &StateValues) -> CompatibilityReport {
    let (n, hz, ns, nj) = (gamma.n_players(), gamma.horizon(), gamma.n_states(), gamma.n_joint());
    let mut cells = Vec::with_capacity(n * hz * ns * nj);
    for i in 0..n {
        for h in 0..hz {
            for s in 0..ns {
                for a in 0..nj {
                    let g = gamma.get(i, h, s, a);
                    let rho_r = widths.rho_r(h, s, a);
                    let inner = if h + 1 < hz {
                        let (p, next, rp) = (mle.transitions.row(h, s, a), &v_lower[i][h + 1], widths.rho_p(h, s, a));
                        let base = dot(p, next);
                        if g >= 0.0 {
                            base - dot(&l1_ball_argmin(p, next, rp), next)
                        } else {
                            dot(&l1_ball_argmax(p, next, rp), next) - base
                        }
                    } else {
                        0.0
                    };
                    cells.push(CompatibilityCell { player: i, h, s, a, gamma: g, rho_r, inner, slack: rho_r + inner - g.abs() });
                }
            }
        }
    }
    let min_slack = cells.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min);
    CompatibilityReport { holds: min_slack >= -1e-12, min_slack, cells }
}

/// One game per player in the confidence set whose exact Q values under
/// the learner's policy equal that player's `Q̲`.
///
/// For each cell the bonus is split into a transition shift
/// `⟨P̂ - P, V̲_{h+1}⟩` (as much as the set allows) and a reward shift
/// `R = R̂ - u`. Other players' rewards are left at `R̂`.
pub fn compatibility_witness(
    mle: &MleEstimate,
    shape: &GameShape,
    gamma: &RewardTable<f64>,
    widths: &ConfidenceWidths,
    out: &LearnerOutput,
) -> Result<Vec<MarkovGame<f64>>, LearnerError> {
    let report = check_bonus_compatibility(mle, gamma, widths, &out.v_lower);
    if !report.holds {
        return Err(LearnerError::Incompatible(report.min_slack));
    }
    let (n, hz, ns, nj) = (shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint());
    let mut games = Vec::with_capacity(n);
    for i in 0..n {
        let mut rewards = mle.rewards.clone();
        let mut transitions = mle.transitions.clone();
        for h in 0..hz {
            for s in 0..ns {
                for a in 0..nj {
                    let g = gamma.get(i, h, s, a);
                    let shift = if h + 1 < hz {
                        let (p, next, rp) = (mle.transitions.row(h, s, a), &out.v_lower[i][h + 1], widths.rho_p(h, s, a));
                        let base = dot(p, next);
                        let extreme = if g >= 0.0 { l1_ball_argmin(p, next, rp) } else { l1_ball_argmax(p, next, rp) };
                        let reach = (dot(&extreme, next) - base).abs();
                        let used = g.abs().min(reach);
                        let lambda = if reach > 0.0 { used / reach } else { 0.0 };
                        let row: Vec<f64> = p.iter().zip(&extreme).map(|(x, y)| x + lambda * (y - x)).collect();
                        transitions.row_mut(h, s, a).copy_from_slice(&row);
                        used * g.signum()
                    } else {
                        0.0
                    };
                    rewards.set(i, h, s, a, mle.rewards.get(i, h, s, a) - (g - shift));
                }
            }
        }
        let bound = rewards.values().iter().fold(mle.bound, |m, r| m.max(r.abs()));
        games.push(MarkovGame::new(shape.clone(), transitions, rewards, mle.initial_dist.clone(), bound)?);
    }
    Ok(games)
}

#[cfg(test)]
mod tests;
