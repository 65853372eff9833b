//! Pieces shared by the bandit and Markov poisoning programs: the reward
//! variables with their L1 cost, solution extraction and the result type.

use serde::Serialize;
use thiserror::Error;

use crate::confidence::ConfidenceError;
use crate::cost::lift_mle_to_rewards;
use crate::game::{mle_game, GameError, OfflineDataset, RewardTable, SeparationMargin, VisitCounts};
use crate::lp::{solve, LpError, LpSolution, LpStatus, Sense, VarId};
use crate::Lp;

/// Failures of attack construction, solving or certification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("invalid attack instance: {0}")]
    InvalidInstance(String),
    #[error("the attack program is infeasible")]
    Infeasible,
    #[error("the attack program is unbounded")]
    Unbounded,
    #[error("margin must be finite and nonnegative, got {0}")]
    InvalidMargin(f64),
    #[error("required count overflows: {0}")]
    CountOverflow(f64),
    #[error("certificate check failed: {0}")]
    Certificate(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
}

/// Which model of the learners the attack targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerModel {
    /// Learners act on the point estimate.
    Mle,
    /// Learners consider every game in the confidence set.
    ConfidenceBound,
}

/// How poisoned rewards enter the program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// One variable and one cost slack per recorded reward.
    #[default]
    PerEpisode,
    /// One variable per cell mean with cost `N |R† - R̂|`; per-episode
    /// rewards are recovered by a common clipped shift within each cell.
    /// Needs every recorded reward inside `[-b, b]`.
    Aggregated,
}

/// How to choose among several minimal-cost attacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Whatever vertex the solver stops at.
    #[default]
    SolverVertex,
    /// A second solve maximising `Σ N_h(s,a) R†` over the minimal-cost
    /// face, so rewards are raised rather than lowered where cost allows.
    HighestMeans,
}

/// Formulation and tie-breaking of an attack solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct AttackOptions {
    pub formulation: Formulation,
    pub tie_break: TieBreak,
}

impl AttackOptions {
    pub fn new(formulation: Formulation) -> Self {
        Self { formulation, tie_break: TieBreak::SolverVertex }
    }
    pub fn with_tie_break(self, tie_break: TieBreak) -> Self {
        Self { tie_break, ..self }
    }
}

/// Size of a built program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LpTally {
    pub variables: usize,
    pub constraints: usize,
    pub equality_rows: usize,
    pub inequality_rows: usize,
    /// Variables with at least one finite bound other than `x ≥ 0`.
    pub boxed_variables: usize,
}

impl LpTally {
    pub fn of(model: &Lp) -> Self {
        let eq = model.constraints().iter().filter(|c| c.sense == Sense::Eq).count();
        let boxed = model.variables().iter().filter(|v| v.upper.is_finite() || (v.lower.is_finite() && v.lower != 0.0)).count();
        Self {
            variables: model.n_vars(),
            constraints: model.n_constraints(),
            equality_rows: eq,
            inequality_rows: model.n_constraints() - eq,
            boxed_variables: boxed,
        }
    }
}

/// A solved attack with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub status: LpStatus,
    /// The dataset with every reward replaced by its poisoned value.
    pub poisoned: OfflineDataset,
    /// Cell means of the poisoned rewards.
    pub poisoned_mle: RewardTable<f64>,
    /// `‖r⁰ - r†‖₁`, recomputed from the rewards.
    pub cost: f64,
    pub lp_objective: f64,
    /// Separation margins recomputed from the poisoned means.
    pub margins: Vec<SeparationMargin>,
    /// Smallest entry of `margins` (`+inf` when there is none).
    pub worst_margin: f64,
    pub formulation: Formulation,
    pub tally: LpTally,
    pub pivots: usize,
}

/// L1 distance between the rewards of two datasets with the same episodes.
pub fn reward_l1(a: &OfflineDataset, b: &OfflineDataset) -> f64 {
    a.episodes()
        .iter()
        .zip(b.episodes())
        .flat_map(|(x, y)| x.steps.iter().zip(&y.steps))
        .flat_map(|(x, y)| x.r.iter().zip(&y.r))
        .map(|(x, y)| (x - y).abs())
        .sum()
}

/// Reward variables of an attack program.
#[derive(Debug, Clone)]
pub(crate) struct RewardLayer {
    formulation: Formulation,
    /// R† per `(i, h, s, a)` in reward-table order.
    pub rbar: Vec<VarId>,
    /// r† per `(k, h, i)`; empty for the aggregated form.
    episode: Vec<VarId>,
    dims: (usize, usize, usize, usize),
}

impl RewardLayer {
    pub fn rbar(&self, i: usize, h: usize, s: usize, a: usize) -> VarId {
        let (_, hz, ns, nj) = self.dims;
        self.rbar[((i * hz + h) * ns + s) * nj + a]
    }
}

/// Adds r†, the cost slacks t and the cell means R† with their defining
/// equalities. `mle` and `counts` describe the clean dataset.
pub(crate) fn add_reward_layer(
    model: &mut Lp,
    dataset: &OfflineDataset,
    mle: &RewardTable<f64>,
    counts: &VisitCounts,
    bound: f64,
    formulation: Formulation,
) -> Result<RewardLayer, AttackError> {
    let shape = dataset.shape();
    let (n, hz, ns, nj) = (shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint());
    let (lo, hi) = (-bound, bound);
    let mut rbar = Vec::with_capacity(n * hz * ns * nj);
    let mut episode = Vec::new();
    match formulation {
        Formulation::PerEpisode => {
            for i in 0..n {
                for h in 0..hz {
                    for s in 0..ns {
                        for a in 0..nj {
                            rbar.push(model.add_var(format!("R[{i},{h},{s},{a}]"), f64::NEG_INFINITY, f64::INFINITY));
                        }
                    }
                }
            }
            episode.reserve(dataset.n_episodes() * hz * n);
            let mut cell_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); rbar.len()];
            for k in 0..dataset.n_episodes() {
                for h in 0..hz {
                    let (s, a) = (dataset.step(k, h).s, dataset.joint(k, h));
                    for i in 0..n {
                        let r0 = dataset.reward(k, h, i);
                        let r = model.add_var(format!("r[{k},{h},{i}]"), lo, hi);
                        let t = model.add_var(format!("t[{k},{h},{i}]"), 0.0, f64::INFINITY);
                        model.set_objective(t, 1.0);
                        model.add_constraint(format!("up[{k},{h},{i}]"), vec![(t, 1.0), (r, -1.0)], Sense::Ge, -r0);
                        model.add_constraint(format!("dn[{k},{h},{i}]"), vec![(t, 1.0), (r, 1.0)], Sense::Ge, r0);
                        cell_terms[((i * hz + h) * ns + s) * nj + a].push((r, 1.0));
                        episode.push(r);
                    }
                }
            }
            for (idx, mut terms) in cell_terms.into_iter().enumerate() {
                let (h, s, a) = ((idx / (nj * ns)) % hz, (idx / nj) % ns, idx % nj);
                let cnt = counts.get(h, s, a) as f64;
                terms.push((rbar[idx], -cnt));
                model.add_constraint(format!("mle[{idx}]"), terms, Sense::Eq, 0.0);
            }
        }
        Formulation::Aggregated => {
            if bound.is_finite() && dataset.max_abs_reward() > bound {
                return Err(AttackError::InvalidInstance("aggregated form needs every recorded reward inside [-b, b]".into()));
            }
            for i in 0..n {
                for h in 0..hz {
                    for s in 0..ns {
                        for a in 0..nj {
                            let r = model.add_var(format!("R[{i},{h},{s},{a}]"), lo, hi);
                            let t = model.add_var(format!("t[{i},{h},{s},{a}]"), 0.0, f64::INFINITY);
                            let r_hat = mle.get(i, h, s, a);
                            model.set_objective(t, counts.get(h, s, a) as f64);
                            model.add_constraint(format!("up[{i},{h},{s},{a}]"), vec![(t, 1.0), (r, -1.0)], Sense::Ge, -r_hat);
                            model.add_constraint(format!("dn[{i},{h},{s},{a}]"), vec![(t, 1.0), (r, 1.0)], Sense::Ge, r_hat);
                            rbar.push(r);
                        }
                    }
                }
            }
        }
    }
    Ok(RewardLayer { formulation, rbar, episode, dims: (n, hz, ns, nj) })
}

/// Poisoned dataset, its cell means and the recomputed cost.
pub(crate) struct Extracted {
    pub poisoned: OfflineDataset,
    pub poisoned_mle: RewardTable<f64>,
    pub cost: f64,
}

fn check_status(sol: &LpSolution<f64>) -> Result<(), AttackError> {
    match sol.status {
        LpStatus::Optimal => Ok(()),
        LpStatus::Infeasible => Err(AttackError::Infeasible),
        LpStatus::Unbounded => Err(AttackError::Unbounded),
    }
}

pub(crate) fn extract(layer: &RewardLayer, sol: &LpSolution<f64>, dataset: &OfflineDataset, bound: f64) -> Result<Extracted, AttackError> {
    let clamp = |x: f64| if bound.is_finite() { x.clamp(-bound, bound) } else { x };
    let poisoned = match layer.formulation {
        Formulation::PerEpisode => {
            let (n, hz, _, _) = layer.dims;
            dataset.with_rewards(|k, h, i| clamp(sol.values[layer.episode[(k * hz + h) * n + i].0]))
        }
        Formulation::Aggregated => {
            let (n, hz, ns, nj) = layer.dims;
            let mut target = RewardTable::with_dims(n, hz, ns, nj, 0.0);
            for (v, x) in layer.rbar.iter().zip(target.values_mut()) {
                *x = clamp(sol.values[v.0]);
            }
            lift_mle_to_rewards(dataset, &target, bound)?
        }
    };
    let poisoned_mle = mle_game(&poisoned, if bound.is_finite() { bound } else { f64::INFINITY })?.rewards;
    let cost = reward_l1(dataset, &poisoned);
    Ok(Extracted { poisoned, poisoned_mle, cost })
}

/// Solves `lp`, then applies the tie-break on the optimal face.
pub(crate) fn solve_attack_lp(lp: &Lp, layer: &RewardLayer, counts: &VisitCounts, tie_break: TieBreak) -> Result<LpSolution<f64>, AttackError> {
    let first = solve(lp)?;
    check_status(&first)?;
    if tie_break == TieBreak::SolverVertex {
        return Ok(first);
    }
    let mut second = lp.clone();
    let cost_terms: Vec<(VarId, f64)> = lp.objective().iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, &c)| (VarId(j), c)).collect();
    let slack = 1e-9 * first.objective_value.abs().max(1.0);
    second.add_constraint("cost_cap", cost_terms, Sense::Le, first.objective_value + slack);
    for j in 0..second.n_vars() {
        second.set_objective(VarId(j), 0.0);
    }
    let (_, hz, ns, nj) = layer.dims;
    for (idx, v) in layer.rbar.iter().enumerate() {
        let (h, s, a) = ((idx / (nj * ns)) % hz, (idx / nj) % ns, idx % nj);
        second.set_objective(*v, -(counts.get(h, s, a) as f64));
    }
    let mut sol = solve(&second)?;
    check_status(&sol)?;
    sol.objective_value = lp.evaluate_objective(&sol.values);
    sol.pivots += first.pivots;
    sol.values.truncate(lp.n_vars());
    sol.duals.truncate(lp.n_constraints());
    sol.reduced_costs.truncate(lp.n_vars());
    Ok(sol)
}

/// Smallest margin, or `+inf` for an empty list.
pub(crate) fn worst(margins: &[SeparationMargin]) -> f64 {
    margins.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min)
}
