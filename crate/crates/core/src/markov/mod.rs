//! Poisoning of finite-horizon Markov-game datasets against
//! confidence-bound learners.
//!
//! The program carries lower and upper confidence bounds `Q̲`, `Q̄` on the
//! Q values of the target policy. Inner optimisation over the transition
//! confidence set is replaced by its LP dual, so any feasible dual choice
//! bounds the inner optimum from the safe side. After solving, the bounds
//! are recomputed exactly from the poisoned means and every separation
//! margin is checked against them.

mod bounds;
mod verify;

pub use bounds::{
    exact_q_bounds, feasibility_condition, l1_ball_argmax, l1_ball_argmin, l1_ball_max, l1_ball_min, required_counts, required_counts_for_width, FeasibilityReport,
    FeasibilityViolation, QBounds, MAX_COUNT,
};
pub use verify::{target_is_unique, verify_attack, SampleFailure, VerifyOptions, VerifyReport};

use serde::Serialize;

use crate::attack::{add_reward_layer, extract, solve_attack_lp, worst, AttackError, AttackOptions, AttackResult, LpTally, RewardLayer};
use crate::confidence::ConfidenceWidths;
use crate::game::{mle_game, separation_margins, GameShape, JointPolicy, MleEstimate, OfflineDataset, RewardTable, SeparationMargin};
use crate::lp::{Sense, VarId};
use crate::Lp;

/// Tolerance on recomputed margins and bound soundness.
pub const CERTIFICATE_TOL: f64 = 1e-6;

/// A Markov poisoning problem.
#[derive(Debug, Clone)]
pub struct MarkovAttackInstance {
    dataset: OfflineDataset,
    target: JointPolicy,
    widths: ConfidenceWidths,
    iota: f64,
    bound: f64,
    mle: MleEstimate,
}

impl MarkovAttackInstance {
    pub fn new(dataset: OfflineDataset, target: JointPolicy, widths: ConfidenceWidths, iota: f64, bound: f64) -> Result<Self, AttackError> {
        if !(iota.is_finite() && iota >= 0.0) {
            return Err(AttackError::InvalidMargin(iota));
        }
        target.check_shape(dataset.shape())?;
        widths.check_shape(dataset.shape())?;
        let mle = mle_game(&dataset, bound)?;
        Ok(Self { dataset, target, widths, iota, bound, mle })
    }

    pub fn dataset(&self) -> &OfflineDataset {
        &self.dataset
    }
    pub fn shape(&self) -> &GameShape {
        self.dataset.shape()
    }
    pub fn target(&self) -> &JointPolicy {
        &self.target
    }
    pub fn widths(&self) -> &ConfidenceWidths {
        &self.widths
    }
    pub fn iota(&self) -> f64 {
        self.iota
    }
    pub fn bound(&self) -> f64 {
        self.bound
    }
    pub fn mle(&self) -> &MleEstimate {
        &self.mle
    }

    pub fn with_iota(&self, iota: f64) -> Result<Self, AttackError> {
        if !(iota.is_finite() && iota >= 0.0) {
            return Err(AttackError::InvalidMargin(iota));
        }
        Ok(Self { iota, ..self.clone() })
    }

    pub fn with_widths(&self, widths: ConfidenceWidths) -> Result<Self, AttackError> {
        widths.check_shape(self.shape())?;
        Ok(Self { widths, ..self.clone() })
    }

    /// The same instance restricted to period `h` (a one-period instance).
    pub fn period(&self, h: usize) -> Result<Self, AttackError> {
        let ds = self.dataset.period(h);
        let target = self.target.period(h);
        let widths = self.widths.period(h);
        Self::new(ds, target, widths, self.iota, self.bound)
    }

    /// Feasibility condition of this instance.
    pub fn feasibility(&self) -> Result<FeasibilityReport, AttackError> {
        feasibility_condition(self.shape(), &self.widths, self.iota, self.bound)
    }
}

/// How the inner optimisation over transitions is dualised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualForm {
    /// Multipliers `(u, v, w)` of the per-coordinate box `|P - P̂| ≤ ρ^P`
    /// with `P ≥ 0`, `Σ P = 1`; a relaxation of the L1 ball.
    #[default]
    Box,
    /// Multipliers `(z, w, λ)` of the L1 ball intersected with the simplex.
    L1Ball,
}

/// Program options beyond the reward formulation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MarkovLpOptions {
    pub attack: AttackOptions,
    pub dual: DualForm,
    /// Replace the reward term of `Q̄` at the target joint action by `b`,
    /// a valid upper bound of `min(b, R† + ρ^R)`. With this the explicit
    /// `±b` attack is feasible whenever the feasibility condition holds;
    /// without it the reward intervals are unclipped throughout.
    pub clip_target_upper: bool,
}

#[derive(Debug, Clone, Copy)]
enum Dual {
    Box { u: usize, v: usize, w: VarId },
    L1 { z: usize, w: VarId, lambda: VarId },
}

/// Variable handles of a built Markov program.
#[derive(Debug, Clone)]
pub struct MarkovLpLayout {
    rewards: RewardLayer,
    q_lower: Vec<Option<VarId>>,
    q_upper: Vec<Option<VarId>>,
    dual_lower: Vec<Option<Dual>>,
    dual_upper: Vec<Option<Dual>>,
    /// Flat storage of dual vectors referenced by `Dual`.
    vectors: Vec<VarId>,
    clip_target_upper: bool,
    bound: f64,
    dims: (usize, usize, usize, usize),
}

impl MarkovLpLayout {
    fn idx(&self, i: usize, h: usize, s: usize, a: usize) -> usize {
        let (_, hz, ns, nj) = self.dims;
        ((i * hz + h) * ns + s) * nj + a
    }
}

fn rbar_index(dims: (usize, usize, usize, usize), i: usize, h: usize, s: usize, a: usize) -> usize {
    let (_, hz, ns, nj) = dims;
    ((i * hz + h) * ns + s) * nj + a
}

/// Builds the program and returns it with its variable layout.
pub fn build_markov_attack_lp(inst: &MarkovAttackInstance, opts: &MarkovLpOptions) -> Result<(Lp, MarkovLpLayout), AttackError> {
    let shape = inst.shape().clone();
    let (n, hz, ns, nj) = (shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint());
    let dims = (n, hz, ns, nj);
    let mut lp = Lp::new();
    let rewards = add_reward_layer(&mut lp, &inst.dataset, &inst.mle.rewards, &inst.mle.counts, inst.bound, opts.attack.formulation)?;
    let clip = opts.clip_target_upper && inst.bound.is_finite();
    let pi = &inst.target;
    let size = n * hz * ns * nj;
    let mut layout = MarkovLpLayout {
        rewards,
        q_lower: vec![None; size],
        q_upper: vec![None; size],
        dual_lower: vec![None; size],
        dual_upper: vec![None; size],
        vectors: Vec::new(),
        clip_target_upper: clip,
        bound: inst.bound,
        dims,
    };
    // Cells whose bounds enter a separation row or a continuation value.
    for i in 0..n {
        for h in 0..hz {
            for s in 0..ns {
                let target = pi.action(h, s);
                let own = shape.player_action(target, i);
                for a in 0..nj {
                    let idx = rbar_index(dims, i, h, s, a);
                    if shape.player_action(a, i) == own {
                        layout.q_lower[idx] = Some(lp.add_free_var(format!("QL[{i},{h},{s},{a}]")));
                    }
                    if shape.player_action(a, i) != own || a == target {
                        layout.q_upper[idx] = Some(lp.add_free_var(format!("QU[{i},{h},{s},{a}]")));
                    }
                }
            }
        }
    }
    for i in 0..n {
        for h in 0..hz {
            for s in 0..ns {
                for a in 0..nj {
                    let idx = rbar_index(dims, i, h, s, a);
                    let r = layout.rewards.rbar[idx];
                    let rho = inst.widths.rho_r(h, s, a);
                    for lower in [true, false] {
                        let Some(q) = (if lower { layout.q_lower[idx] } else { layout.q_upper[idx] }) else { continue };
                        let sign = if lower { -1.0 } else { 1.0 };
                        // lower: Q = R - ρ - inner;  upper: Q = R + ρ + inner.
                        let clip_here = !lower && clip && a == pi.action(h, s);
                        let (mut terms, rhs) = if clip_here {
                            (vec![(q, 1.0)], inst.bound)
                        } else {
                            (vec![(q, 1.0), (r, -1.0)], sign * rho)
                        };
                        if h + 1 < hz {
                            let dual = add_dual(&mut lp, &mut layout, inst, opts.dual, lower, i, h, s, a);
                            let (p_hat, rp) = (inst.mle.transitions.row(h, s, a), inst.widths.rho_p(h, s, a));
                            match dual {
                                Dual::Box { u, v, w } => {
                                    for s2 in 0..ns {
                                        terms.push((layout.vectors[u + s2], -sign * (p_hat[s2] + rp)));
                                        terms.push((layout.vectors[v + s2], -sign * (rp - p_hat[s2])));
                                    }
                                    terms.push((w, -sign));
                                }
                                Dual::L1 { z, w, lambda } => {
                                    for s2 in 0..ns {
                                        terms.push((layout.vectors[z + s2], -sign * p_hat[s2]));
                                    }
                                    terms.push((w, -sign));
                                    terms.push((lambda, -sign * rp));
                                }
                            }
                            if lower {
                                layout.dual_lower[idx] = Some(dual);
                            } else {
                                layout.dual_upper[idx] = Some(dual);
                            }
                        }
                        let name = if lower { "ql" } else { "qu" };
                        lp.add_constraint(format!("{name}[{i},{h},{s},{a}]"), terms, Sense::Eq, rhs);
                    }
                }
            }
        }
    }
    for i in 0..n {
        let profiles = shape.opponent_profiles(i);
        for h in 0..hz {
            for s in 0..ns {
                let own = shape.player_action(pi.action(h, s), i);
                for &rep in &profiles {
                    let t = shape.with_action(rep, i, own);
                    for ai in (0..shape.n_actions(i)).filter(|&x| x != own) {
                        let o = shape.with_action(rep, i, ai);
                        let ql = layout.q_lower[rbar_index(dims, i, h, s, t)].expect("target lower bound");
                        let qu = layout.q_upper[rbar_index(dims, i, h, s, o)].expect("deviation upper bound");
                        lp.add_constraint(format!("sep[{i},{h},{s},{t},{o}]"), vec![(ql, 1.0), (qu, -1.0)], Sense::Ge, inst.iota);
                    }
                }
            }
        }
    }
    Ok((lp, layout))
}

/// Adds the dual variables of one inner problem and their constraints
/// against the next-period bounds.
#[allow(clippy::too_many_arguments)]
fn add_dual(
    lp: &mut Lp,
    layout: &mut MarkovLpLayout,
    inst: &MarkovAttackInstance,
    form: DualForm,
    lower: bool,
    i: usize,
    h: usize,
    s: usize,
    a: usize,
) -> Dual {
    let ns = inst.shape().n_states();
    let tag = if lower { "l" } else { "u" };
    // Next-period bound at the target action, entering with sign `c`:
    // the lower side dualises max Σ P (-Q̲), the upper side max Σ P Q̄.
    let next: Vec<(VarId, f64)> = (0..ns)
        .map(|s2| {
            let idx = rbar_index(layout.dims, i, h + 1, s2, inst.target.action(h + 1, s2));
            if lower {
                (layout.q_lower[idx].expect("continuation lower bound"), 1.0)
            } else {
                (layout.q_upper[idx].expect("continuation upper bound"), -1.0)
            }
        })
        .collect();
    match form {
        DualForm::Box => {
            let u = layout.vectors.len();
            for s2 in 0..ns {
                let var = lp.add_var(format!("u{tag}[{i},{h},{s},{a},{s2}]"), 0.0, f64::INFINITY);
                layout.vectors.push(var);
            }
            let v = layout.vectors.len();
            for s2 in 0..ns {
                let var = lp.add_var(format!("v{tag}[{i},{h},{s},{a},{s2}]"), 0.0, f64::INFINITY);
                layout.vectors.push(var);
            }
            let w = lp.add_free_var(format!("w{tag}[{i},{h},{s},{a}]"));
            for (s2, &(q, c)) in next.iter().enumerate() {
                // u - v + w ≥ ±q
                lp.add_constraint(
                    format!("d{tag}[{i},{h},{s},{a},{s2}]"),
                    vec![(layout.vectors[u + s2], 1.0), (layout.vectors[v + s2], -1.0), (w, 1.0), (q, c)],
                    Sense::Ge,
                    0.0,
                );
            }
            Dual::Box { u, v, w }
        }
        DualForm::L1Ball => {
            let z = layout.vectors.len();
            for s2 in 0..ns {
                let var = lp.add_free_var(format!("z{tag}[{i},{h},{s},{a},{s2}]"));
                layout.vectors.push(var);
            }
            let w = lp.add_free_var(format!("w{tag}[{i},{h},{s},{a}]"));
            let lambda = lp.add_var(format!("lambda{tag}[{i},{h},{s},{a}]"), 0.0, f64::INFINITY);
            for (s2, &(q, c)) in next.iter().enumerate() {
                // z ≥ ±q - w,  z ≥ -λ,  λ ≥ ±q - w
                let zv = layout.vectors[z + s2];
                lp.add_constraint(format!("dz{tag}[{i},{h},{s},{a},{s2}]"), vec![(zv, 1.0), (w, 1.0), (q, c)], Sense::Ge, 0.0);
                lp.add_constraint(format!("dl{tag}[{i},{h},{s},{a},{s2}]"), vec![(zv, 1.0), (lambda, 1.0)], Sense::Ge, 0.0);
                lp.add_constraint(format!("dc{tag}[{i},{h},{s},{a},{s2}]"), vec![(lambda, 1.0), (w, 1.0), (q, c)], Sense::Ge, 0.0);
            }
            Dual::L1 { z, w, lambda }
        }
    }
}

/// A cell whose reward interval reaches past `±b`, where the unclipped
/// program is more conservative than the clipped confidence set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClipFlag {
    pub player: usize,
    pub h: usize,
    pub s: usize,
    pub a: usize,
    /// `true` when `R† + ρ^R > b`, `false` when `R† - ρ^R < -b`.
    pub upper: bool,
}

/// Certificate data of a solved Markov attack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovCertificate {
    /// Bounds held by the program; `NaN` for cells it does not model.
    pub lp_bounds: QBounds,
    /// Program bound on `min_P Σ P Q̲_{h+1}` (lower) and `max_P Σ P Q̄_{h+1}`
    /// (upper) per modelled cell with `h < H - 1`; `NaN` elsewhere.
    pub lp_inner: QBounds,
    /// Bounds recomputed exactly from the poisoned means, clipped in the
    /// same places as the program.
    pub exact: QBounds,
    /// Separation margins under `exact`.
    pub exact_margins: Vec<SeparationMargin>,
    /// Largest amount by which a program bound is looser than the exact one.
    pub max_lp_slack: f64,
    pub clip_flags: Vec<ClipFlag>,
    pub options: MarkovLpOptions,
}

/// Solved attack plus certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovAttackResult {
    pub attack: AttackResult,
    pub certificate: MarkovCertificate,
}

fn value_table(layout: &MarkovLpLayout, vars: &[Option<VarId>], values: &[f64]) -> RewardTable<f64> {
    let (n, hz, ns, nj) = layout.dims;
    let mut t = RewardTable::with_dims(n, hz, ns, nj, f64::NAN);
    for (x, v) in t.values_mut().iter_mut().zip(vars) {
        if let Some(v) = v {
            *x = values[v.0];
        }
    }
    t
}

/// Value of the inner bound implied by a dual choice.
fn dual_value(layout: &MarkovLpLayout, dual: Dual, p_hat: &[f64], rho_p: f64, values: &[f64]) -> f64 {
    match dual {
        Dual::Box { u, v, w } => {
            let mut acc = values[w.0];
            for (s2, p) in p_hat.iter().enumerate() {
                let (uu, vv) = (values[layout.vectors[u + s2].0], values[layout.vectors[v + s2].0]);
                acc += p * (uu - vv) + rho_p * (uu + vv);
            }
            acc
        }
        Dual::L1 { z, w, lambda } => {
            let mut acc = values[w.0] + rho_p * values[lambda.0];
            for (s2, p) in p_hat.iter().enumerate() {
                acc += p * values[layout.vectors[z + s2].0];
            }
            acc
        }
    }
}

fn inner_tables(inst: &MarkovAttackInstance, layout: &MarkovLpLayout, values: &[f64]) -> QBounds {
    let (n, hz, ns, nj) = layout.dims;
    let mut lo = RewardTable::with_dims(n, hz, ns, nj, f64::NAN);
    let mut hi = RewardTable::with_dims(n, hz, ns, nj, f64::NAN);
    for i in 0..n {
        for h in 0..hz.saturating_sub(1) {
            for s in 0..ns {
                for a in 0..nj {
                    let idx = layout.idx(i, h, s, a);
                    let (p, rp) = (inst.mle.transitions.row(h, s, a), inst.widths.rho_p(h, s, a));
                    if let Some(d) = layout.dual_lower[idx] {
                        lo.set(i, h, s, a, -dual_value(layout, d, p, rp, values));
                    }
                    if let Some(d) = layout.dual_upper[idx] {
                        hi.set(i, h, s, a, dual_value(layout, d, p, rp, values));
                    }
                }
            }
        }
    }
    QBounds { q_lower: lo, q_upper: hi }
}

/// Exact bounds on `means` clipped the same way as the program: the target
/// joint action's upper reward term at `b` when `clip_target_upper` is set.
pub fn program_exact_bounds(inst: &MarkovAttackInstance, means: &RewardTable<f64>, opts: &MarkovLpOptions) -> QBounds {
    let shape = inst.shape();
    if !(opts.clip_target_upper && inst.bound.is_finite()) {
        return exact_q_bounds(shape, means, &inst.mle.transitions, &inst.widths, &inst.target, None);
    }
    // Raising the target mean to b - ρ^R makes its unclipped upper term b.
    let mut shifted = means.clone();
    for i in 0..shape.n_players() {
        for h in 0..shape.horizon() {
            for s in 0..shape.n_states() {
                let a = inst.target.action(h, s);
                shifted.set(i, h, s, a, inst.bound - inst.widths.rho_r(h, s, a));
            }
        }
    }
    let lower = exact_q_bounds(shape, means, &inst.mle.transitions, &inst.widths, &inst.target, None).q_lower;
    let upper = exact_q_bounds(shape, &shifted, &inst.mle.transitions, &inst.widths, &inst.target, None).q_upper;
    QBounds { q_lower: lower, q_upper: upper }
}

/// Cells whose unclipped interval leaves `[-b, b]`.
pub fn clip_flags(inst: &MarkovAttackInstance, means: &RewardTable<f64>) -> Vec<ClipFlag> {
    let shape = inst.shape();
    let b = inst.bound;
    let mut out = Vec::new();
    if !b.is_finite() {
        return out;
    }
    for player in 0..shape.n_players() {
        for h in 0..shape.horizon() {
            for s in 0..shape.n_states() {
                for a in 0..shape.n_joint() {
                    let (r, w) = (means.get(player, h, s, a), inst.widths.rho_r(h, s, a));
                    if r + w > b + 1e-12 {
                        out.push(ClipFlag { player, h, s, a, upper: true });
                    }
                    if r - w < -b - 1e-12 {
                        out.push(ClipFlag { player, h, s, a, upper: false });
                    }
                }
            }
        }
    }
    out
}

/// Solves the Markov attack and certifies it: separation margins under
/// exact bounds must reach `ι - 1e-6`, and program bounds must be no
/// tighter than the exact ones.
pub fn solve_markov_attack(inst: &MarkovAttackInstance, opts: &MarkovLpOptions) -> Result<MarkovAttackResult, AttackError> {
    let (lp, layout) = build_markov_attack_lp(inst, opts)?;
    let sol = solve_attack_lp(&lp, &layout.rewards, &inst.mle.counts, opts.attack.tie_break)?;
    let ex = extract(&layout.rewards, &sol, &inst.dataset, inst.bound)?;
    let shape = inst.shape();
    let exact = program_exact_bounds(inst, &ex.poisoned_mle, opts);
    let exact_margins = separation_margins(shape, &inst.target, &exact.q_lower, &exact.q_upper);
    let worst_margin = worst(&exact_margins);
    if worst_margin < inst.iota - CERTIFICATE_TOL {
        return Err(AttackError::Certificate(format!("exact worst margin {worst_margin} below ι = {}", inst.iota)));
    }
    let lp_bounds = QBounds { q_lower: value_table(&layout, &layout.q_lower, &sol.values), q_upper: value_table(&layout, &layout.q_upper, &sol.values) };
    let mut max_lp_slack: f64 = 0.0;
    for (k, (&l, &e)) in lp_bounds.q_lower.values().iter().zip(exact.q_lower.values()).enumerate() {
        if !l.is_nan() {
            if l > e + CERTIFICATE_TOL {
                return Err(AttackError::Certificate(format!("program lower bound {l} exceeds exact {e} at entry {k}")));
            }
            max_lp_slack = max_lp_slack.max(e - l);
        }
    }
    for (k, (&u, &e)) in lp_bounds.q_upper.values().iter().zip(exact.q_upper.values()).enumerate() {
        if !u.is_nan() {
            if u < e - CERTIFICATE_TOL {
                return Err(AttackError::Certificate(format!("program upper bound {u} below exact {e} at entry {k}")));
            }
            max_lp_slack = max_lp_slack.max(u - e);
        }
    }
    let lp_inner = inner_tables(inst, &layout, &sol.values);
    let clip_flags = clip_flags(inst, &ex.poisoned_mle);
    let attack = AttackResult {
        status: sol.status,
        poisoned: ex.poisoned,
        poisoned_mle: ex.poisoned_mle,
        cost: ex.cost,
        lp_objective: sol.objective_value,
        margins: exact_margins.clone(),
        worst_margin,
        formulation: opts.attack.formulation,
        tally: LpTally::of(&lp),
        pivots: sol.pivots,
    };
    let certificate = MarkovCertificate { lp_bounds, lp_inner, exact, exact_margins, max_lp_slack, clip_flags, options: *opts };
    Ok(MarkovAttackResult { attack, certificate })
}

/// Rewards `+b` where a learner plays its target action and `-b` elsewhere.
pub fn explicit_attack(inst: &MarkovAttackInstance) -> Result<OfflineDataset, AttackError> {
    let b = inst.bound;
    if !b.is_finite() {
        return Err(AttackError::InvalidInstance("the explicit attack needs a finite bound".into()));
    }
    let ds = &inst.dataset;
    let shape = ds.shape();
    Ok(ds.with_rewards(|k, h, i| {
        let s = ds.step(k, h).s;
        let own = shape.player_action(inst.target.action(h, s), i);
        if ds.step(k, h).a[i] == own {
            b
        } else {
            -b
        }
    }))
}

/// Full variable assignment of the program for a poisoned dataset with
/// the same episodes, using the dual choice that bounds each inner problem
/// by the extreme next-period value. Used to check that a given attack is
/// a feasible point of the program.
pub fn assignment_for(inst: &MarkovAttackInstance, lp: &Lp, layout: &MarkovLpLayout, poisoned: &OfflineDataset) -> Result<Vec<f64>, AttackError> {
    let (n, hz, ns, nj) = layout.dims;
    let mut x = vec![0.0; lp.n_vars()];
    let means = mle_game(poisoned, inst.bound)?.rewards;
    // Reward layer: per-episode variables when present, then slacks.
    for v in lp.variables().iter().enumerate() {
        let (j, var) = v;
        if let Some(rest) = var.name.strip_prefix("r[") {
            let idx: Vec<usize> = rest.trim_end_matches(']').split(',').map(|t| t.parse().unwrap()).collect();
            x[j] = poisoned.reward(idx[0], idx[1], idx[2]);
        }
    }
    for (j, var) in lp.variables().iter().enumerate() {
        if let Some(rest) = var.name.strip_prefix("t[") {
            let idx: Vec<usize> = rest.trim_end_matches(']').split(',').map(|t| t.parse().unwrap()).collect();
            x[j] = if idx.len() == 3 {
                (poisoned.reward(idx[0], idx[1], idx[2]) - inst.dataset.reward(idx[0], idx[1], idx[2])).abs()
            } else {
                (means.get(idx[0], idx[1], idx[2], idx[3]) - inst.mle.rewards.get(idx[0], idx[1], idx[2], idx[3])).abs()
            };
        }
    }
    for (idx, v) in layout.rewards.rbar.iter().enumerate() {
        x[v.0] = means.values()[idx];
    }
    for i in 0..n {
        for h in (0..hz).rev() {
            for s in 0..ns {
                for a in 0..nj {
                    let idx = layout.idx(i, h, s, a);
                    let (r, rho) = (means.get(i, h, s, a), inst.widths.rho_r(h, s, a));
                    for lower in [true, false] {
                        let Some(q) = (if lower { layout.q_lower[idx] } else { layout.q_upper[idx] }) else { continue };
                        let clip_here = !lower && layout.clip_target_upper && a == inst.target.action(h, s);
                        let mut value = if clip_here { layout.bound } else if lower { r - rho } else { r + rho };
                        let dual = if lower { layout.dual_lower[idx] } else { layout.dual_upper[idx] };
                        if let Some(d) = dual {
                            // Worst next-period value, attained with w alone.
                            let next: Vec<f64> = (0..ns)
                                .map(|s2| {
                                    let nidx = layout.idx(i, h + 1, s2, inst.target.action(h + 1, s2));
                                    let var = if lower { layout.q_lower[nidx] } else { layout.q_upper[nidx] };
                                    x[var.expect("continuation bound").0]
                                })
                                .collect();
                            let w = if lower {
                                next.iter().map(|q| -q).fold(f64::NEG_INFINITY, f64::max)
                            } else {
                                next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                            };
                            match d {
                                Dual::Box { w: wv, .. } => x[wv.0] = w,
                                Dual::L1 { w: wv, .. } => x[wv.0] = w,
                            }
                            value += if lower { -w } else { w };
                        }
                        x[q.0] = value;
                    }
                }
            }
        }
    }
    Ok(x)
}
