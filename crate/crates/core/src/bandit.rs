//! Poisoning of one-state, one-period datasets (normal-form games).
//!
//! The learner either trusts the cell means (`Mle`) or reasons over the
//! reward confidence intervals (`ConfidenceBound`). In both cases the
//! target joint action must become an ι-strict dominant strategy
//! equilibrium at minimal L1 cost.

use serde::Serialize;

use crate::attack::{
    add_reward_layer, extract, solve_attack_lp, worst, AttackError, AttackOptions, AttackResult, Formulation, LearnerModel, LpTally,
    RewardLayer,
};
use crate::confidence::{hoeffding_widths, ConfidenceWidths, HoeffdingConfig, WidthMode};
use crate::game::{
    mle_game, separation_margins, visit_counts, Episode, GameShape, JointPolicy, MleEstimate, OfflineDataset, RewardTable,
    Step,
};
use crate::lp::Sense;
use crate::Lp;

/// Tolerance on recomputed certificate margins.
pub const CERTIFICATE_TOL: f64 = 1e-6;

/// A normal-form poisoning problem.
#[derive(Debug, Clone)]
pub struct BanditAttackInstance {
    dataset: OfflineDataset,
    target: usize,
    widths: ConfidenceWidths,
    iota: f64,
    bound: f64,
    mle: MleEstimate,
}

impl BanditAttackInstance {
    /// `target` is the joint action tuple to install.
    pub fn new(dataset: OfflineDataset, target: &[usize], widths: ConfidenceWidths, iota: f64, bound: f64) -> Result<Self, AttackError> {
        let shape = dataset.shape();
        if shape.n_states() != 1 || shape.horizon() != 1 {
            return Err(AttackError::InvalidInstance("bandit instances need one state and one period".into()));
        }
        if !(iota.is_finite() && iota >= 0.0) {
            return Err(AttackError::InvalidMargin(iota));
        }
        let target = shape.joint_index(target)?;
        widths.check_shape(shape)?;
        let mle = mle_game(&dataset, bound)?;
        Ok(Self { dataset, target, widths, iota, bound, mle })
    }

    pub fn dataset(&self) -> &OfflineDataset {
        &self.dataset
    }
    pub fn shape(&self) -> &GameShape {
        self.dataset.shape()
    }
    /// Joint index of the target action.
    pub fn target(&self) -> usize {
        self.target
    }
    pub fn target_policy(&self) -> JointPolicy {
        JointPolicy::from_joint_table(self.shape(), &[vec![self.target]]).expect("validated target")
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

    /// Same data and target with a different margin.
    pub fn with_iota(&self, iota: f64) -> Result<Self, AttackError> {
        if !(iota.is_finite() && iota >= 0.0) {
            return Err(AttackError::InvalidMargin(iota));
        }
        Ok(Self { iota, ..self.clone() })
    }

    /// Same data and target with different widths.
    pub fn with_widths(&self, widths: ConfidenceWidths) -> Result<Self, AttackError> {
        widths.check_shape(self.shape())?;
        Ok(Self { widths, ..self.clone() })
    }

    fn rho(&self, a: usize) -> f64 {
        self.widths.rho_r(0, 0, a)
    }
}

fn build(inst: &BanditAttackInstance, model_kind: LearnerModel, formulation: Formulation) -> Result<(Lp, RewardLayer), AttackError> {
    let mut lp = Lp::new();
    let layer = add_reward_layer(&mut lp, &inst.dataset, &inst.mle.rewards, &inst.mle.counts, inst.bound, formulation)?;
    let shape = inst.shape();
    for i in 0..shape.n_players() {
        let own = shape.player_action(inst.target, i);
        for rep in shape.opponent_profiles(i) {
            let t = shape.with_action(rep, i, own);
            for ai in (0..shape.n_actions(i)).filter(|&x| x != own) {
                let o = shape.with_action(rep, i, ai);
                let widen = match model_kind {
                    LearnerModel::Mle => 0.0,
                    LearnerModel::ConfidenceBound => inst.rho(t) + inst.rho(o),
                };
                lp.add_constraint(
                    format!("sep[{i},{t},{o}]"),
                    vec![(layer.rbar(i, 0, 0, t), 1.0), (layer.rbar(i, 0, 0, o), -1.0)],
                    Sense::Ge,
                    inst.iota + widen,
                );
            }
        }
    }
    Ok((lp, layer))
}

/// Program against learners that trust the cell means.
pub fn build_mle_attack_lp(inst: &BanditAttackInstance, formulation: Formulation) -> Result<Lp, AttackError> {
    Ok(build(inst, LearnerModel::Mle, formulation)?.0)
}

/// Program against confidence-bound learners.
///
/// The clipped requirement `max(R†_t - ρ_t, -b) ≥ min(R†_o + ρ_o, b) + ι`
/// is encoded as the linear row `R†_t - ρ_t ≥ R†_o + ρ_o + ι`. For `ι > 0`
/// and means inside `[-b, b]` the two are equivalent, because the
/// target's lower endpoint can never exceed `b` and clipping at `-b` can
/// never certify a positive margin.
pub fn build_ci_attack_lp(inst: &BanditAttackInstance, formulation: Formulation) -> Result<Lp, AttackError> {
    Ok(build(inst, LearnerModel::ConfidenceBound, formulation)?.0)
}

/// Sufficient feasibility test: `ι ≤ 2b - 2ρ(a)` for every joint action.
pub fn bandit_feasibility(inst: &BanditAttackInstance) -> bool {
    (0..inst.shape().n_joint()).all(|a| inst.iota <= 2.0 * inst.bound - 2.0 * inst.rho(a))
}

/// Interval endpoints the learner model reasons over, clipped to `[-b, b]`.
pub fn learner_intervals(
    shape: &GameShape,
    means: &RewardTable<f64>,
    widths: &ConfidenceWidths,
    bound: f64,
    model: LearnerModel,
) -> (RewardTable<f64>, RewardTable<f64>) {
    let w = |h, s, a| match model {
        LearnerModel::Mle => 0.0,
        LearnerModel::ConfidenceBound => widths.rho_r(h, s, a),
    };
    let lower = RewardTable::from_fn(shape, |i, h, s, a| (means.get(i, h, s, a) - w(h, s, a)).max(-bound));
    let upper = RewardTable::from_fn(shape, |i, h, s, a| (means.get(i, h, s, a) + w(h, s, a)).min(bound));
    (lower, upper)
}

/// Solves the program for the given learner model and certifies the result
/// by recomputing every separation margin from the poisoned means.
pub fn solve_bandit_attack(inst: &BanditAttackInstance, model: LearnerModel, opts: &AttackOptions) -> Result<AttackResult, AttackError> {
    let formulation = opts.formulation;
    let (lp, layer) = build(inst, model, formulation)?;
    let sol = solve_attack_lp(&lp, &layer, &inst.mle.counts, opts.tie_break)?;
    let ex = extract(&layer, &sol, &inst.dataset, inst.bound)?;
    let shape = inst.shape();
    let (lower, upper) = learner_intervals(shape, &ex.poisoned_mle, &inst.widths, inst.bound, model);
    let margins = separation_margins(shape, &inst.target_policy(), &lower, &upper);
    let worst_margin = worst(&margins);
    if worst_margin < inst.iota - CERTIFICATE_TOL {
        return Err(AttackError::Certificate(format!("worst margin {worst_margin} below ι = {}", inst.iota)));
    }
    Ok(AttackResult {
        status: sol.status,
        poisoned: ex.poisoned,
        poisoned_mle: ex.poisoned_mle,
        cost: ex.cost,
        lp_objective: sol.objective_value,
        margins,
        worst_margin,
        formulation,
        tally: LpTally::of(&lp),
        pivots: sol.pivots,
    })
}

/// Cost of attacking each learner separately on its own marginal data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleAgentCost {
    pub per_player: Vec<f64>,
    pub total: f64,
}

/// Learner `i`'s view of the data: its own action and reward only.
pub fn marginal_dataset(dataset: &OfflineDataset, player: usize) -> Result<OfflineDataset, AttackError> {
    let shape = dataset.shape();
    let mshape = GameShape::new(1, vec![shape.n_actions(player)], 1)?;
    let episodes = dataset
        .episodes()
        .iter()
        .map(|ep| {
            let st = &ep.steps[0];
            Episode { steps: vec![Step { s: 0, a: vec![st.a[player]], r: vec![st.r[player]] }] }
        })
        .collect();
    Ok(OfflineDataset::new(mshape, episodes)?)
}

fn marginal_widths(inst: &BanditAttackInstance, player: usize, marginal: &OfflineDataset) -> Result<ConfidenceWidths, AttackError> {
    let mshape = marginal.shape();
    let shape = inst.shape();
    Ok(match inst.widths.mode() {
        WidthMode::Hoeffding { delta, reward_scale, transition_scale } => {
            let cfg = HoeffdingConfig { delta, reward_scale, transition_scale };
            hoeffding_widths(&visit_counts(marginal), mshape, inst.bound, &cfg)?
        }
        WidthMode::Constant { rho_r, .. } => ConfidenceWidths::constant(mshape, rho_r, 0.0)?,
        WidthMode::Explicit => {
            let row: Vec<f64> = (0..shape.n_actions(player))
                .map(|ai| (0..shape.n_joint()).filter(|&a| shape.player_action(a, player) == ai).map(|a| inst.rho(a)).fold(0.0, f64::max))
                .collect();
            ConfidenceWidths::explicit(mshape, &[vec![row]], &[])?
        }
    })
}

/// Sum over learners of the optimal single-agent attack on the marginal
/// data, with widths recomputed for the marginal counts.
pub fn single_agent_reduction_cost(inst: &BanditAttackInstance, model: LearnerModel) -> Result<SingleAgentCost, AttackError> {
    let shape = inst.shape();
    let mut per_player = Vec::with_capacity(shape.n_players());
    for i in 0..shape.n_players() {
        let marginal = marginal_dataset(&inst.dataset, i)?;
        let widths = marginal_widths(inst, i, &marginal)?;
        let own = shape.player_action(inst.target, i);
        let sub = BanditAttackInstance::new(marginal, &[own], widths, inst.iota, inst.bound)?;
        let formulation = if inst.bound.is_finite() && inst.dataset.max_abs_reward() > inst.bound {
            Formulation::PerEpisode
        } else {
            Formulation::Aggregated
        };
        per_player.push(solve_bandit_attack(&sub, model, &AttackOptions::new(formulation))?.cost);
    }
    let total = per_player.iter().sum();
    Ok(SingleAgentCost { per_player, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::TieBreak;
    use crate::lp::{solve, LpStatus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Joint-action dataset with `counts[a]` copies of `payoffs[a]`.
    fn dataset(actions: Vec<usize>, payoffs: &[Vec<f64>], counts: &[usize]) -> OfflineDataset {
        let shape = GameShape::new(1, actions, 1).unwrap();
        let mut eps = Vec::new();
        for (a, (&c, r)) in counts.iter().zip(payoffs).enumerate() {
            for _ in 0..c {
                eps.push(Episode { steps: vec![Step { s: 0, a: shape.joint_tuple(a), r: r.clone() }] });
            }
        }
        OfflineDataset::new(shape, eps).unwrap()
    }

    fn example_game(counts: &[usize]) -> OfflineDataset {
        let p = [vec![3.0, 3.0], vec![1.0, 2.0], vec![2.0, 1.0], vec![0.0, 0.0]];
        dataset(vec![2, 2], &p, counts)
    }

    fn table1(n_rep: usize, b: f64) -> OfflineDataset {
        let p: Vec<Vec<f64>> = (0..4).map(|a| {
            let t = [a / 2, a % 2];
            t.iter().map(|&x| if x == 0 { -b } else { b }).collect()
        }).collect();
        dataset(vec![2, 2], &p, &[n_rep; 4])
    }

    fn constant(ds: &OfflineDataset, rho: f64) -> ConfidenceWidths {
        ConfidenceWidths::constant(ds.shape(), rho, 0.0).unwrap()
    }

    #[test]
    fn example_game_needs_no_change() {
        let ds = example_game(&[5, 5, 5, 5]);
        let inst = BanditAttackInstance::new(ds.clone(), &[0, 0], constant(&ds, 0.1), 0.5, 3.0).unwrap();
        for model in [LearnerModel::Mle, LearnerModel::ConfidenceBound] {
            for f in [Formulation::PerEpisode, Formulation::Aggregated] {
                let res = solve_bandit_attack(&inst, model, &AttackOptions::new(f)).unwrap();
                assert_eq!(res.cost, 0.0);
                assert_eq!(res.poisoned, ds);
            }
        }
    }

    #[test]
    fn variable_count_of_mle_program() {
        let ds = example_game(&[2, 1, 1, 3]);
        let inst = BanditAttackInstance::new(ds.clone(), &[0, 0], constant(&ds, 0.0), 0.5, 3.0).unwrap();
        let lp = build_mle_attack_lp(&inst, Formulation::PerEpisode).unwrap();
        let (n, k, a) = (2, 7, 2usize);
        assert_eq!(lp.n_vars(), 2 * n * k + n * a.pow(n as u32));
        let tally = LpTally::of(&lp);
        // Two slack rows per reward, one mean equality per (i, a), and
        // (A - 1) A^(n-1) separation rows per learner.
        assert_eq!(tally.inequality_rows, 2 * n * k + n * (a - 1) * a.pow(n as u32 - 1));
        assert_eq!(tally.equality_rows, n * a.pow(n as u32));
        assert_eq!(tally.boxed_variables, n * k);
    }

    #[test]
    fn margin_above_twice_bound_is_infeasible() {
        let ds = example_game(&[1, 1, 1, 1]);
        let inst = BanditAttackInstance::new(ds.clone(), &[0, 0], constant(&ds, 0.0), 6.01, 3.0).unwrap();
        assert_eq!(solve_bandit_attack(&inst, LearnerModel::Mle, &AttackOptions::new(Formulation::PerEpisode)), Err(AttackError::Infeasible));
        let inst = inst.with_iota(6.0).unwrap();
        assert!(solve_bandit_attack(&inst, LearnerModel::Mle, &AttackOptions::new(Formulation::PerEpisode)).is_ok());
    }

    #[test]
    fn table1_cost_and_pattern() {
        let (b, rho, iota) = (1.0, 0.1, 0.05);
        let ds = table1(3, b);
        let inst = BanditAttackInstance::new(ds.clone(), &[0, 0], constant(&ds, rho), iota, b).unwrap();
        for f in [Formulation::PerEpisode, Formulation::Aggregated] {
            let res = solve_bandit_attack(&inst, LearnerModel::ConfidenceBound, &AttackOptions::new(f).with_tie_break(TieBreak::HighestMeans)).unwrap();
            assert!((res.cost - 27.0).abs() < 1e-6, "{f:?}: {}", res.cost);
            let low = b - 2.0 * rho - iota;
            let expect = [[b, b], [b, low], [low, b], [low, low]];
            for (a, e) in expect.iter().enumerate() {
                for i in 0..2 {
                    assert!((res.poisoned_mle.get(i, 0, 0, a) - e[i]).abs() < 1e-6, "{f:?} a={a} i={i} {:?}", res.poisoned_mle.values());
                }
            }
        }
    }

    #[test]
    fn boundary_margin_is_feasible() {
        let (b, rho) = (1.0, 0.2);
        let ds = table1(2, b);
        let inst = BanditAttackInstance::new(ds.clone(), &[0, 0], constant(&ds, rho), 2.0 * b - 2.0 * rho, b).unwrap();
        assert!(bandit_feasibility(&inst));
        assert!(solve_bandit_attack(&inst, LearnerModel::ConfidenceBound, &AttackOptions::new(Formulation::PerEpisode)).is_ok());
    }

    #[test]
    fn feasibility_flag_by_substitution() {
        let ds = table1(1, 1.0);
        let inst = BanditAttackInstance::new(ds.clone(), &[0, 0], constant(&ds, 0.2), 1.5, 1.0).unwrap();
        assert!(bandit_feasibility(&inst));
        assert!(!bandit_feasibility(&inst.with_iota(1.7).unwrap()));
    }

    #[test]
    fn single_episode_means_equal_rewards() {
        let ds = dataset(vec![2, 2], &[vec![0.1, 0.2], vec![0.3, -0.4], vec![0.5, 0.6], vec![-0.7, 0.8]], &[1; 4]);
        let inst = BanditAttackInstance::new(ds.clone(), &[1, 0], constant(&ds, 0.05), 0.3, 1.0).unwrap();
        let res = solve_bandit_attack(&inst, LearnerModel::ConfidenceBound, &AttackOptions::new(Formulation::PerEpisode)).unwrap();
        for k in 0..4 {
            let a = res.poisoned.joint(k, 0);
            for i in 0..2 {
                assert_eq!(res.poisoned.reward(k, 0, i), res.poisoned_mle.get(i, 0, 0, a));
            }
        }
    }

    #[test]
    fn zero_widths_give_equal_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p: Vec<Vec<f64>> = (0..4).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let counts: Vec<usize> = (0..4).map(|_| rng.gen_range(1..4)).collect();
            let ds = dataset(vec![2, 2], &p, &counts);
            let inst = BanditAttackInstance::new(ds.clone(), &[1, 1], constant(&ds, 0.0), 0.3, 1.0).unwrap();
            let a = solve_bandit_attack(&inst, LearnerModel::Mle, &AttackOptions::new(Formulation::PerEpisode)).unwrap();
            let b = solve_bandit_attack(&inst, LearnerModel::ConfidenceBound, &AttackOptions::new(Formulation::PerEpisode)).unwrap();
            assert!((a.cost - b.cost).abs() <= 1e-6);
        }
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> BanditAttackInstance {
        let n = rng.gen_range(2..=3);
        let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=3)).collect();
        let shape = GameShape::new(1, actions.clone(), 1).unwrap();
        let nj = shape.n_joint();
        let p: Vec<Vec<f64>> = (0..nj).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let counts: Vec<usize> = (0..nj).map(|_| rng.gen_range(1..3)).collect();
        let ds = dataset(actions.clone(), &p, &counts);
        let target: Vec<usize> = actions.iter().map(|&a| rng.gen_range(0..a)).collect();
        let rho = rng.gen_range(0.0..0.3);
        let iota = rng.gen_range(0.0..(2.0 - 2.0 * rho));
        BanditAttackInstance::new(ds.clone(), &target, constant(&ds, rho), iota, 1.0).unwrap()
    }

    #[test]
    fn flag_implies_optimal_status() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let inst = random_instance(&mut rng);
            assert!(bandit_feasibility(&inst));
            let lp = build_ci_attack_lp(&inst, Formulation::Aggregated).unwrap();
            assert_eq!(solve(&lp).unwrap().status, LpStatus::Optimal);
        }
    }

    #[test]
    fn formulations_agree_and_cost_grows_with_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..15 {
            let inst = random_instance(&mut rng);
            let a = solve_bandit_attack(&inst, LearnerModel::ConfidenceBound, &AttackOptions::new(Formulation::PerEpisode)).unwrap();
            let b = solve_bandit_attack(&inst, LearnerModel::ConfidenceBound, &AttackOptions::new(Formulation::Aggregated)).unwrap();
            assert!((a.cost - b.cost).abs() < 1e-6, "{} vs {}", a.cost, b.cost);
            assert!((a.cost - a.lp_objective).abs() < 1e-6);
            let mut last = 0.0;
            let top = 2.0 - 2.0 * inst.widths().max_rho_r();
            for step in 0..=5 {
                let c = solve_bandit_attack(&inst.with_iota(top * step as f64 / 5.0).unwrap(), LearnerModel::ConfidenceBound, &AttackOptions::new(Formulation::Aggregated))
                    .unwrap()
                    .cost;
                assert!(c >= last - 1e-7);
                last = c;
            }
        }
    }

    #[test]
    fn skewed_counts_make_single_agent_attack_costly() {
        // Player 0's own action 0 is seen mostly against the opponent's
        // bad reply, so its marginal mean falls below that of action 1.
        let ds = example_game(&[1, 8, 8, 1]);
        let inst = BanditAttackInstance::new(ds.clone(), &[0, 0], constant(&ds, 0.0), 0.5, 3.0).unwrap();
        assert_eq!(solve_bandit_attack(&inst, LearnerModel::Mle, &AttackOptions::new(Formulation::PerEpisode)).unwrap().cost, 0.0);
        let single = single_agent_reduction_cost(&inst, LearnerModel::Mle).unwrap();
        assert!(single.total > 0.0);
        // Marginal means: action 0 of player 0 gives (3 + 8) / 9, action 1 gives (16 + 0) / 9.
        assert!((single.per_player[0] - 9.0 * (16.0 / 9.0 - 11.0 / 9.0 + 0.5)).abs() < 1e-9 * 10.0);
    }

    #[test]
    fn balanced_counts_need_no_single_agent_change() {
        let ds = example_game(&[4, 4, 4, 4]);
        let inst = BanditAttackInstance::new(ds.clone(), &[0, 0], constant(&ds, 0.0), 0.5, 3.0).unwrap();
        // Marginal gap is (3 + 1) / 2 - (2 + 0) / 2 = 1 for both learners.
        assert_eq!(single_agent_reduction_cost(&inst, LearnerModel::Mle).unwrap().total, 0.0);
    }

    #[test]
    fn marginal_separation_does_not_imply_joint_dominance() {
        // Action 1 of player 0 looks bad on average only because its good
        // outcome is rare, so the single-agent attack is free while the
        // joint attack is not.
        let p = [vec![1.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0], vec![2.0, 0.0]];
        let ds = dataset(vec![2, 2], &p, &[3, 3, 9, 1]);
        let inst = BanditAttackInstance::new(ds.clone(), &[0, 0], constant(&ds, 0.0), 0.0, 3.0).unwrap();
        let joint = solve_bandit_attack(&inst, LearnerModel::Mle, &AttackOptions::new(Formulation::PerEpisode)).unwrap().cost;
        let single = single_agent_reduction_cost(&inst, LearnerModel::Mle).unwrap();
        assert_eq!(single.per_player[0], 0.0);
        assert!(joint > 0.0);
    }

    #[test]
    fn unbounded_rewards_allowed() {
        let ds = example_game(&[1, 1, 1, 1]);
        let inst = BanditAttackInstance::new(ds.clone(), &[1, 1], constant(&ds, 0.0), 0.5, f64::INFINITY).unwrap();
        let res = solve_bandit_attack(&inst, LearnerModel::Mle, &AttackOptions::new(Formulation::Aggregated)).unwrap();
        // The target (1, 1) pays (0, 0), below both unilateral deviations.
        assert!(res.cost > 0.0);
        assert!(res.worst_margin >= 0.5 - 1e-9);
    }
}
