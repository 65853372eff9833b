//! Finite-horizon Markov games, offline datasets and the equilibrium check.
//!
//! States, actions and periods are dense 0-based indices. A joint action is
//! addressed by a mixed-radix index with player 0 as the most significant
//! digit, so index order coincides with lexicographic order of action tuples.

mod dataset;
mod values;

pub use dataset::{check_full_coverage, mle_game, visit_counts, CoverageReport, Episode, MleEstimate, OfflineDataset, Step, VisitCounts};
pub use values::{is_iota_mpdse, q_values, separation_margins, MpdseCheck, QTables, SeparationMargin};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Errors raised while building or validating games and datasets.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("state {state} out of range for {n_states} states")]
    StateOutOfRange { state: usize, n_states: usize },
    #[error("action {action} of player {player} out of range")]
    ActionOutOfRange { player: usize, action: usize },
    #[error("episode {episode} has {len} steps, expected {expected}")]
    EpisodeLength { episode: usize, len: usize, expected: usize },
    #[error("transition row at (h={h}, s={s}, a={a}) is not a distribution")]
    InvalidDistribution { h: usize, s: usize, a: usize },
    #[error("reward at (i={i}, h={h}, s={s}, a={a}) lies outside [-b, b]")]
    RewardOutOfBounds { i: usize, h: usize, s: usize, a: usize },
    #[error("initial distribution invalid")]
    InvalidInitial,
    #[error("{} uncovered cell(s), first at (h={}, s={}, a={})", .0.len(), .0[0].h, .0[0].s, .0[0].a)]
    UncoveredCell(Vec<Cell>),
    #[error("bound must be positive")]
    InvalidBound,
}

/// A (period, state, joint action) triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub h: usize,
    pub s: usize,
    pub a: usize,
}

#[derive(Deserialize)]
struct RawShape {
    n_states: usize,
    actions: Vec<usize>,
    horizon: usize,
}

/// Dimensions of a finite-horizon n-player Markov game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawShape")]
pub struct GameShape {
    n_states: usize,
    actions: Vec<usize>,
    horizon: usize,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl TryFrom<RawShape> for GameShape {
    type Error = GameError;
    fn try_from(raw: RawShape) -> Result<Self, GameError> {
        GameShape::new(raw.n_states, raw.actions, raw.horizon)
    }
}

impl GameShape {
    pub fn new(n_states: usize, actions: Vec<usize>, horizon: usize) -> Result<Self, GameError> {
        if actions.is_empty() {
            return Err(GameError::InvalidShape("at least one player required".into()));
        }
        if n_states == 0 || horizon == 0 || actions.contains(&0) {
            return Err(GameError::InvalidShape("all counts must be at least 1".into()));
        }
        let mut strides = vec![1usize; actions.len()];
        for i in (0..actions.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1]
                .checked_mul(actions[i + 1])
                .ok_or_else(|| GameError::InvalidShape("joint action space overflows".into()))?;
        }
        strides[0]
            .checked_mul(actions[0])
            .ok_or_else(|| GameError::InvalidShape("joint action space overflows".into()))?;
        Ok(Self { n_states, actions, horizon, strides })
    }

    /// Shape with `n` players that all have `a` actions.
    pub fn symmetric(n: usize, a: usize, n_states: usize, horizon: usize) -> Result<Self, GameError> {
        Self::new(n_states, vec![a; n], horizon)
    }

    pub fn n_players(&self) -> usize {
        self.actions.len()
    }
    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
    pub fn n_actions(&self, player: usize) -> usize {
        self.actions[player]
    }

    /// Size of the joint action space.
    pub fn n_joint(&self) -> usize {
        self.strides[0] * self.actions[0]
    }

    /// Mixed-radix index of an action tuple.
    pub fn joint_index(&self, tuple: &[usize]) -> Result<usize, GameError> {
        if tuple.len() != self.n_players() {
            return Err(GameError::ShapeMismatch(format!(
                "action tuple has {} entries for {} players",
                tuple.len(),
                self.n_players()
            )));
        }
        let mut idx = 0;
        for (player, (&a, &stride)) in tuple.iter().zip(&self.strides).enumerate() {
            if a >= self.actions[player] {
                return Err(GameError::ActionOutOfRange { player, action: a });
            }
            idx += a * stride;
        }
        Ok(idx)
    }

    /// Action tuple of a joint index.
    pub fn joint_tuple(&self, joint: usize) -> Vec<usize> {
        (0..self.n_players()).map(|i| self.player_action(joint, i)).collect()
    }

    /// Action of `player` inside a joint index.
    pub fn player_action(&self, joint: usize, player: usize) -> usize {
        (joint / self.strides[player]) % self.actions[player]
    }

    /// Joint index obtained by replacing `player`'s action with `action`.
    pub fn with_action(&self, joint: usize, player: usize, action: usize) -> usize {
        let current = self.player_action(joint, player);
        joint - current * self.strides[player] + action * self.strides[player]
    }

    /// One representative joint index per opponent profile a_{-i}, with
    /// `player`'s own action set to 0.
    pub fn opponent_profiles(&self, player: usize) -> Vec<usize> {
        (0..self.n_joint()).filter(|&j| self.player_action(j, player) == 0).collect()
    }

    /// Number of deterministic Markov policies, if it fits in `u128`.
    pub fn n_deterministic_policies(&self) -> Option<u128> {
        let cells = u32::try_from(self.horizon.checked_mul(self.n_states)?).ok()?;
        (self.n_joint() as u128).checked_pow(cells)
    }

    /// Same joint action space with a different state count and horizon.
    pub fn reshaped(&self, n_states: usize, horizon: usize) -> Result<Self, GameError> {
        Self::new(n_states, self.actions.clone(), horizon)
    }

    fn check_state(&self, s: usize) -> Result<(), GameError> {
        if s < self.n_states {
            Ok(())
        } else {
            Err(GameError::StateOutOfRange { state: s, n_states: self.n_states })
        }
    }
}

/// Per-player table indexed by (i, h, s, joint action); used for rewards
/// and Q values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTable<T> {
    n_players: usize,
    horizon: usize,
    n_states: usize,
    n_joint: usize,
    data: Vec<T>,
}

impl<T: Copy> RewardTable<T> {
    pub fn filled(shape: &GameShape, value: T) -> Self {
        Self::with_dims(shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint(), value)
    }

    pub fn with_dims(n_players: usize, horizon: usize, n_states: usize, n_joint: usize, value: T) -> Self {
        Self { n_players, horizon, n_states, n_joint, data: vec![value; n_players * horizon * n_states * n_joint] }
    }

    /// Builds a table by evaluating `f(i, h, s, a)` for every entry.
    pub fn from_fn(shape: &GameShape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let (n, hz, ns, nj) = (shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint());
        let mut data = Vec::with_capacity(n * hz * ns * nj);
        for i in 0..n {
            for h in 0..hz {
                for s in 0..ns {
                    for a in 0..nj {
                        data.push(f(i, h, s, a));
                    }
                }
            }
        }
        Self { n_players: n, horizon: hz, n_states: ns, n_joint: nj, data }
    }

    fn offset(&self, i: usize, h: usize, s: usize, a: usize) -> usize {
        debug_assert!(i < self.n_players && h < self.horizon && s < self.n_states && a < self.n_joint);
        ((i * self.horizon + h) * self.n_states + s) * self.n_joint + a
    }

    pub fn get(&self, i: usize, h: usize, s: usize, a: usize) -> T {
        self.data[self.offset(i, h, s, a)]
    }

    pub fn set(&mut self, i: usize, h: usize, s: usize, a: usize, value: T) {
        let o = self.offset(i, h, s, a);
        self.data[o] = value;
    }

    /// Entries for all joint actions at (i, h, s).
    pub fn row(&self, i: usize, h: usize, s: usize) -> &[T] {
        let o = self.offset(i, h, s, 0);
        &self.data[o..o + self.n_joint]
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_joint(&self) -> usize {
        self.n_joint
    }
    pub fn values(&self) -> &[T] {
        &self.data
    }
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Nested `[i][h][s][a]` arrays for reports.
    pub fn to_nested(&self) -> Vec<Vec<Vec<Vec<T>>>> {
        (0..self.n_players)
            .map(|i| {
                (0..self.horizon)
                    .map(|h| (0..self.n_states).map(|s| self.row(i, h, s).to_vec()).collect())
                    .collect()
            })
            .collect()
    }

    /// Applies `f` to every entry.
    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> RewardTable<U> {
        RewardTable {
            n_players: self.n_players,
            horizon: self.horizon,
            n_states: self.n_states,
            n_joint: self.n_joint,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Restriction to the single period `h`.
    pub fn period(&self, h: usize) -> Self {
        let mut data = Vec::with_capacity(self.n_players * self.n_states * self.n_joint);
        for i in 0..self.n_players {
            for s in 0..self.n_states {
                data.extend_from_slice(self.row(i, h, s));
            }
        }
        Self { n_players: self.n_players, horizon: 1, n_states: self.n_states, n_joint: self.n_joint, data }
    }
}

/// Transition table indexed by (h, s, joint action, s') for periods
/// `0..H-1`; the final period has no successor and is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable<T> {
    periods: usize,
    n_states: usize,
    n_joint: usize,
    data: Vec<T>,
}

impl<T: Scalar> TransitionTable<T> {
    /// Uniform next-state distribution everywhere.
    pub fn uniform(shape: &GameShape) -> Self {
        let ns = shape.n_states();
        let periods = shape.horizon() - 1;
        let p = T::one() / T::lit(ns as f64);
        Self { periods, n_states: ns, n_joint: shape.n_joint(), data: vec![p; periods * ns * shape.n_joint() * ns] }
    }

    /// Builds from `f(h, s, a)` returning each next-state row.
    pub fn from_rows(shape: &GameShape, mut f: impl FnMut(usize, usize, usize) -> Vec<T>) -> Result<Self, GameError> {
        let ns = shape.n_states();
        let periods = shape.horizon() - 1;
        let mut data = Vec::with_capacity(periods * ns * shape.n_joint() * ns);
        for h in 0..periods {
            for s in 0..ns {
                for a in 0..shape.n_joint() {
                    let row = f(h, s, a);
                    if row.len() != ns {
                        return Err(GameError::ShapeMismatch("transition row length".into()));
                    }
                    data.extend(row);
                }
            }
        }
        Ok(Self { periods, n_states: ns, n_joint: shape.n_joint(), data })
    }

    fn offset(&self, h: usize, s: usize, a: usize) -> usize {
        debug_assert!(h < self.periods && s < self.n_states && a < self.n_joint);
        ((h * self.n_states + s) * self.n_joint + a) * self.n_states
    }

    /// Next-state distribution P_h(. | s, a).
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[T] {
        let o = self.offset(h, s, a);
        &self.data[o..o + self.n_states]
    }

    pub fn row_mut(&mut self, h: usize, s: usize, a: usize) -> &mut [T] {
        let o = self.offset(h, s, a);
        let ns = self.n_states;
        &mut self.data[o..o + ns]
    }

    /// Number of stored periods (`H - 1`).
    pub fn periods(&self) -> usize {
        self.periods
    }
    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_joint(&self) -> usize {
        self.n_joint
    }

    /// Nested `[h][s][a][s']` arrays for reports.
    pub fn to_nested(&self) -> Vec<Vec<Vec<Vec<T>>>> {
        (0..self.periods)
            .map(|h| (0..self.n_states).map(|s| (0..self.n_joint).map(|a| self.row(h, s, a).to_vec()).collect()).collect())
            .collect()
    }

    /// Converts entries to another scalar type.
    pub fn cast<U: Scalar>(&self) -> TransitionTable<U> {
        TransitionTable {
            periods: self.periods,
            n_states: self.n_states,
            n_joint: self.n_joint,
            data: self.data.iter().map(|x| U::lit(x.to_f64_lossy())).collect(),
        }
    }
}

/// Finite-horizon general-sum Markov game with rewards bounded by `bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovGame<T> {
    shape: GameShape,
    transitions: TransitionTable<T>,
    rewards: RewardTable<T>,
    initial_dist: Vec<T>,
    bound: T,
}

impl<T: Scalar> MarkovGame<T> {
    /// Validates distributions and reward bounds; `bound` may be infinite.
    pub fn new(
        shape: GameShape,
        transitions: TransitionTable<T>,
        rewards: RewardTable<T>,
        initial_dist: Vec<T>,
        bound: T,
    ) -> Result<Self, GameError> {
        if bound.is_nan() || bound <= T::zero() {
            return Err(GameError::InvalidBound);
        }
        if transitions.periods != shape.horizon() - 1
            || transitions.n_states != shape.n_states()
            || transitions.n_joint != shape.n_joint()
        {
            return Err(GameError::ShapeMismatch("transition table dimensions".into()));
        }
        if rewards.n_players != shape.n_players()
            || rewards.horizon != shape.horizon()
            || rewards.n_states != shape.n_states()
            || rewards.n_joint != shape.n_joint()
        {
            return Err(GameError::ShapeMismatch("reward table dimensions".into()));
        }
        let tol = T::lit(1e-9).max(T::margin_tol());
        for h in 0..transitions.periods {
            for s in 0..shape.n_states() {
                for a in 0..shape.n_joint() {
                    if !is_distribution(transitions.row(h, s, a), tol) {
                        return Err(GameError::InvalidDistribution { h, s, a });
                    }
                }
            }
        }
        if initial_dist.len() != shape.n_states() || !is_distribution(&initial_dist, tol) {
            return Err(GameError::InvalidInitial);
        }
        for i in 0..shape.n_players() {
            for h in 0..shape.horizon() {
                for s in 0..shape.n_states() {
                    for a in 0..shape.n_joint() {
                        let r = rewards.get(i, h, s, a);
                        if !r.is_finite() || r.abs() > bound {
                            return Err(GameError::RewardOutOfBounds { i, h, s, a });
                        }
                    }
                }
            }
        }
        Ok(Self { shape, transitions, rewards, initial_dist, bound })
    }

    pub fn shape(&self) -> &GameShape {
        &self.shape
    }
    pub fn transitions(&self) -> &TransitionTable<T> {
        &self.transitions
    }
    pub fn rewards(&self) -> &RewardTable<T> {
        &self.rewards
    }
    pub fn initial_dist(&self) -> &[T] {
        &self.initial_dist
    }
    pub fn bound(&self) -> T {
        self.bound
    }
}

/// True when `p` is entrywise nonnegative and sums to one within `tol`.
pub fn is_distribution<T: Scalar>(p: &[T], tol: T) -> bool {
    p.iter().all(|&x| x >= T::zero() && x.is_finite()) && (p.iter().copied().sum::<T>() - T::one()).abs() <= tol
}

/// Deterministic Markov joint policy: one joint action per (h, s).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointPolicy {
    horizon: usize,
    n_states: usize,
    actions: Vec<usize>,
}

impl JointPolicy {
    /// Policy playing joint action index 0 everywhere.
    pub fn all_zeros(shape: &GameShape) -> Self {
        Self { horizon: shape.horizon(), n_states: shape.n_states(), actions: vec![0; shape.horizon() * shape.n_states()] }
    }

    /// Builds from joint indices laid out as `table[h][s]`.
    pub fn from_joint_table(shape: &GameShape, table: &[Vec<usize>]) -> Result<Self, GameError> {
        if table.len() != shape.horizon() || table.iter().any(|row| row.len() != shape.n_states()) {
            return Err(GameError::ShapeMismatch("policy table must be indexed [h][s]".into()));
        }
        let actions: Vec<usize> = table.iter().flatten().copied().collect();
        if let Some(&bad) = actions.iter().find(|&&a| a >= shape.n_joint()) {
            return Err(GameError::ActionOutOfRange { player: 0, action: bad });
        }
        Ok(Self { horizon: shape.horizon(), n_states: shape.n_states(), actions })
    }

    /// Builds from action tuples laid out as `table[h][s]`.
    pub fn from_tuple_table(shape: &GameShape, table: &[Vec<Vec<usize>>]) -> Result<Self, GameError> {
        let joint = table
            .iter()
            .map(|row| row.iter().map(|t| shape.joint_index(t)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_joint_table(shape, &joint)
    }

    /// Joint action index played at (h, s).
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.n_states + s]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Joint indices as `[h][s]`.
    pub fn to_joint_table(&self) -> Vec<Vec<usize>> {
        self.actions.chunks(self.n_states).map(|c| c.to_vec()).collect()
    }

    /// Restriction to period `h`, as a one-period policy.
    pub fn period(&self, h: usize) -> Self {
        Self { horizon: 1, n_states: self.n_states, actions: self.actions[h * self.n_states..(h + 1) * self.n_states].to_vec() }
    }

    /// Checks dimensions against `shape`.
    pub fn check_shape(&self, shape: &GameShape) -> Result<(), GameError> {
        if self.horizon != shape.horizon() || self.n_states != shape.n_states() {
            return Err(GameError::ShapeMismatch("policy dimensions".into()));
        }
        if let Some(&bad) = self.actions.iter().find(|&&a| a >= shape.n_joint()) {
            return Err(GameError::ActionOutOfRange { player: 0, action: bad });
        }
        Ok(())
    }

    /// Every deterministic policy of `shape`, or `None` above `limit`.
    pub fn enumerate(shape: &GameShape, limit: u128) -> Option<Vec<JointPolicy>> {
        let total = shape.n_deterministic_policies()?;
        if total > limit {
            return None;
        }
        let cells = shape.horizon() * shape.n_states();
        let nj = shape.n_joint();
        let mut out = Vec::with_capacity(total as usize);
        let mut digits = vec![0usize; cells];
        loop {
            out.push(Self { horizon: shape.horizon(), n_states: shape.n_states(), actions: digits.clone() });
            let mut k = 0;
            loop {
                if k == cells {
                    return Some(out);
                }
                digits[k] += 1;
                if digits[k] < nj {
                    break;
                }
                digits[k] = 0;
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn joint_index_is_lexicographic() {
        let shape = GameShape::new(1, vec![2, 3], 1).unwrap();
        let mut expected = 0;
        for a0 in 0..2 {
            for a1 in 0..3 {
                assert_eq!(shape.joint_index(&[a0, a1]).unwrap(), expected);
                assert_eq!(shape.joint_tuple(expected), vec![a0, a1]);
                expected += 1;
            }
        }
        assert_eq!(shape.n_joint(), 6);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(GameShape::new(0, vec![2], 1).is_err());
        assert!(GameShape::new(1, vec![], 1).is_err());
        assert!(GameShape::new(1, vec![2, 0], 1).is_err());
        assert!(GameShape::new(1, vec![2], 0).is_err());
    }

    #[test]
    fn shape_roundtrips_through_json() {
        let shape = GameShape::new(3, vec![2, 3], 2).unwrap();
        let json = serde_json::to_string(&shape).unwrap();
        let back: GameShape = serde_json::from_str(&json).unwrap();
        assert_eq!(back, shape);
        assert_eq!(back.with_action(4, 0, 0), 1);
    }

    #[test]
    fn policy_enumeration_counts() {
        let shape = GameShape::new(2, vec![2], 2).unwrap();
        let all = JointPolicy::enumerate(&shape, 64).unwrap();
        assert_eq!(all.len(), 16);
        let unique: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 16);
        assert!(JointPolicy::enumerate(&GameShape::new(3, vec![2, 2], 3).unwrap(), 64).is_none());
    }

    #[test]
    fn game_rejects_bad_rows() {
        let shape = GameShape::new(2, vec![1], 2).unwrap();
        let mut p = TransitionTable::<f64>::uniform(&shape);
        p.row_mut(0, 0, 0)[0] = 0.7;
        let r = RewardTable::filled(&shape, 0.0);
        let err = MarkovGame::new(shape, p, r, vec![0.5, 0.5], 1.0).unwrap_err();
        assert_eq!(err, GameError::InvalidDistribution { h: 0, s: 0, a: 0 });
    }

    proptest! {
        #[test]
        fn with_action_changes_only_one_digit(acts in proptest::collection::vec(1usize..4, 1..4), seed in 0usize..1000, ai in 0usize..4) {
            let shape = GameShape::new(1, acts.clone(), 1).unwrap();
            let j = seed % shape.n_joint();
            let player = seed % acts.len();
            let ai = ai % acts[player];
            let k = shape.with_action(j, player, ai);
            let (t0, t1) = (shape.joint_tuple(j), shape.joint_tuple(k));
            for p in 0..acts.len() {
                if p == player { prop_assert_eq!(t1[p], ai); } else { prop_assert_eq!(t0[p], t1[p]); }
            }
        }
    }
}
