//! Backward induction and the ι-strict dominant-strategy check.

use serde::Serialize;

use super::{GameShape, JointPolicy, MarkovGame, RewardTable};
use crate::scalar::Scalar;

/// Q and V tables of a game under a fixed policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QTables<T> {
    pub q: RewardTable<T>,
    v: Vec<T>,
    n_states: usize,
    horizon: usize,
}

impl<T: Scalar> QTables<T> {
    /// V_{i,h}(s).
    pub fn v(&self, i: usize, h: usize, s: usize) -> T {
        self.v[(i * self.horizon + h) * self.n_states + s]
    }
}

/// Exact backward recursion Q_H = R_H, Q_h = R_h + P_h V_{h+1}.
pub fn q_values<T: Scalar>(game: &MarkovGame<T>, policy: &JointPolicy) -> QTables<T> {
    let shape = game.shape();
    let (n, hz, ns, nj) = (shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint());
    let mut q = game.rewards().clone();
    let mut v = vec![T::zero(); n * hz * ns];
    for h in (0..hz).rev() {
        for i in 0..n {
            if h + 1 < hz {
                let next: Vec<T> = (0..ns).map(|s2| v[(i * hz + h + 1) * ns + s2]).collect();
                for s in 0..ns {
                    for a in 0..nj {
                        let p = game.transitions().row(h, s, a);
                        let ev = p.iter().zip(&next).fold(T::zero(), |acc, (&pp, &vv)| acc + pp * vv);
                        q.set(i, h, s, a, q.get(i, h, s, a) + ev);
                    }
                }
            }
            for s in 0..ns {
                v[(i * hz + h) * ns + s] = q.get(i, h, s, policy.action(h, s));
            }
        }
    }
    QTables { q, v, n_states: ns, horizon: hz }
}

/// One separation constraint: the target cell against a unilateral deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationMargin {
    pub player: usize,
    pub h: usize,
    pub s: usize,
    pub target: usize,
    pub deviation: usize,
    /// `lower(target) - upper(deviation)`.
    pub margin: f64,
}

/// All separation margins `lower(s, (π_i, a_-i)) - upper(s, (a_i, a_-i))`
/// over players, periods, states, opponent profiles and deviations.
pub fn separation_margins<T: Scalar>(
    shape: &GameShape,
    policy: &JointPolicy,
    lower: &RewardTable<T>,
    upper: &RewardTable<T>,
) -> Vec<SeparationMargin> {
    let mut out = Vec::new();
    for i in 0..shape.n_players() {
        let profiles = shape.opponent_profiles(i);
        for h in 0..shape.horizon() {
            for s in 0..shape.n_states() {
                let own = shape.player_action(policy.action(h, s), i);
                for &rep in &profiles {
                    let target = shape.with_action(rep, i, own);
                    for ai in (0..shape.n_actions(i)).filter(|&x| x != own) {
                        let deviation = shape.with_action(rep, i, ai);
                        let m = lower.get(i, h, s, target) - upper.get(i, h, s, deviation);
                        out.push(SeparationMargin { player: i, h, s, target, deviation, margin: m.to_f64_lossy() });
                    }
                }
            }
        }
    }
    out
}

/// Decision and worst margin of the ι-MPDSE check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MpdseCheck<T> {
    pub holds: bool,
    /// Minimum of `Q(target) - Q(deviation) - ι`; `+inf` when no player has
    /// an alternative action.
    pub worst_margin: T,
}

/// Whether `policy` is an ι-strict Markov perfect dominant-strategy
/// equilibrium of `game`, with Q computed under `policy` itself.
pub fn is_iota_mpdse<T: Scalar>(game: &MarkovGame<T>, policy: &JointPolicy, iota: T) -> MpdseCheck<T> {
    let q = q_values(game, policy);
    let shape = game.shape();
    let mut worst = T::infinity();
    for i in 0..shape.n_players() {
        let profiles = shape.opponent_profiles(i);
        for h in 0..shape.horizon() {
            for s in 0..shape.n_states() {
                let own = shape.player_action(policy.action(h, s), i);
                let row = q.q.row(i, h, s);
                for &rep in &profiles {
                    let target = row[shape.with_action(rep, i, own)];
                    for ai in (0..shape.n_actions(i)).filter(|&x| x != own) {
                        worst = worst.min(target - row[shape.with_action(rep, i, ai)] - iota);
                    }
                }
            }
        }
    }
    MpdseCheck { holds: worst >= -T::margin_tol(), worst_margin: worst }
}
