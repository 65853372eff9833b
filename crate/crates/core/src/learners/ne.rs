//! Pure-strategy equilibrium search in one normal-form stage game.

use serde::Serialize;

use crate::game::GameShape;

/// Slack below which payoff differences count as ties.
pub const NE_TOL: f64 = 1e-12;

/// How the stage-game action was selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NeStatus {
    /// Every player's action strictly beats each alternative against every
    /// opponent profile.
    StrictDse,
    /// No strictly dominant profile; a pure equilibrium was found.
    PureNe,
    /// No pure equilibrium exists.
    NoneFound,
}

/// Selected joint action with the full list of pure equilibria.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeOutcome {
    pub action: Option<usize>,
    pub status: NeStatus,
    /// Every pure equilibrium in joint-index order.
    pub pure_equilibria: Vec<usize>,
}

/// Action of `player` that strictly beats every alternative against every
/// opponent profile, if one exists.
fn strictly_dominant(shape: &GameShape, payoff: &[f64], player: usize) -> Option<usize> {
    let profiles = shape.opponent_profiles(player);
    (0..shape.n_actions(player)).find(|&x| {
        profiles.iter().all(|&rep| {
            let v = payoff[shape.with_action(rep, player, x)];
            (0..shape.n_actions(player)).filter(|&y| y != x).all(|y| v > payoff[shape.with_action(rep, player, y)] + NE_TOL)
        })
    })
}

/// Equilibrium of the stage game with payoffs `q[i][a]` over joint actions.
///
/// Returns the strictly dominant profile when every player has a strictly
/// dominant action; otherwise the first pure equilibrium in joint-index
/// (lexicographic) order; otherwise nothing.
pub fn ne_oracle(shape: &GameShape, q: &[&[f64]]) -> NeOutcome {
    let n = shape.n_players();
    assert_eq!(q.len(), n, "one payoff row per player");
    let nj = shape.n_joint();
    let pure_equilibria: Vec<usize> = (0..nj)
        .filter(|&a| {
            (0..n).all(|i| {
                let v = q[i][a];
                (0..shape.n_actions(i)).all(|y| q[i][shape.with_action(a, i, y)] <= v + NE_TOL)
            })
        })
        .collect();
    let dominant: Option<Vec<usize>> = (0..n).map(|i| strictly_dominant(shape, q[i], i)).collect();
    if let Some(tuple) = dominant {
        let a = shape.joint_index(&tuple).expect("actions in range");
        return NeOutcome { action: Some(a), status: NeStatus::StrictDse, pure_equilibria };
    }
    match pure_equilibria.first() {
        Some(&a) => NeOutcome { action: Some(a), status: NeStatus::PureNe, pure_equilibria },
        None => NeOutcome { action: None, status: NeStatus::NoneFound, pure_equilibria },
    }
}
