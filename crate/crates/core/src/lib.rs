//! Reward-poisoning attacks on offline multi-agent reinforcement learning.
//!
//! The crate builds minimal-L1 reward perturbations of an offline dataset so
//! that a chosen deterministic joint policy becomes the ι-strict Markov
//! perfect dominant-strategy equilibrium of every game consistent with the
//! dataset's confidence sets, and provides the tooling to check that claim.

pub mod attack;
pub mod bandit;
pub mod confidence;
pub mod cost;
pub mod game;
pub mod generators;
pub mod io;
pub mod learners;
pub mod lp;
pub mod markov;
pub mod scalar;

pub use scalar::Scalar;

/// Markov game over `f64`.
pub type Game = game::MarkovGame<f64>;
/// LP model over `f64`.
pub type Lp = lp::LpModel<f64>;
/// LP solution over `f64`.
pub type LpSol = lp::LpSolution<f64>;
