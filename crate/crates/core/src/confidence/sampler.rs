//! Seeded sampling of games from the confidence game set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ConfidenceError, ConfidenceWidths};
use crate::game::{GameError, GameShape, MarkovGame, RewardTable, TransitionTable};

const MAX_REDRAWS: usize = 100;
const MEMBERSHIP_TOL: f64 = 1e-9;

/// How a plausible game is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStrategy {
    /// Rewards at random interval endpoints, transitions at the centre.
    ExtremeRewards,
    /// Rewards uniform in their intervals, transitions at random interior points.
    RandomInterior,
    /// Endpoint rewards and rows moved by ρ^P/2 between two random states.
    L1VertexTransitions,
}

impl SampleStrategy {
    pub const ALL: [SampleStrategy; 3] = [Self::ExtremeRewards, Self::L1VertexTransitions, Self::RandomInterior];
}

/// Centre game plus widths; each sample is a pure function of
/// `(seed, index, strategy)`.
#[derive(Debug, Clone)]
pub struct PlausibleGameSampler {
    shape: GameShape,
    center_rewards: RewardTable<f64>,
    center_transitions: TransitionTable<f64>,
    initial_dist: Vec<f64>,
    widths: ConfidenceWidths,
    bound: f64,
    clip_rewards: bool,
    seed: u64,
}

impl PlausibleGameSampler {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        shape: GameShape,
        center_rewards: RewardTable<f64>,
        center_transitions: TransitionTable<f64>,
        initial_dist: Vec<f64>,
        widths: ConfidenceWidths,
        bound: f64,
        clip_rewards: bool,
        seed: u64,
    ) -> Result<Self, ConfidenceError> {
        widths.check_shape(&shape)?;
        if center_rewards.n_players() != shape.n_players()
            || center_rewards.horizon() != shape.horizon()
            || center_rewards.n_states() != shape.n_states()
            || center_rewards.n_joint() != shape.n_joint()
            || center_transitions.periods() + 1 != shape.horizon()
        {
            return Err(GameError::ShapeMismatch("sampler centre dimensions".into()).into());
        }
        let sampler = Self { shape, center_rewards, center_transitions, initial_dist, widths, bound, clip_rewards, seed };
        for i in 0..sampler.shape.n_players() {
            for h in 0..sampler.shape.horizon() {
                for s in 0..sampler.shape.n_states() {
                    for a in 0..sampler.shape.n_joint() {
                        let (lo, hi) = sampler.reward_interval(i, h, s, a);
                        if lo > hi {
                            return Err(ConfidenceError::EmptySet { i, h, s, a });
                        }
                    }
                }
            }
        }
        Ok(sampler)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn shape(&self) -> &GameShape {
        &self.shape
    }

    /// Plausible reward interval of one entry.
    pub fn reward_interval(&self, i: usize, h: usize, s: usize, a: usize) -> (f64, f64) {
        let c = self.center_rewards.get(i, h, s, a);
        let w = self.widths.rho_r(h, s, a);
        if self.clip_rewards {
            ((c - w).max(-self.bound), (c + w).min(self.bound))
        } else {
            (c - w, c + w)
        }
    }

    fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    fn bound_for_game(&self) -> f64 {
        if self.clip_rewards {
            self.bound
        } else {
            let worst = self.center_rewards.values().iter().fold(0.0f64, |m, r| m.max(r.abs())) + self.widths.max_rho_r();
            self.bound.max(worst)
        }
    }

    fn assemble(&self, rewards: RewardTable<f64>, transitions: TransitionTable<f64>) -> Result<MarkovGame<f64>, ConfidenceError> {
        let game = MarkovGame::new(self.shape.clone(), transitions, rewards, self.initial_dist.clone(), self.bound_for_game())?;
        self.check_membership(&game)?;
        Ok(game)
    }

    /// Draws sample number `index` with the given strategy.
    pub fn sample(&self, strategy: SampleStrategy, index: u64) -> Result<MarkovGame<f64>, ConfidenceError> {
        let mut rng = self.rng(index);
        let rewards = match strategy {
            SampleStrategy::RandomInterior => RewardTable::from_fn(&self.shape, |i, h, s, a| {
                let (lo, hi) = self.reward_interval(i, h, s, a);
                if hi > lo {
                    rng.gen_range(lo..=hi)
                } else {
                    lo
                }
            }),
            _ => RewardTable::from_fn(&self.shape, |i, h, s, a| {
                let (lo, hi) = self.reward_interval(i, h, s, a);
                if rng.gen_bool(0.5) {
                    hi
                } else {
                    lo
                }
            }),
        };
        let mut transitions = self.center_transitions.clone();
        if strategy != SampleStrategy::ExtremeRewards {
            for h in 0..transitions.periods() {
                for s in 0..self.shape.n_states() {
                    for a in 0..self.shape.n_joint() {
                        let rho = self.widths.rho_p(h, s, a);
                        let center = self.center_transitions.row(h, s, a);
                        let row = match strategy {
                            SampleStrategy::L1VertexTransitions => vertex_row(center, rho, &mut rng)?,
                            _ => interior_row(center, rho, &mut rng),
                        };
                        transitions.row_mut(h, s, a).copy_from_slice(&row);
                    }
                }
            }
        }
        self.assemble(rewards, transitions)
    }

    /// Rewards at the upper endpoint where `upper(i, h, s, a)` is true and
    /// the lower endpoint elsewhere; transitions at the centre.
    pub fn extreme_game(&self, mut upper: impl FnMut(usize, usize, usize, usize) -> bool) -> Result<MarkovGame<f64>, ConfidenceError> {
        let rewards = RewardTable::from_fn(&self.shape, |i, h, s, a| {
            let (lo, hi) = self.reward_interval(i, h, s, a);
            if upper(i, h, s, a) {
                hi
            } else {
                lo
            }
        });
        self.assemble(rewards, self.center_transitions.clone())
    }

    /// Checks that `game` lies in the confidence game set of this sampler.
    pub fn check_membership(&self, game: &MarkovGame<f64>) -> Result<(), ConfidenceError> {
        let shape = &self.shape;
        for i in 0..shape.n_players() {
            for h in 0..shape.horizon() {
                for s in 0..shape.n_states() {
                    for a in 0..shape.n_joint() {
                        let (lo, hi) = self.reward_interval(i, h, s, a);
                        let r = game.rewards().get(i, h, s, a);
                        if r < lo - MEMBERSHIP_TOL || r > hi + MEMBERSHIP_TOL {
                            return Err(ConfidenceError::Membership(format!("reward (i={i}, h={h}, s={s}, a={a}) = {r} outside [{lo}, {hi}]")));
                        }
                    }
                }
            }
        }
        for h in 0..shape.horizon() - 1 {
            for s in 0..shape.n_states() {
                for a in 0..shape.n_joint() {
                    let d = l1(game.transitions().row(h, s, a), self.center_transitions.row(h, s, a));
                    if d > self.widths.rho_p(h, s, a) + MEMBERSHIP_TOL {
                        return Err(ConfidenceError::Membership(format!("transition (h={h}, s={s}, a={a}) at L1 distance {d}")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn l1(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum()
}

/// Moves ρ/2 mass between two distinct random states, then clamps negatives
/// and renormalises; redraws when the result leaves the L1 ball.
fn vertex_row(center: &[f64], rho: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, ConfidenceError> {
    let n = center.len();
    if n < 2 || rho == 0.0 {
        return Ok(center.to_vec());
    }
    for _ in 0..MAX_REDRAWS {
        let from = rng.gen_range(0..n);
        let to = (from + rng.gen_range(1..n)) % n;
        let mut p = center.to_vec();
        p[from] -= rho / 2.0;
        p[to] += rho / 2.0;
        p.iter_mut().for_each(|x| *x = x.max(0.0));
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        if l1(&p, center) <= rho + 1e-12 {
            return Ok(p);
        }
    }
    Err(ConfidenceError::SamplingFailed(MAX_REDRAWS))
}

/// Uniform draw from the simplex, accepted when inside the L1 ball; after
/// repeated rejection, a random point on the segment towards it.
fn interior_row(center: &[f64], rho: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = center.len();
    if n < 2 || rho == 0.0 {
        return center.to_vec();
    }
    let mut draw = || {
        let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|x| x / total).collect::<Vec<_>>()
    };
    for _ in 0..32 {
        let q = draw();
        if l1(&q, center) <= rho {
            return q;
        }
    }
    let q = draw();
    let d = l1(&q, center);
    let t = rng.gen::<f64>() * (rho / d).min(1.0);
    center.iter().zip(&q).map(|(c, x)| c + t * (x - c)).collect()
}
