//! Dataset generators: the two-player example game, the worst-case pattern
//! and randomly generated fully covered datasets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::game::{Episode, GameError, GameShape, JointPolicy, OfflineDataset, Step};

/// Reward bound of the two-player example game.
pub const EXAMPLE_GAME_BOUND: f64 = 3.0;

/// Payoffs `(r_1, r_2)` of the two-player example game, joint actions in
/// mixed-radix order. Joint action `(0, 0)` is already strictly dominant.
pub const EXAMPLE_GAME_PAYOFFS: [[f64; 2]; 4] = [[3.0, 3.0], [1.0, 2.0], [2.0, 1.0], [0.0, 0.0]];

/// One-state one-period dataset with `counts[a]` copies of `payoffs[a]`.
pub fn bandit_dataset(actions: Vec<usize>, payoffs: &[Vec<f64>], counts: &[usize]) -> Result<OfflineDataset, GameError> {
    let shape = GameShape::new(1, actions, 1)?;
    if payoffs.len() != shape.n_joint() || counts.len() != shape.n_joint() {
        return Err(GameError::ShapeMismatch(format!("expected {} payoff rows and counts", shape.n_joint())));
    }
    let mut episodes = Vec::new();
    for (a, (&c, r)) in counts.iter().zip(payoffs).enumerate() {
        for _ in 0..c {
            episodes.push(Episode { steps: vec![Step { s: 0, a: shape.joint_tuple(a), r: r.clone() }] });
        }
    }
    OfflineDataset::new(shape, episodes)
}

/// The two-player example game with `counts[a]` visits per joint action.
pub fn example_game_dataset(counts: &[usize]) -> Result<OfflineDataset, GameError> {
    let p: Vec<Vec<f64>> = EXAMPLE_GAME_PAYOFFS.iter().map(|r| r.to_vec()).collect();
    bandit_dataset(vec![2, 2], &p, counts)
}

/// Worst-case pattern: player `i` receives `-b` when playing action 0 and
/// `+b` otherwise; every `(h, s, a)` cell is visited exactly `visits` times
/// and next states cycle through all states, so `P̂` is uniform whenever
/// `n_states` divides `visits`.
pub fn worst_case_dataset(n: usize, actions: usize, n_states: usize, horizon: usize, visits: usize, bound: f64) -> Result<OfflineDataset, GameError> {
    let shape = GameShape::symmetric(n, actions, n_states, horizon)?;
    let nj = shape.n_joint();
    let cells = n_states * nj;
    let mut episodes = Vec::with_capacity(visits * cells);
    for m in 0..visits {
        for c in 0..cells {
            let (s0, a) = (c / nj, c % nj);
            let tuple = shape.joint_tuple(a);
            let r: Vec<f64> = tuple.iter().map(|&x| if x == 0 { -bound } else { bound }).collect();
            let steps = (0..horizon).map(|h| Step { s: (s0 + h * m) % n_states, a: tuple.clone(), r: r.clone() }).collect();
            episodes.push(Episode { steps });
        }
    }
    OfflineDataset::new(shape, episodes)
}

/// Parameters of a random fully covered dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomDatasetSpec {
    /// Each `(h, s, a)` cell receives a uniform count in
    /// `[min_visits, max_visits]`; periods with fewer visits are padded
    /// with uniformly drawn cells.
    pub min_visits: usize,
    pub max_visits: usize,
    pub bound: f64,
    /// Half-width of the uniform noise around each cell's mean reward.
    pub noise: f64,
}

/// Random fully covered dataset. Cell means are uniform in `[-b, b]` and
/// rewards are clamped to `[-b, b]` after noise.
pub fn random_dataset(shape: &GameShape, spec: &RandomDatasetSpec, seed: u64) -> Result<OfflineDataset, GameError> {
    if spec.min_visits == 0 || spec.max_visits < spec.min_visits {
        return Err(GameError::ShapeMismatch("visit range must satisfy 1 <= min <= max".into()));
    }
    if !(spec.bound.is_finite() && spec.bound > 0.0) {
        return Err(GameError::InvalidBound);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, hz, ns, nj) = (shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint());
    let cells = ns * nj;
    let b = spec.bound;
    let means: Vec<f64> = (0..n * hz * cells).map(|_| rng.gen_range(-b..=b)).collect();
    let mut per_period: Vec<Vec<usize>> = (0..hz)
        .map(|_| (0..cells).flat_map(|c| std::iter::repeat_n(c, rng.gen_range(spec.min_visits..=spec.max_visits))).collect())
        .collect();
    let k = per_period.iter().map(Vec::len).max().unwrap_or(0);
    for list in &mut per_period {
        while list.len() < k {
            list.push(rng.gen_range(0..cells));
        }
        list.shuffle(&mut rng);
    }
    let episodes = (0..k)
        .map(|e| Episode {
            steps: (0..hz)
                .map(|h| {
                    let c = per_period[h][e];
                    let r = (0..n)
                        .map(|i| {
                            let m = means[(i * hz + h) * cells + c];
                            let noise = if spec.noise > 0.0 { rng.gen_range(-spec.noise..=spec.noise) } else { 0.0 };
                            (m + noise).clamp(-b, b)
                        })
                        .collect();
                    Step { s: c / nj, a: shape.joint_tuple(c % nj), r }
                })
                .collect(),
        })
        .collect();
    OfflineDataset::new(shape.clone(), episodes)
}

/// Uniformly random deterministic joint policy.
pub fn random_policy(shape: &GameShape, rng: &mut impl Rng) -> JointPolicy {
    let table: Vec<Vec<usize>> = (0..shape.horizon()).map(|_| (0..shape.n_states()).map(|_| rng.gen_range(0..shape.n_joint())).collect()).collect();
    JointPolicy::from_joint_table(shape, &table).expect("indices drawn in range")
}
