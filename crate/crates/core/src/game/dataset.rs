//! Offline datasets, visit counts and maximum-likelihood estimates.

use serde::{Deserialize, Serialize};

use super::{Cell, GameError, GameShape, MarkovGame, RewardTable, TransitionTable};

/// One recorded transition step: state, joint action tuple, reward vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub s: usize,
    pub a: Vec<usize>,
    pub r: Vec<f64>,
}

/// One episode of exactly `H` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<Step>,
}

/// K episodes of H steps each, validated against a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    shape: GameShape,
    episodes: Vec<Episode>,
    joint: Vec<usize>,
}

impl OfflineDataset {
    pub fn new(shape: GameShape, episodes: Vec<Episode>) -> Result<Self, GameError> {
        let hz = shape.horizon();
        let mut joint = Vec::with_capacity(episodes.len() * hz);
        for (k, ep) in episodes.iter().enumerate() {
            if ep.steps.len() != hz {
                return Err(GameError::EpisodeLength { episode: k, len: ep.steps.len(), expected: hz });
            }
            for step in &ep.steps {
                shape.check_state(step.s)?;
                joint.push(shape.joint_index(&step.a)?);
                if step.r.len() != shape.n_players() {
                    return Err(GameError::ShapeMismatch(format!("episode {k}: reward vector length {}", step.r.len())));
                }
                if step.r.iter().any(|r| !r.is_finite()) {
                    return Err(GameError::ShapeMismatch(format!("episode {k}: non-finite reward")));
                }
            }
        }
        Ok(Self { shape, episodes, joint })
    }

    pub fn shape(&self) -> &GameShape {
        &self.shape
    }
    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }
    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn step(&self, k: usize, h: usize) -> &Step {
        &self.episodes[k].steps[h]
    }

    /// Joint action index of episode `k` at period `h`.
    pub fn joint(&self, k: usize, h: usize) -> usize {
        self.joint[k * self.shape.horizon() + h]
    }

    pub fn reward(&self, k: usize, h: usize, i: usize) -> f64 {
        self.episodes[k].steps[h].r[i]
    }

    /// Episode indices visiting each cell, laid out as `[(h * S + s) * |A| + a]`.
    pub fn cell_members(&self) -> Vec<Vec<usize>> {
        let (ns, nj) = (self.shape.n_states(), self.shape.n_joint());
        let mut members = vec![Vec::new(); self.shape.horizon() * ns * nj];
        for k in 0..self.n_episodes() {
            for h in 0..self.shape.horizon() {
                let s = self.step(k, h).s;
                members[(h * ns + s) * nj + self.joint(k, h)].push(k);
            }
        }
        members
    }

    /// Copy with every reward replaced by `f(k, h, i)`.
    pub fn with_rewards(&self, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut out = self.clone();
        for (k, ep) in out.episodes.iter_mut().enumerate() {
            for (h, step) in ep.steps.iter_mut().enumerate() {
                for (i, r) in step.r.iter_mut().enumerate() {
                    *r = f(k, h, i);
                }
            }
        }
        out
    }

    /// One-period dataset holding every episode's step at period `h`.
    pub fn period(&self, h: usize) -> Self {
        let shape = self.shape.reshaped(self.shape.n_states(), 1).expect("valid shape");
        let episodes = self.episodes.iter().map(|ep| Episode { steps: vec![ep.steps[h].clone()] }).collect();
        let joint = (0..self.n_episodes()).map(|k| self.joint(k, h)).collect();
        Self { shape, episodes, joint }
    }

    /// Largest absolute reward in the dataset.
    pub fn max_abs_reward(&self) -> f64 {
        self.episodes.iter().flat_map(|e| &e.steps).flat_map(|s| &s.r).fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Visit counts N_h(s, a).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VisitCounts {
    horizon: usize,
    n_states: usize,
    n_joint: usize,
    counts: Vec<u64>,
}

impl VisitCounts {
    pub fn get(&self, h: usize, s: usize, a: usize) -> u64 {
        self.counts[(h * self.n_states + s) * self.n_joint + a]
    }

    /// Smallest count over all cells.
    pub fn min(&self) -> u64 {
        self.counts.iter().copied().min().unwrap_or(0)
    }
    /// Largest count over all cells.
    pub fn max(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    fn period_slice(&self, h: usize) -> &[u64] {
        let len = self.n_states * self.n_joint;
        &self.counts[h * len..(h + 1) * len]
    }

    /// Smallest count within period `h`.
    pub fn period_min(&self, h: usize) -> u64 {
        self.period_slice(h).iter().copied().min().unwrap_or(0)
    }
    /// Largest count within period `h`.
    pub fn period_max(&self, h: usize) -> u64 {
        self.period_slice(h).iter().copied().max().unwrap_or(0)
    }
    /// Sum of counts within period `h` (the episode count).
    pub fn period_total(&self, h: usize) -> u64 {
        self.period_slice(h).iter().sum()
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

    /// Nested `[h][s][a]` counts.
    pub fn to_nested(&self) -> Vec<Vec<Vec<u64>>> {
        (0..self.horizon)
            .map(|h| (0..self.n_states).map(|s| (0..self.n_joint).map(|a| self.get(h, s, a)).collect()).collect())
            .collect()
    }
}

/// Tallies N_h(s, a) over the dataset.
pub fn visit_counts(dataset: &OfflineDataset) -> VisitCounts {
    let shape = dataset.shape();
    let (ns, nj) = (shape.n_states(), shape.n_joint());
    let mut counts = vec![0u64; shape.horizon() * ns * nj];
    for k in 0..dataset.n_episodes() {
        for h in 0..shape.horizon() {
            counts[(h * ns + dataset.step(k, h).s) * nj + dataset.joint(k, h)] += 1;
        }
    }
    VisitCounts { horizon: shape.horizon(), n_states: ns, n_joint: nj, counts }
}

/// Outcome of the full-coverage check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub satisfied: bool,
    pub uncovered: Vec<Cell>,
}

/// Lists every cell with zero visits.
pub fn check_full_coverage(counts: &VisitCounts) -> CoverageReport {
    let mut uncovered = Vec::new();
    for h in 0..counts.horizon {
        for s in 0..counts.n_states {
            for a in 0..counts.n_joint {
                if counts.get(h, s, a) == 0 {
                    uncovered.push(Cell { h, s, a });
                }
            }
        }
    }
    CoverageReport { satisfied: uncovered.is_empty(), uncovered }
}

/// Empirical rewards, transitions and initial distribution of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MleEstimate {
    pub rewards: RewardTable<f64>,
    pub transitions: TransitionTable<f64>,
    pub initial_dist: Vec<f64>,
    pub counts: VisitCounts,
    pub bound: f64,
}

impl MleEstimate {
    /// The estimate as a game; fails if a mean reward leaves `[-b, b]`.
    pub fn to_game(&self, shape: &GameShape) -> Result<MarkovGame<f64>, GameError> {
        MarkovGame::new(shape.clone(), self.transitions.clone(), self.rewards.clone(), self.initial_dist.clone(), self.bound)
    }
}

/// Cell means of rewards and empirical next-state frequencies.
///
/// Refuses to fill uncovered cells with defaults.
pub fn mle_game(dataset: &OfflineDataset, bound: f64) -> Result<MleEstimate, GameError> {
    if bound.is_nan() || bound <= 0.0 {
        return Err(GameError::InvalidBound);
    }
    let shape = dataset.shape();
    let counts = visit_counts(dataset);
    let coverage = check_full_coverage(&counts);
    if !coverage.satisfied {
        return Err(GameError::UncoveredCell(coverage.uncovered));
    }
    let (n, hz, ns, nj) = (shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint());
    let mut rewards = RewardTable::filled(shape, 0.0);
    let mut next = vec![0u64; hz.saturating_sub(1) * ns * nj * ns];
    let mut initial = vec![0.0; ns];
    for k in 0..dataset.n_episodes() {
        initial[dataset.step(k, 0).s] += 1.0;
        for h in 0..hz {
            let step = dataset.step(k, h);
            let a = dataset.joint(k, h);
            for i in 0..n {
                let cur = rewards.get(i, h, step.s, a);
                rewards.set(i, h, step.s, a, cur + step.r[i]);
            }
            if h + 1 < hz {
                next[((h * ns + step.s) * nj + a) * ns + dataset.step(k, h + 1).s] += 1;
            }
        }
    }
    for i in 0..n {
        for h in 0..hz {
            for s in 0..ns {
                for a in 0..nj {
                    let sum = rewards.get(i, h, s, a);
                    rewards.set(i, h, s, a, sum / counts.get(h, s, a) as f64);
                }
            }
        }
    }
    let transitions = TransitionTable::from_rows(shape, |h, s, a| {
        let total = counts.get(h, s, a) as f64;
        let o = ((h * ns + s) * nj + a) * ns;
        next[o..o + ns].iter().map(|&c| c as f64 / total).collect()
    })?;
    let k = dataset.n_episodes() as f64;
    initial.iter_mut().for_each(|x| *x /= k);
    Ok(MleEstimate { rewards, transitions, initial_dist: initial, counts, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example_game() -> OfflineDataset {
        let shape = GameShape::new(1, vec![2, 2], 1).unwrap();
        let payoff = [[3.0, 3.0], [1.0, 2.0], [2.0, 1.0], [0.0, 0.0]];
        let tuples = [[0, 0], [0, 1], [1, 0], [1, 1]];
        let episodes = tuples
            .iter()
            .zip(payoff)
            .map(|(a, r)| Episode { steps: vec![Step { s: 0, a: a.to_vec(), r: r.to_vec() }] })
            .collect();
        OfflineDataset::new(shape, episodes).unwrap()
    }

    fn random_dataset(seed: u64, k: usize) -> OfflineDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = GameShape::new(2, vec![2, 2], 2).unwrap();
        let episodes = (0..k)
            .map(|_| Episode {
                steps: (0..2)
                    .map(|_| Step {
                        s: rng.gen_range(0..2),
                        a: vec![rng.gen_range(0..2), rng.gen_range(0..2)],
                        r: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    })
                    .collect(),
            })
            .collect();
        OfflineDataset::new(shape, episodes).unwrap()
    }

    #[test]
    fn single_step_tally() {
        let shape = GameShape::new(2, vec![2, 2], 1).unwrap();
        let ds = OfflineDataset::new(shape, vec![Episode { steps: vec![Step { s: 0, a: vec![0, 0], r: vec![0.5, 0.5] }] }]).unwrap();
        let c = visit_counts(&ds);
        assert_eq!(c.get(0, 0, 0), 1);
        assert_eq!(c.counts.iter().sum::<u64>(), 1);
        assert_eq!(c.min(), 0);
        let cov = check_full_coverage(&c);
        assert!(!cov.satisfied);
        assert_eq!(cov.uncovered.len(), 7);
        assert!(matches!(mle_game(&ds, 1.0), Err(GameError::UncoveredCell(_))));
    }

    #[test]
    fn counts_match_recount() {
        let ds = random_dataset(3, 20);
        let c = visit_counts(&ds);
        for h in 0..2 {
            assert_eq!(c.period_total(h), 20);
            for s in 0..2 {
                for a in 0..4 {
                    let recount = ds
                        .episodes()
                        .iter()
                        .filter(|e| e.steps[h].s == s && ds.shape().joint_index(&e.steps[h].a).unwrap() == a)
                        .count() as u64;
                    assert_eq!(c.get(h, s, a), recount);
                }
            }
        }
    }

    #[test]
    fn mle_reproduces_payoff_table() {
        let ds = example_game();
        let mle = mle_game(&ds, 3.0).unwrap();
        assert_eq!(mle.rewards.row(0, 0, 0), &[3.0, 1.0, 2.0, 0.0]);
        assert_eq!(mle.rewards.row(1, 0, 0), &[3.0, 2.0, 1.0, 0.0]);
        assert_eq!(mle.transitions.periods(), 0);
        assert!(mle.to_game(ds.shape()).is_ok());
    }

    #[test]
    fn single_episode_mean_is_its_reward() {
        let shape = GameShape::new(1, vec![1], 1).unwrap();
        let ds = OfflineDataset::new(shape, vec![Episode { steps: vec![Step { s: 0, a: vec![0], r: vec![0.5] }] }]).unwrap();
        assert_eq!(mle_game(&ds, 1.0).unwrap().rewards.get(0, 0, 0, 0), 0.5);
    }

    #[test]
    fn episode_length_validated() {
        let shape = GameShape::new(1, vec![1], 2).unwrap();
        let err = OfflineDataset::new(shape, vec![Episode { steps: vec![Step { s: 0, a: vec![0], r: vec![0.0] }] }]).unwrap_err();
        assert!(matches!(err, GameError::EpisodeLength { .. }));
    }

    proptest! {
        #[test]
        fn cell_means_invariant_under_within_cell_permutation(seed in 0u64..500) {
            let ds = random_dataset(seed, 40);
            if !check_full_coverage(&visit_counts(&ds)).satisfied { return Ok(()); }
            let members = ds.cell_members();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let mut perm = vec![vec![0usize; 2]; 40];
            for (k, p) in perm.iter_mut().enumerate() { p[0] = k; p[1] = k; }
            for (c, m) in members.iter().enumerate() {
                let h = c / 8;
                let mut shuffled = m.clone();
                for x in (1..shuffled.len()).rev() { shuffled.swap(x, rng.gen_range(0..=x)); }
                for (src, dst) in m.iter().zip(&shuffled) { perm[*dst][h] = *src; }
            }
            let permuted = ds.with_rewards(|k, h, i| ds.reward(perm[k][h], h, i));
            let a = mle_game(&ds, 1.0).unwrap();
            let b = mle_game(&permuted, 1.0).unwrap();
            for (x, y) in a.rewards.values().iter().zip(b.rewards.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
