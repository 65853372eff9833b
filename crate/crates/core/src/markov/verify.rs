//! Monte Carlo verification of a solved attack over the confidence game set.

use serde::Serialize;

use super::{exact_q_bounds, MarkovAttackInstance, MarkovCertificate, QBounds, CERTIFICATE_TOL};
use crate::attack::AttackError;
use crate::confidence::{PlausibleGameSampler, SampleStrategy};
use crate::game::{is_iota_mpdse, mle_game, q_values, JointPolicy, MarkovGame, OfflineDataset};

/// Sampling budget and parallelism of a verification run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    /// Worker threads; `0` means one per available core.
    pub threads: usize,
    /// Largest policy count for which uniqueness of the target equilibrium
    /// is checked by enumeration.
    pub uniqueness_limit: u128,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { samples: 1000, seed: 0, threads: 0, uniqueness_limit: 64 }
    }
}

/// One sample that broke a check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleFailure {
    pub index: u64,
    pub strategy: SampleStrategy,
    /// Worst `Q(target) - Q(deviation) - ι` in the sampled game.
    pub worst_margin: f64,
    /// Which check failed.
    pub reason: String,
    /// Rewards and transitions of the offending game.
    pub rewards: Vec<Vec<Vec<Vec<f64>>>>,
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Outcome of a verification run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub samples: usize,
    pub passes: usize,
    /// Smallest `Q(target) - Q(deviation) - ι` seen over all samples.
    pub worst_margin: f64,
    /// Whether the target is the only equilibrium of the poisoned estimate;
    /// `None` when not checked.
    pub unique: Option<bool>,
    pub failures: Vec<SampleFailure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.passes == self.samples && self.unique != Some(false)
    }
}

/// Failing samples and the worst margin seen by one worker.
type WorkerOutput = Result<(Vec<(u64, SampleStrategy, SampleOutcome, Option<MarkovGame<f64>>)>, f64), AttackError>;

/// Result of checking one sampled game.
struct SampleOutcome {
    worst_margin: f64,
    failure: Option<String>,
}

fn check_sample(inst: &MarkovAttackInstance, exact: &QBounds, cert: Option<&MarkovCertificate>, game: &MarkovGame<f64>, iota: f64) -> SampleOutcome {
    let policy = inst.target();
    let check = is_iota_mpdse(game, policy, iota);
    let worst_margin = check.worst_margin;
    if worst_margin < -CERTIFICATE_TOL {
        return SampleOutcome { worst_margin, failure: Some(format!("separation margin {worst_margin} below zero")) };
    }
    let q = q_values(game, policy).q;
    let tol = CERTIFICATE_TOL;
    let shape = inst.shape();
    for (k, &x) in q.values().iter().enumerate() {
        let (lo, hi) = (exact.q_lower.values()[k], exact.q_upper.values()[k]);
        if x < lo - tol || x > hi + tol {
            return SampleOutcome { worst_margin, failure: Some(format!("Q entry {k} = {x} outside exact bounds [{lo}, {hi}]")) };
        }
        let Some(cert) = cert else { continue };
        let (ll, lu) = (cert.lp_bounds.q_lower.values()[k], cert.lp_bounds.q_upper.values()[k]);
        if (!ll.is_nan() && x < ll - tol) || (!lu.is_nan() && x > lu + tol) {
            return SampleOutcome { worst_margin, failure: Some(format!("Q entry {k} = {x} outside program bounds [{ll}, {lu}]")) };
        }
    }
    let Some(cert) = cert else { return SampleOutcome { worst_margin, failure: None } };
    let (n, hz, ns, nj) = (shape.n_players(), shape.horizon(), shape.n_states(), shape.n_joint());
    for i in 0..n {
        for h in 0..hz.saturating_sub(1) {
            let next_lo: Vec<f64> = (0..ns).map(|s2| cert.lp_bounds.q_lower.get(i, h + 1, s2, policy.action(h + 1, s2))).collect();
            let next_hi: Vec<f64> = (0..ns).map(|s2| cert.lp_bounds.q_upper.get(i, h + 1, s2, policy.action(h + 1, s2))).collect();
            for s in 0..ns {
                for a in 0..nj {
                    let p = game.transitions().row(h, s, a);
                    let inner_lo = cert.lp_inner.q_lower.get(i, h, s, a);
                    if !inner_lo.is_nan() {
                        let e: f64 = p.iter().zip(&next_lo).map(|(p, q)| p * q).sum();
                        if e < inner_lo - tol {
                            return SampleOutcome { worst_margin, failure: Some(format!("lower dual bound {inner_lo} exceeds {e} at ({i},{h},{s},{a})")) };
                        }
                    }
                    let inner_hi = cert.lp_inner.q_upper.get(i, h, s, a);
                    if !inner_hi.is_nan() {
                        let e: f64 = p.iter().zip(&next_hi).map(|(p, q)| p * q).sum();
                        if e > inner_hi + tol {
                            return SampleOutcome { worst_margin, failure: Some(format!("upper dual bound {inner_hi} below {e} at ({i},{h},{s},{a})")) };
                        }
                    }
                }
            }
        }
    }
    SampleOutcome { worst_margin, failure: None }
}

/// Whether `target` is the only deterministic policy that is an
/// equilibrium (with zero margin) of `game`.
pub fn target_is_unique(game: &MarkovGame<f64>, target: &JointPolicy, limit: u128) -> Option<bool> {
    let policies = JointPolicy::enumerate(game.shape(), limit)?;
    Some(policies.iter().filter(|p| *p != target).all(|p| !is_iota_mpdse(game, p, 0.0).holds))
}

/// Samples games from the confidence set around the poisoned estimate and
/// checks that the target policy is an ι-separated equilibrium of each and
/// that its Q values lie within the exact bounds. With a certificate, also
/// checks the program's bounds and that its dual bounds hold for the
/// sampled transitions.
pub fn verify_attack(
    inst: &MarkovAttackInstance,
    certificate: Option<&MarkovCertificate>,
    poisoned: &OfflineDataset,
    opts: &VerifyOptions,
) -> Result<VerifyReport, AttackError> {
    let shape = inst.shape().clone();
    let mle = mle_game(poisoned, inst.bound())?;
    let exact = exact_q_bounds(&shape, &mle.rewards, &inst.mle().transitions, inst.widths(), inst.target(), None);
    let sampler = PlausibleGameSampler::new(
        shape.clone(),
        mle.rewards.clone(),
        inst.mle().transitions.clone(),
        mle.initial_dist.clone(),
        inst.widths().clone(),
        inst.bound(),
        true,
        opts.seed,
    )?;
    let threads = match opts.threads {
        0 => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        t => t,
    }
    .min(opts.samples.max(1));
    let iota = inst.iota();
    let chunks: Vec<WorkerOutput> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let (sampler, exact) = (&sampler, &exact);
                    scope.spawn(move || {
                        let mut out = Vec::new();
                        let mut worst = f64::INFINITY;
                        for idx in (t..opts.samples).step_by(threads) {
                            let strategy = SampleStrategy::ALL[idx % SampleStrategy::ALL.len()];
                            let game = sampler.sample(strategy, idx as u64)?;
                            let outcome = check_sample(inst, exact, certificate, &game, iota);
                            worst = worst.min(outcome.worst_margin);
                            if outcome.failure.is_some() {
                                out.push((idx as u64, strategy, outcome, Some(game)));
                            }
                        }
                        Ok((out, worst))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("verification worker panicked")).collect()
        });
    let mut failures = Vec::new();
    let mut worst_margin = f64::INFINITY;
    for chunk in chunks {
        let (items, worst) = chunk?;
        worst_margin = worst_margin.min(worst);
        for (index, strategy, outcome, game) in items {
            let game = game.expect("failing game retained");
            failures.push(SampleFailure {
                index,
                strategy,
                worst_margin: outcome.worst_margin,
                reason: outcome.failure.unwrap_or_default(),
                rewards: game.rewards().to_nested(),
                transitions: game.transitions().to_nested(),
            });
        }
    }
    failures.sort_by_key(|f| f.index);
    let unique = if iota > 0.0 {
        let game = mle.to_game(&shape)?;
        target_is_unique(&game, inst.target(), opts.uniqueness_limit)
    } else {
        None
    };
    Ok(VerifyReport { samples: opts.samples, passes: opts.samples - failures.len(), worst_margin, unique, failures })
}
