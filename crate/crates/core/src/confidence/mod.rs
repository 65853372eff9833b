//! Confidence widths around the empirical game and sampling of plausible games.
//!
//! A game is plausible when every reward lies within ρ^R of the centre
//! reward (and inside `[-b, b]` when clipping) and every next-state row lies
//! within L1 distance ρ^P of the empirical row.

mod sampler;

pub use sampler::{PlausibleGameSampler, SampleStrategy};

use serde::Serialize;
use thiserror::Error;

use crate::game::{GameError, GameShape, VisitCounts};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfidenceError {
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("widths must be finite and nonnegative")]
    InvalidWidth,
    #[error("hoeffding widths need a finite bound")]
    InfiniteBound,
    #[error("clipped reward interval is empty at (i={i}, h={h}, s={s}, a={a})")]
    EmptySet { i: usize, h: usize, s: usize, a: usize },
    #[error("could not realise a plausible transition row after {0} redraws")]
    SamplingFailed(usize),
    #[error("sampled game left the confidence set: {0}")]
    Membership(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// How a width table was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WidthMode {
    Hoeffding { delta: f64, reward_scale: f64, transition_scale: f64 },
    Constant { rho_r: f64, rho_p: f64 },
    Explicit,
}

/// Reward widths ρ^R_h(s, a) for every period and transition widths
/// ρ^P_h(s, a) for periods `0..H-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceWidths {
    horizon: usize,
    n_states: usize,
    n_joint: usize,
    rho_r: Vec<f64>,
    rho_p: Vec<f64>,
    mode: WidthMode,
}

/// Width tables as nested `[h][s][a]` arrays.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthTables {
    pub rho_r: Vec<Vec<Vec<f64>>>,
    pub rho_p: Vec<Vec<Vec<f64>>>,
    pub mode: WidthMode,
}

/// Parameters of the Hoeffding-type widths
/// `ρ^R = c_R b √(ln(H|S||A|/δ) / max(N, 1))` and `ρ^P = √(|S| β / (N + 1))`
/// with `β = c_P ln(|S||A| H N_total / δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoeffdingConfig {
    pub delta: f64,
    /// `c_R`; 2 by default.
    pub reward_scale: f64,
    /// `c_P`; 1 by default.
    pub transition_scale: f64,
}

impl HoeffdingConfig {
    pub fn new(delta: f64) -> Self {
        Self { delta, reward_scale: 2.0, transition_scale: 1.0 }
    }
}

impl ConfidenceWidths {
    fn check(values: &[f64]) -> Result<(), ConfidenceError> {
        if values.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(ConfidenceError::InvalidWidth)
        }
    }

    /// The same widths in every cell.
    pub fn constant(shape: &GameShape, rho_r: f64, rho_p: f64) -> Result<Self, ConfidenceError> {
        Self::check(&[rho_r, rho_p])?;
        let (hz, ns, nj) = (shape.horizon(), shape.n_states(), shape.n_joint());
        Ok(Self {
            horizon: hz,
            n_states: ns,
            n_joint: nj,
            rho_r: vec![rho_r; hz * ns * nj],
            rho_p: vec![rho_p; (hz - 1) * ns * nj],
            mode: WidthMode::Constant { rho_r, rho_p },
        })
    }

    /// Zero widths: the confidence set is the centre game alone.
    pub fn zero(shape: &GameShape) -> Self {
        Self::constant(shape, 0.0, 0.0).expect("zero widths are valid")
    }

    /// Widths given cell by cell as `[h][s][a]`; `rho_p` has `H - 1` periods.
    pub fn explicit(shape: &GameShape, rho_r: &[Vec<Vec<f64>>], rho_p: &[Vec<Vec<f64>>]) -> Result<Self, ConfidenceError> {
        let (hz, ns, nj) = (shape.horizon(), shape.n_states(), shape.n_joint());
        let flat = |t: &[Vec<Vec<f64>>], periods: usize| -> Result<Vec<f64>, ConfidenceError> {
            if t.len() != periods || t.iter().any(|p| p.len() != ns || p.iter().any(|r| r.len() != nj)) {
                return Err(GameError::ShapeMismatch("width table dimensions".into()).into());
            }
            let v: Vec<f64> = t.iter().flatten().flatten().copied().collect();
            Self::check(&v)?;
            Ok(v)
        };
        Ok(Self { horizon: hz, n_states: ns, n_joint: nj, rho_r: flat(rho_r, hz)?, rho_p: flat(rho_p, hz - 1)?, mode: WidthMode::Explicit })
    }

    fn idx(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.n_states + s) * self.n_joint + a
    }

    /// ρ^R_h(s, a).
    pub fn rho_r(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rho_r[self.idx(h, s, a)]
    }

    /// ρ^P_h(s, a) for `h < H - 1`.
    pub fn rho_p(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rho_p[self.idx(h, s, a)]
    }

    pub fn mode(&self) -> WidthMode {
        self.mode
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Largest reward width.
    pub fn max_rho_r(&self) -> f64 {
        self.rho_r.iter().fold(0.0, |m, &x| m.max(x))
    }

    /// Largest transition width (0 for one-period games).
    pub fn max_rho_p(&self) -> f64 {
        self.rho_p.iter().fold(0.0, |m, &x| m.max(x))
    }

    /// Checks dimensions against `shape`.
    pub fn check_shape(&self, shape: &GameShape) -> Result<(), ConfidenceError> {
        if self.horizon != shape.horizon() || self.n_states != shape.n_states() || self.n_joint != shape.n_joint() {
            return Err(GameError::ShapeMismatch("width table dimensions".into()).into());
        }
        Ok(())
    }

    /// Reward widths of period `h` as a one-period table.
    pub fn period(&self, h: usize) -> Self {
        let len = self.n_states * self.n_joint;
        Self {
            horizon: 1,
            n_states: self.n_states,
            n_joint: self.n_joint,
            rho_r: self.rho_r[h * len..(h + 1) * len].to_vec(),
            rho_p: Vec::new(),
            mode: self.mode,
        }
    }

    /// Nested `[h][s][a]` tables for reports.
    pub fn tables(&self) -> WidthTables {
        let nest = |v: &[f64], periods: usize| -> Vec<Vec<Vec<f64>>> {
            (0..periods)
                .map(|h| (0..self.n_states).map(|s| (0..self.n_joint).map(|a| v[self.idx(h, s, a)]).collect()).collect())
                .collect()
        };
        WidthTables { rho_r: nest(&self.rho_r, self.horizon), rho_p: nest(&self.rho_p, self.horizon - 1), mode: self.mode }
    }
}

/// Hoeffding-type widths from visit counts.
pub fn hoeffding_widths(
    counts: &VisitCounts,
    shape: &GameShape,
    bound: f64,
    config: &HoeffdingConfig,
) -> Result<ConfidenceWidths, ConfidenceError> {
    let delta = config.delta;
    if delta.is_nan() || delta <= 0.0 || delta >= 1.0 {
        return Err(ConfidenceError::InvalidDelta(delta));
    }
    if !bound.is_finite() {
        return Err(ConfidenceError::InfiniteBound);
    }
    if !(config.reward_scale >= 0.0 && config.transition_scale >= 0.0) {
        return Err(ConfidenceError::InvalidWidth);
    }
    let (hz, ns, nj) = (shape.horizon(), shape.n_states(), shape.n_joint());
    if counts.horizon() != hz || counts.n_states() != ns || counts.n_joint() != nj {
        return Err(GameError::ShapeMismatch("counts do not match shape".into()).into());
    }
    let log_r = ((hz * ns * nj) as f64 / delta).ln();
    let n_total: u64 = (0..hz).map(|h| counts.period_total(h)).sum();
    let beta = config.transition_scale * ((ns * nj * hz) as f64 * (n_total.max(1)) as f64 / delta).ln();
    let mut rho_r = Vec::with_capacity(hz * ns * nj);
    let mut rho_p = Vec::with_capacity((hz - 1) * ns * nj);
    for h in 0..hz {
        for s in 0..ns {
            for a in 0..nj {
                let n = counts.get(h, s, a) as f64;
                rho_r.push(config.reward_scale * bound * (log_r / n.max(1.0)).sqrt());
                if h + 1 < hz {
                    rho_p.push((ns as f64 * beta / (n + 1.0)).sqrt());
                }
            }
        }
    }
    Ok(ConfidenceWidths {
        horizon: hz,
        n_states: ns,
        n_joint: nj,
        rho_r,
        rho_p,
        mode: WidthMode::Hoeffding { delta, reward_scale: config.reward_scale, transition_scale: config.transition_scale },
    })
}

/// Whether the uniform distribution lies within L1 distance `rho_p` of `p_hat`.
pub fn uniform_transition_in_ci(p_hat: &[f64], rho_p: f64, n_states: usize) -> bool {
    let u = 1.0 / n_states as f64;
    let dist: f64 = p_hat.iter().map(|&p| (p - u).abs()).sum();
    dist <= rho_p + 1e-12
}
