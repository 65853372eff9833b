//! Bounded revised simplex with a dense basis inverse.
//!
//! Every row `A_r x ≤/=/≥ b_r` becomes `A_r x + s_r = b_r` with a bounded
//! slack (`[0, ∞)`, `[0, 0]` or `(-∞, 0]`). Rows whose slack cannot absorb
//! the initial residual get an artificial column; phase one drives the
//! artificials to zero, after which they are fixed at zero for phase two.

use super::{LpError, LpModel, LpSolution, LpStatus, Sense};
use crate::scalar::Scalar;

/// Solver limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimplexOptions {
    /// Total pivot budget across both phases.
    pub max_pivots: usize,
    /// Consecutive degenerate pivots after which Bland's rule takes over.
    pub bland_after: usize,
    /// Pivots between recomputation of duals and basic values.
    pub refresh_every: usize,
    /// Pivots between full reinversions of the basis.
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_pivots: 50_000, bland_after: 1_000, refresh_every: 50, refactor_every: 1_000 }
    }
}

/// Solves `model` with default options.
pub fn solve<T: Scalar>(model: &LpModel<T>) -> Result<LpSolution<T>, LpError> {
    solve_with(model, &SimplexOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable sitting at zero.
    Zero,
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Simplex<'a, T> {
    m: usize,
    cols: Vec<Vec<(usize, T)>>,
    lower: Vec<T>,
    upper: Vec<T>,
    rhs: Vec<T>,
    x: Vec<T>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: Vec<T>,
    cost: Vec<T>,
    y: Vec<T>,
    n_art_start: usize,
    pivots: usize,
    since_refresh: usize,
    since_refactor: usize,
    degenerate_run: usize,
    opts: &'a SimplexOptions,
}

/// Solves `model` with explicit limits.
pub fn solve_with<T: Scalar>(model: &LpModel<T>, opts: &SimplexOptions) -> Result<LpSolution<T>, LpError> {
    model.validate()?;
    let n = model.n_vars();
    let m = model.n_constraints();
    let mut sx = Simplex::build(model, opts);

    if sx.n_art_start < sx.cols.len() {
        let mut phase1 = vec![T::zero(); sx.cols.len()];
        for c in phase1.iter_mut().skip(sx.n_art_start) {
            *c = T::one();
        }
        sx.set_cost(phase1);
        sx.run()?;
        sx.refresh();
        let infeas: T = (sx.n_art_start..sx.cols.len()).map(|j| sx.x[j]).sum();
        let scale = sx.rhs.iter().fold(T::one(), |acc, r| acc.max(r.abs()));
        if infeas > T::residual_tol() * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                values: sx.x[..n].to_vec(),
                objective_value: T::nan(),
                duals: vec![T::zero(); m],
                reduced_costs: vec![T::zero(); n],
                pivots: sx.pivots,
            });
        }
        sx.retire_artificials();
    }

    let mut phase2 = vec![T::zero(); sx.cols.len()];
    phase2[..n].copy_from_slice(model.objective());
    sx.set_cost(phase2);
    let outcome = sx.run()?;
    sx.refactor()?;
    sx.refresh();
    if let Outcome::Unbounded = outcome {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: sx.x[..n].to_vec(),
            objective_value: T::neg_infinity(),
            duals: vec![T::zero(); m],
            reduced_costs: vec![T::zero(); n],
            pivots: sx.pivots,
        });
    }
    let values: Vec<T> = (0..n).map(|j| sx.x[j].max(model.variables()[j].lower).min(model.variables()[j].upper)).collect();
    if model.max_violation(&values) > T::residual_tol() {
        return Err(LpError::NumericalFailure { pivots: sx.pivots });
    }
    let reduced_costs = (0..n).map(|j| sx.reduced_cost(j)).collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: model.evaluate_objective(&values),
        values,
        duals: sx.y.clone(),
        reduced_costs,
        pivots: sx.pivots,
    })
}

impl<'a, T: Scalar> Simplex<'a, T> {
    fn build(model: &LpModel<T>, opts: &'a SimplexOptions) -> Self {
        let n = model.n_vars();
        let m = model.n_constraints();
        let mut cols: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (r, c) in model.constraints().iter().enumerate() {
            for &(v, a) in &c.terms {
                cols[v.0].push((r, a));
            }
        }
        let mut lower: Vec<T> = model.variables().iter().map(|v| v.lower).collect();
        let mut upper: Vec<T> = model.variables().iter().map(|v| v.upper).collect();
        let mut x = Vec::with_capacity(n + 2 * m);
        let mut state = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            let (s, v) = if lower[j].is_finite() {
                (State::AtLower, lower[j])
            } else if upper[j].is_finite() {
                (State::AtUpper, upper[j])
            } else {
                (State::Zero, T::zero())
            };
            state.push(s);
            x.push(v);
        }
        let rhs: Vec<T> = model.constraints().iter().map(|c| c.rhs).collect();
        let mut residual = rhs.clone();
        for j in 0..n {
            if x[j] != T::zero() {
                for &(r, a) in &cols[j] {
                    residual[r] -= a * x[j];
                }
            }
        }
        let mut basis = vec![0; m];
        let mut binv = vec![T::zero(); m * m];
        let mut artificials = Vec::new();
        for (r, c) in model.constraints().iter().enumerate() {
            let (lo, hi) = match c.sense {
                Sense::Le => (T::zero(), T::infinity()),
                Sense::Eq => (T::zero(), T::zero()),
                Sense::Ge => (T::neg_infinity(), T::zero()),
            };
            let j = cols.len();
            cols.push(vec![(r, T::one())]);
            lower.push(lo);
            upper.push(hi);
            let e = residual[r];
            if e >= lo && e <= hi {
                x.push(e);
                state.push(State::Basic);
                basis[r] = j;
                binv[r * m + r] = T::one();
            } else if e > hi {
                x.push(hi);
                state.push(State::AtUpper);
                artificials.push((r, T::one(), e - hi));
            } else {
                x.push(lo);
                state.push(State::AtLower);
                artificials.push((r, -T::one(), lo - e));
            }
        }
        let n_art_start = cols.len();
        for (r, sign, value) in artificials {
            let j = cols.len();
            cols.push(vec![(r, sign)]);
            lower.push(T::zero());
            upper.push(T::infinity());
            x.push(value);
            state.push(State::Basic);
            basis[r] = j;
            binv[r * m + r] = sign;
        }
        let total = cols.len();
        Self {
            m,
            cols,
            lower,
            upper,
            rhs,
            x,
            state,
            basis,
            binv,
            cost: vec![T::zero(); total],
            y: vec![T::zero(); m],
            n_art_start,
            pivots: 0,
            since_refresh: 0,
            since_refactor: 0,
            degenerate_run: 0,
            opts,
        }
    }

    fn set_cost(&mut self, cost: Vec<T>) {
        self.cost = cost;
        self.degenerate_run = 0;
        self.refresh();
    }

    /// Recomputes duals `y = c_B B⁻¹` and basic values from scratch.
    fn refresh(&mut self) {
        let m = self.m;
        let mut y = vec![T::zero(); m];
        for r in 0..m {
            let cb = self.cost[self.basis[r]];
            if cb != T::zero() {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, &b) in y.iter_mut().zip(row) {
                    *yk += cb * b;
                }
            }
        }
        self.y = y;
        let mut resid = self.rhs.clone();
        for (j, col) in self.cols.iter().enumerate() {
            if self.state[j] != State::Basic && self.x[j] != T::zero() {
                for &(r, a) in col {
                    resid[r] -= a * self.x[j];
                }
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let v = row.iter().zip(&resid).fold(T::zero(), |acc, (&b, &e)| acc + b * e);
            self.x[self.basis[r]] = v;
        }
        self.since_refresh = 0;
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination with partial pivoting.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![T::zero(); m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[j] {
                a[r * m + k] = v;
            }
        }
        let mut inv = vec![T::zero(); m * m];
        for r in 0..m {
            inv[r * m + r] = T::one();
        }
        for c in 0..m {
            let mut p = c;
            let mut best = a[c * m + c].abs();
            for r in c + 1..m {
                let v = a[r * m + c].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= T::pivot_tol() {
                return Err(LpError::NumericalFailure { pivots: self.pivots });
            }
            if p != c {
                for k in 0..m {
                    a.swap(c * m + k, p * m + k);
                    inv.swap(c * m + k, p * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * m + c];
                if f != T::zero() {
                    for k in 0..m {
                        let (ack, ick) = (a[c * m + k], inv[c * m + k]);
                        a[r * m + k] -= f * ack;
                        inv[r * m + k] -= f * ick;
                    }
                }
            }
        }
        // Row k of B⁻¹ corresponds to basis position k.
        self.binv = inv;
        self.since_refactor = 0;
        Ok(())
    }

    fn reduced_cost(&self, j: usize) -> T {
        self.cols[j].iter().fold(self.cost[j], |acc, &(r, a)| acc - self.y[r] * a)
    }

    /// Entering column and direction (+1 increase, -1 decrease).
    fn price(&self, bland: bool) -> Option<(usize, T, T)> {
        let tol = T::dual_tol();
        let mut best: Option<(usize, T, T)> = None;
        for j in 0..self.cols.len() {
            let st = self.state[j];
            if st == State::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced_cost(j);
            let dir = match st {
                State::AtLower if d < -tol => T::one(),
                State::AtUpper if d > tol => -T::one(),
                State::Zero if d.abs() > tol => -d.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir, d));
            }
            if best.is_none_or(|(_, _, bd)| d.abs() > bd.abs()) {
                best = Some((j, dir, d));
            }
        }
        best
    }

    fn column(&self, j: usize) -> Vec<T> {
        let m = self.m;
        let mut alpha = vec![T::zero(); m];
        for &(r, a) in &self.cols[j] {
            for (k, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[k * m + r] * a;
            }
        }
        alpha
    }

    fn run(&mut self) -> Result<Outcome, LpError> {
        loop {
            if self.pivots >= self.opts.max_pivots {
                return Err(LpError::NumericalFailure { pivots: self.pivots });
            }
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
                self.refresh();
            } else if self.since_refresh >= self.opts.refresh_every {
                self.refresh();
            }
            let bland = self.degenerate_run >= self.opts.bland_after;
            let Some((q, dir, dq)) = self.price(bland) else {
                return Ok(Outcome::Optimal);
            };
            let alpha = self.column(q);
            let Some(step) = self.ratio_test(q, dir, &alpha, bland) else {
                return Ok(Outcome::Unbounded);
            };
            self.apply(q, dir, dq, &alpha, step);
        }
    }

    /// Returns the step length and the leaving row (`None` for a bound flip).
    fn ratio_test(&self, q: usize, dir: T, alpha: &[T], bland: bool) -> Option<(T, Option<usize>)> {
        let tol = T::primal_tol();
        let ptol = T::pivot_tol();
        let range = self.upper[q] - self.lower[q];
        let limit = |r: usize, relax: T| -> Option<T> {
            let rate = -dir * alpha[r];
            if rate.abs() <= ptol {
                return None;
            }
            let b = self.basis[r];
            if rate < T::zero() && self.lower[b].is_finite() {
                Some(((self.x[b] - self.lower[b] + relax) / -rate).max(T::zero()))
            } else if rate > T::zero() && self.upper[b].is_finite() {
                Some(((self.upper[b] - self.x[b] + relax) / rate).max(T::zero()))
            } else {
                None
            }
        };
        let mut leave: Option<(usize, T)> = None;
        if bland {
            let mut best: Option<(usize, T)> = None;
            for r in 0..self.m {
                if let Some(t) = limit(r, T::zero()) {
                    let better = match best {
                        None => true,
                        Some((br, bt)) => t < bt - tol || (t <= bt + tol && self.basis[r] < self.basis[br]),
                    };
                    if better {
                        best = Some((r, t));
                    }
                }
            }
            leave = best;
        } else {
            let mut theta_max = T::infinity();
            for r in 0..self.m {
                if let Some(t) = limit(r, tol) {
                    theta_max = theta_max.min(t);
                }
            }
            if theta_max.is_finite() {
                let mut best_mag = T::zero();
                for r in 0..self.m {
                    if let Some(t) = limit(r, T::zero()) {
                        if t <= theta_max && alpha[r].abs() > best_mag {
                            best_mag = alpha[r].abs();
                            leave = Some((r, t));
                        }
                    }
                }
            }
        }
        match leave {
            Some((r, t)) if !(range.is_finite() && range <= t) => Some((t, Some(r))),
            _ if range.is_finite() => Some((range, None)),
            _ => None,
        }
    }

    fn apply(&mut self, q: usize, dir: T, dq: T, alpha: &[T], (theta, leave): (T, Option<usize>)) {
        let m = self.m;
        self.pivots += 1;
        self.since_refresh += 1;
        if theta <= T::primal_tol() {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
        }
        if theta != T::zero() {
            for r in 0..m {
                let b = self.basis[r];
                self.x[b] -= dir * theta * alpha[r];
            }
        }
        match leave {
            None => {
                if dir > T::zero() {
                    self.x[q] = self.upper[q];
                    self.state[q] = State::AtUpper;
                } else {
                    self.x[q] = self.lower[q];
                    self.state[q] = State::AtLower;
                }
            }
            Some(r) => {
                self.x[q] += dir * theta;
                let b = self.basis[r];
                if -dir * alpha[r] < T::zero() {
                    self.x[b] = self.lower[b];
                    self.state[b] = State::AtLower;
                } else {
                    self.x[b] = self.upper[b];
                    self.state[b] = State::AtUpper;
                }
                self.state[q] = State::Basic;
                self.basis[r] = q;
                self.pivot_inverse(r, alpha);
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, &b) in self.y.iter_mut().zip(row) {
                    *yk += dq * b;
                }
                self.since_refactor += 1;
            }
        }
    }

    fn pivot_inverse(&mut self, r: usize, alpha: &[T]) {
        let m = self.m;
        let piv = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (prow, tail) = rest.split_at_mut(m);
        for (k, row) in head.chunks_mut(m).enumerate().chain(tail.chunks_mut(m).enumerate().map(|(k, row)| (k + r + 1, row))) {
            let f = alpha[k];
            if f != T::zero() {
                for (x, &p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
            }
        }
    }

    /// Fixes artificials at zero and pivots basic ones out where possible.
    fn retire_artificials(&mut self) {
        let m = self.m;
        for j in self.n_art_start..self.cols.len() {
            self.upper[j] = T::zero();
            if self.state[j] != State::Basic {
                self.x[j] = T::zero();
                self.state[j] = State::AtLower;
            }
        }
        for r in 0..m {
            let a = self.basis[r];
            if a < self.n_art_start {
                continue;
            }
            let row: Vec<T> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, T)> = None;
            for j in 0..self.n_art_start {
                if self.state[j] == State::Basic {
                    continue;
                }
                let v = self.cols[j].iter().fold(T::zero(), |acc, &(rr, c)| acc + row[rr] * c);
                if v.abs() > T::lit(1e-7).max(T::pivot_tol()) && best.is_none_or(|(_, bv)| v.abs() > bv.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.column(j);
                self.state[j] = State::Basic;
                self.basis[r] = j;
                self.state[a] = State::AtLower;
                self.x[a] = T::zero();
                self.pivot_inverse(r, &alpha);
            }
        }
        self.refresh();
    }
}

#[cfg(test)]
mod tests {
    use super::super::{dual_bound, LpModel, Sense};
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bound_row() {
        let mut m = LpModel::<f64>::new();
        let x = m.add_var("x", f64::NEG_INFINITY, 10.0);
        m.set_objective(x, 1.0);
        m.add_constraint("lo", vec![(x, 1.0)], Sense::Ge, 3.0);
        let s = solve(&m).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.values[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut m = LpModel::<f64>::new();
        let x = m.add_free_var("x");
        m.add_constraint("a", vec![(x, 1.0)], Sense::Le, -1.0);
        m.add_constraint("b", vec![(x, 1.0)], Sense::Ge, 1.0);
        assert_eq!(solve(&m).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn degenerate_face() {
        let mut m = LpModel::<f64>::new();
        let x = m.add_var("x", 0.0, 1.0);
        let y = m.add_var("y", 0.0, 1.0);
        m.set_objective(x, -1.0);
        m.set_objective(y, -1.0);
        m.add_constraint("cap", vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let s = solve(&m).unwrap();
        assert!((s.objective_value + 1.0).abs() < 1e-12);
        assert!((s.values[0] + s.values[1] - 1.0).abs() < 1e-9);
        // Dual: y ≤ 0 on the cap row with d_x = d_y = 0 gives bound -1.
        assert!((dual_bound(&m, &s.duals) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_detected() {
        let mut m = LpModel::<f64>::new();
        let x = m.add_var("x", 0.0, f64::INFINITY);
        let y = m.add_free_var("y");
        m.set_objective(x, -1.0);
        m.add_constraint("r", vec![(x, 1.0), (y, -1.0)], Sense::Le, 2.0);
        assert_eq!(solve(&m).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_free_variables() {
        // min |x - 2| + |y + 1| with x + y = 3 via slacks.
        let mut m = LpModel::<f64>::new();
        let x = m.add_free_var("x");
        let y = m.add_free_var("y");
        let t = m.add_var("t", 0.0, f64::INFINITY);
        let u = m.add_var("u", 0.0, f64::INFINITY);
        m.set_objective(t, 1.0);
        m.set_objective(u, 1.0);
        m.add_constraint("t1", vec![(x, 1.0), (t, -1.0)], Sense::Le, 2.0);
        m.add_constraint("t2", vec![(x, -1.0), (t, -1.0)], Sense::Le, -2.0);
        m.add_constraint("u1", vec![(y, 1.0), (u, -1.0)], Sense::Le, -1.0);
        m.add_constraint("u2", vec![(y, -1.0), (u, -1.0)], Sense::Le, 1.0);
        m.add_constraint("sum", vec![(x, 1.0), (y, 1.0)], Sense::Eq, 3.0);
        let s = solve(&m).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value - 2.0).abs() < 1e-9);
        assert!((dual_bound(&m, &s.duals) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_precision_solve() {
        let mut m = LpModel::<f32>::new();
        let x = m.add_var("x", 0.0, 4.0);
        let y = m.add_var("y", 0.0, 4.0);
        m.set_objective(x, -3.0);
        m.set_objective(y, -2.0);
        m.add_constraint("a", vec![(x, 1.0), (y, 1.0)], Sense::Le, 5.0);
        m.add_constraint("b", vec![(x, 2.0), (y, 1.0)], Sense::Le, 8.0);
        let s = solve(&m).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value + 13.0).abs() < 1e-4);
    }

    #[test]
    fn pivot_limit_reports_failure() {
        let mut m = LpModel::<f64>::new();
        let x = m.add_var("x", 0.0, 1.0);
        let y = m.add_var("y", 0.0, 1.0);
        m.set_objective(x, -1.0);
        m.set_objective(y, -1.0);
        m.add_constraint("c", vec![(x, 1.0), (y, 2.0)], Sense::Le, 2.0);
        m.add_constraint("d", vec![(x, 2.0), (y, 1.0)], Sense::Le, 2.0);
        let opts = SimplexOptions { max_pivots: 1, ..Default::default() };
        assert_eq!(solve_with(&m, &opts), Err(LpError::NumericalFailure { pivots: 1 }));
    }

    /// Random feasible LP: rows through a known interior point, boxed variables.
    fn random_lp(seed: u64) -> LpModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..9);
        let rows = rng.gen_range(1..9);
        let mut m = LpModel::new();
        let point: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vars: Vec<_> = (0..n)
            .map(|j| {
                let v = if rng.gen_bool(0.3) { m.add_free_var(format!("x{j}")) } else { m.add_var(format!("x{j}"), -2.0, 2.0) };
                m.set_objective(v, rng.gen_range(-1.0..1.0));
                v
            })
            .collect();
        for r in 0..rows {
            let terms: Vec<_> = vars.iter().map(|&v| (v, rng.gen_range(-1.0..1.0))).collect();
            let act: f64 = terms.iter().map(|(v, a)| a * point[v.0]).sum();
            let sense = [Sense::Le, Sense::Ge, Sense::Eq][rng.gen_range(0..3)];
            let rhs = match sense {
                Sense::Le => act + rng.gen_range(0.0..0.5),
                Sense::Ge => act - rng.gen_range(0.0..0.5),
                Sense::Eq => act,
            };
            m.add_constraint(format!("r{r}"), terms, sense, rhs);
        }
        // Keep free variables bounded through the objective-independent box rows.
        for &v in &vars {
            m.add_constraint("box_hi", vec![(v, 1.0)], Sense::Le, 3.0);
            m.add_constraint("box_lo", vec![(v, 1.0)], Sense::Ge, -3.0);
        }
        m
    }

    /// Brute-force vertex enumeration for tiny models would be costly; instead
    /// compare against a coarse grid lower bound on two-variable models.
    #[test]
    fn matches_grid_search_in_two_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let mut m = LpModel::<f64>::new();
            let x = m.add_var("x", -1.0, 1.0);
            let y = m.add_var("y", -1.0, 1.0);
            let (cx, cy) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            m.set_objective(x, cx);
            m.set_objective(y, cy);
            let mut rows = Vec::new();
            for _ in 0..3 {
                let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let c = rng.gen_range(0.0..1.0);
                m.add_constraint("r", vec![(x, a), (y, b)], Sense::Le, c);
                rows.push((a, b, c));
            }
            let s = solve(&m).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            let mut best = f64::INFINITY;
            let steps = 400;
            for i in 0..=steps {
                for k in 0..=steps {
                    let px = -1.0 + 2.0 * i as f64 / steps as f64;
                    let py = -1.0 + 2.0 * k as f64 / steps as f64;
                    if rows.iter().all(|&(a, b, c)| a * px + b * py <= c + 1e-12) {
                        best = best.min(cx * px + cy * py);
                    }
                }
            }
            assert!(s.objective_value <= best + 1e-9);
            assert!(s.objective_value >= best - 0.02);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn weak_duality_and_row_permutation(seed in 0u64..100_000) {
            let m = random_lp(seed);
            let s = solve(&m).unwrap();
            prop_assert_eq!(s.status, LpStatus::Optimal);
            prop_assert!(m.max_violation(&s.values) <= 1e-7);
            let db = dual_bound(&m, &s.duals);
            prop_assert!(db <= s.objective_value + 1e-6);
            prop_assert!((db - s.objective_value).abs() <= 1e-6);
            let mut order: Vec<usize> = (0..m.n_constraints()).collect();
            order.reverse();
            let s2 = solve(&m.with_row_order(&order)).unwrap();
            prop_assert!((s.objective_value - s2.objective_value).abs() <= 1e-7);
        }
    }
}
