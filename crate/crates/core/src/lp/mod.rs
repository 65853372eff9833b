//! Sparse linear programs and a bounded revised simplex solver.
//!
//! Models are always minimized. Variables carry their own (possibly
//! infinite) bounds; rows are `≤`, `=` or `≥` constraints over sparse
//! coefficient lists.

mod mps;
mod simplex;

pub use mps::write_fixed_mps;
pub use simplex::{solve, solve_with, SimplexOptions};

use serde::Serialize;
use thiserror::Error;

use crate::scalar::Scalar;

/// Errors raised by model validation and the solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("simplex failed to converge after {pivots} pivots")]
    NumericalFailure { pivots: usize },
}

/// Handle of a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarId(pub usize);

/// Row sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub lower: T,
    pub upper: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T> {
    pub name: String,
    pub terms: Vec<(VarId, T)>,
    pub sense: Sense,
    pub rhs: T,
}

/// A minimization LP.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpModel<T> {
    variables: Vec<Variable<T>>,
    constraints: Vec<Constraint<T>>,
    objective: Vec<T>,
}

impl<T: Scalar> LpModel<T> {
    pub fn new() -> Self {
        Self { variables: Vec::new(), constraints: Vec::new(), objective: Vec::new() }
    }

    /// Declares a variable with bounds `[lower, upper]`; either may be infinite.
    pub fn add_var(&mut self, name: impl Into<String>, lower: T, upper: T) -> VarId {
        self.variables.push(Variable { name: name.into(), lower, upper });
        self.objective.push(T::zero());
        VarId(self.variables.len() - 1)
    }

    /// Declares a variable without bounds.
    pub fn add_free_var(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, T::neg_infinity(), T::infinity())
    }

    /// Adds a row; repeated variables in `terms` are summed.
    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<(VarId, T)>, sense: Sense, rhs: T) -> usize {
        let mut terms = terms;
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(VarId, T)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|t| t.1 != T::zero());
        self.constraints.push(Constraint { name: name.into(), terms: merged, sense, rhs });
        self.constraints.len() - 1
    }

    /// Sets the cost coefficient of `var`.
    pub fn set_objective(&mut self, var: VarId, coef: T) {
        self.objective[var.0] = coef;
    }

    pub fn variables(&self) -> &[Variable<T>] {
        &self.variables
    }
    pub fn constraints(&self) -> &[Constraint<T>] {
        &self.constraints
    }
    pub fn objective(&self) -> &[T] {
        &self.objective
    }
    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }
    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Checks variable references, bounds and finiteness of data.
    pub fn validate(&self) -> Result<(), LpError> {
        for (j, v) in self.variables.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper || v.lower == T::infinity() || v.upper == T::neg_infinity() {
                return Err(LpError::InvalidModel(format!("variable {j} ({}) has invalid bounds", v.name)));
            }
            if !self.objective[j].is_finite() {
                return Err(LpError::InvalidModel(format!("variable {j} has a non-finite cost")));
            }
        }
        for (r, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::InvalidModel(format!("row {r} ({}) has a non-finite rhs", c.name)));
            }
            for &(v, a) in &c.terms {
                if v.0 >= self.variables.len() {
                    return Err(LpError::InvalidModel(format!("row {r} references undeclared variable {}", v.0)));
                }
                if !a.is_finite() {
                    return Err(LpError::InvalidModel(format!("row {r} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Objective value of an assignment.
    pub fn evaluate_objective(&self, values: &[T]) -> T {
        self.objective.iter().zip(values).fold(T::zero(), |acc, (&c, &x)| acc + c * x)
    }

    /// Left-hand side of row `r` under an assignment.
    pub fn row_activity(&self, r: usize, values: &[T]) -> T {
        self.constraints[r].terms.iter().fold(T::zero(), |acc, &(v, a)| acc + a * values[v.0])
    }

    /// Largest violation of any bound or row by an assignment.
    pub fn max_violation(&self, values: &[T]) -> T {
        let mut worst = T::zero();
        for (v, &x) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for (r, c) in self.constraints.iter().enumerate() {
            let lhs = self.row_activity(r, values);
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Copy with rows reordered so that new row `k` is old row `order[k]`.
    pub fn with_row_order(&self, order: &[usize]) -> Self {
        Self {
            variables: self.variables.clone(),
            constraints: order.iter().map(|&r| self.constraints[r].clone()).collect(),
            objective: self.objective.clone(),
        }
    }
}

/// Solve outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Primal values, duals and reduced costs of a solve.
///
/// `values`, `duals` and `reduced_costs` are only meaningful when the status
/// is [`LpStatus::Optimal`].
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub values: Vec<T>,
    pub objective_value: T,
    /// One multiplier per row: the sensitivity of the optimum to its rhs.
    pub duals: Vec<T>,
    /// `c_j - y·A_j` per structural variable.
    pub reduced_costs: Vec<T>,
    pub pivots: usize,
}

/// Lagrangian lower bound `y·b + Σ_j min_{x_j ∈ [l_j, u_j]} d_j x_j` computed
/// from the row multipliers of a solution, with reduced costs `d` recomputed
/// from the model data. Returns `-inf` when the multipliers are not dual
/// feasible beyond tolerance.
pub fn dual_bound<T: Scalar>(model: &LpModel<T>, duals: &[T]) -> T {
    let tol = T::lit(1e-7).max(T::dual_tol());
    let mut d = model.objective.clone();
    let mut bound = T::zero();
    for (c, &y) in model.constraints.iter().zip(duals) {
        let ok = match c.sense {
            Sense::Le => y <= tol,
            Sense::Ge => y >= -tol,
            Sense::Eq => true,
        };
        if !ok {
            return T::neg_infinity();
        }
        bound += y * c.rhs;
        for &(v, a) in &c.terms {
            d[v.0] -= y * a;
        }
    }
    for (v, &dj) in model.variables.iter().zip(&d) {
        if dj > tol {
            if v.lower.is_infinite() {
                return T::neg_infinity();
            }
            bound += dj * v.lower;
        } else if dj < -tol {
            if v.upper.is_infinite() {
                return T::neg_infinity();
            }
            bound += dj * v.upper;
        } else if dj != T::zero() {
            let at = if dj > T::zero() { v.lower } else { v.upper };
            if at.is_finite() {
                bound += dj * at;
            }
        }
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_terms_are_merged() {
        let mut m = LpModel::<f64>::new();
        let x = m.add_var("x", 0.0, 1.0);
        let y = m.add_var("y", 0.0, 1.0);
        m.add_constraint("r", vec![(x, 1.0), (y, 2.0), (x, 1.5), (y, -2.0)], Sense::Le, 1.0);
        assert_eq!(m.constraints()[0].terms, vec![(x, 2.5)]);
    }

    #[test]
    fn validation_catches_bad_bounds_and_refs() {
        let mut m = LpModel::<f64>::new();
        m.add_var("x", 2.0, 1.0);
        assert!(m.validate().is_err());
        let mut m = LpModel::<f64>::new();
        m.add_var("x", 0.0, 1.0);
        m.add_constraint("r", vec![(VarId(3), 1.0)], Sense::Le, 1.0);
        assert!(m.validate().is_err());
    }

    #[test]
    fn violation_measures_rows_and_bounds() {
        let mut m = LpModel::<f64>::new();
        let x = m.add_var("x", 0.0, 1.0);
        m.add_constraint("r", vec![(x, 1.0)], Sense::Ge, 0.5);
        assert_eq!(m.max_violation(&[0.75]), 0.0);
        assert_eq!(m.max_violation(&[0.25]), 0.25);
        assert_eq!(m.max_violation(&[1.5]), 0.5);
    }
}
