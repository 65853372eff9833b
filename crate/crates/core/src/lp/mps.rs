//! Fixed-column MPS dump for cross-checking models with external solvers.
//!
//! Layout (1-based character columns, one matrix entry per line):
//!
//! | field | columns | content                          |
//! |-------|---------|----------------------------------|
//! | 1     | 2-3     | row type or bound type           |
//! | 2     | 5-12    | column name, or `RHS` / `BND`    |
//! | 3     | 15-22   | row name or column name (bounds) |
//! | 4     | 25-36   | numeric value, right-aligned     |
//!
//! Rows are named `R0000000`, `R0000001`, ...; columns `C0000000`, ...; the
//! objective row is `COST`. Comment lines starting with `*` map generated
//! names back to model names. Bounds follow the usual defaults (`[0, ∞)`):
//! `FR` free, `MI` minus infinity, `LO`/`UP` finite ends, `FX` fixed.

use std::fmt::Write as _;

use super::{LpModel, Sense};
use crate::scalar::Scalar;

fn num<T: Scalar>(v: T) -> String {
    let v = v.to_f64_lossy();
    let s = format!("{v}");
    if s.len() <= 12 {
        s
    } else {
        format!("{v:.5E}")
    }
}

fn entry(out: &mut String, kind: &str, name: &str, row: &str, value: Option<String>) {
    let mut line = format!(" {kind:<2} {name:<8}  {row:<8}");
    if let Some(v) = value {
        let _ = write!(line, "  {v:>12}");
    }
    out.push_str(line.trim_end());
    out.push('\n');
}

/// Renders `model` in fixed-column MPS.
pub fn write_fixed_mps<T: Scalar>(model: &LpModel<T>, name: &str) -> String {
    let mut out = String::new();
    for (j, v) in model.variables().iter().enumerate() {
        let _ = writeln!(out, "* C{j:07} {}", v.name);
    }
    for (r, c) in model.constraints().iter().enumerate() {
        let _ = writeln!(out, "* R{r:07} {}", c.name);
    }
    let _ = writeln!(out, "NAME          {}", name.chars().take(8).collect::<String>());
    out.push_str("ROWS\n");
    entry(&mut out, "N", "COST", "", None);
    for (r, c) in model.constraints().iter().enumerate() {
        let t = match c.sense {
            Sense::Le => "L",
            Sense::Eq => "E",
            Sense::Ge => "G",
        };
        entry(&mut out, t, &format!("R{r:07}"), "", None);
    }
    let mut columns: Vec<Vec<(usize, T)>> = vec![Vec::new(); model.n_vars()];
    for (r, c) in model.constraints().iter().enumerate() {
        for &(v, a) in &c.terms {
            columns[v.0].push((r, a));
        }
    }
    out.push_str("COLUMNS\n");
    for (j, col) in columns.iter().enumerate() {
        let cname = format!("C{j:07}");
        let cost = model.objective()[j];
        if cost != T::zero() {
            entry(&mut out, "", &cname, "COST", Some(num(cost)));
        }
        for &(r, a) in col {
            entry(&mut out, "", &cname, &format!("R{r:07}"), Some(num(a)));
        }
    }
    out.push_str("RHS\n");
    for (r, c) in model.constraints().iter().enumerate() {
        if c.rhs != T::zero() {
            entry(&mut out, "", "RHS", &format!("R{r:07}"), Some(num(c.rhs)));
        }
    }
    out.push_str("BOUNDS\n");
    for (j, v) in model.variables().iter().enumerate() {
        let cname = format!("C{j:07}");
        let (lo, hi) = (v.lower, v.upper);
        if lo == hi {
            entry(&mut out, "FX", "BND", &cname, Some(num(lo)));
        } else if lo.is_infinite() && hi.is_infinite() {
            entry(&mut out, "FR", "BND", &cname, None);
        } else {
            if lo.is_infinite() {
                entry(&mut out, "MI", "BND", &cname, None);
            } else if lo != T::zero() {
                entry(&mut out, "LO", "BND", &cname, Some(num(lo)));
            }
            if hi.is_finite() {
                entry(&mut out, "UP", "BND", &cname, Some(num(hi)));
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}
