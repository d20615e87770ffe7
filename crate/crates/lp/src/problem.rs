use serde::{Deserialize, Serialize};

use crate::error::LpError;

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
    pub integer: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    /// Sparse coefficients as `(variable index, value)`, one entry per variable.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A minimization problem `min c'x  s.t.  rows, lower <= x <= upper`,
/// with an optional integrality flag on each variable.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LinearProblem {
    pub vars: Vec<Variable>,
    pub rows: Vec<Constraint>,
}

impl LinearProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
        integer: bool,
    ) -> usize {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
            integer,
        });
        self.vars.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> usize {
        self.add_var(name, 0.0, 1.0, cost, true)
    }

    /// Adds a row. Duplicate variable entries are merged and explicit zeros dropped.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let mut coeffs = coeffs;
        coeffs.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for (j, v) in coeffs {
            match merged.last_mut() {
                Some((last, acc)) if *last == j => *acc += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        self.rows.push(Constraint {
            name: name.into(),
            coeffs: merged,
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, xi)| v.cost * xi).sum()
    }

    pub fn row_activity(&self, row: usize, x: &[f64]) -> f64 {
        self.rows[row].coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Largest violation of any bound, row or integrality requirement.
    pub fn max_violation(&self, x: &[f64], int_tol: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
            if v.integer {
                let frac = (xi - xi.round()).abs();
                if frac > int_tol {
                    worst = worst.max(frac);
                }
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            let act = self.row_activity(r, x);
            let viol = match row.sense {
                Sense::Le => act - row.rhs,
                Sense::Ge => row.rhs - act,
                Sense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for (j, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || !v.cost.is_finite() {
                return Err(LpError::InvalidModel(format!("variable {j} has NaN data")));
            }
            if v.lower > v.upper {
                return Err(LpError::InvalidModel(format!(
                    "variable {} has lower bound {} above upper bound {}",
                    v.name, v.lower, v.upper
                )));
            }
        }
        let n = self.vars.len();
        for row in &self.rows {
            if !row.rhs.is_finite() {
                return Err(LpError::InvalidModel(format!("row {} has non-finite rhs", row.name)));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::InvalidModel(format!(
                        "row {} references variable {j} of {n}",
                        row.name
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::InvalidModel(format!(
                        "row {} has non-finite coefficient",
                        row.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Column-compressed copy of the constraint matrix.
#[derive(Debug, Clone)]
pub(crate) struct CscMatrix {
    pub start: Vec<usize>,
    pub row: Vec<usize>,
    pub val: Vec<f64>,
}

impl CscMatrix {
    pub fn from_problem(p: &LinearProblem) -> Self {
        let n = p.num_vars();
        let mut counts = vec![0usize; n + 1];
        for row in &p.rows {
            for &(j, _) in &row.coeffs {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let nnz = counts[n];
        let mut fill = counts.clone();
        let mut rows = vec![0; nnz];
        let mut vals = vec![0.0; nnz];
        for (r, row) in p.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                rows[fill[j]] = r;
                vals[fill[j]] = a;
                fill[j] += 1;
            }
        }
        Self {
            start: counts,
            row: rows,
            val: vals,
        }
    }

    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.start[j]..self.start[j + 1]).map(move |p| (self.row[p], self.val[p]))
    }
}
