use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Matrix, StandardLp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanonError {
    #[error("variable {0} has no finite lower bound")]
    UnboundedVariable(usize),
    #[error("variable {0} has inconsistent bounds [{1}, {2}]")]
    InvalidBounds(usize, f64, f64),
    #[error("constraint {0} references variable {1}, but only {2} exist")]
    BadIndex(usize, usize, usize),
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min costᵀx + cost_offset` over box-bounded variables and sparse rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeneralLp {
    pub cost: Vec<f64>,
    pub cost_offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl GeneralLp {
    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    /// Appends a variable and returns its index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    /// Appends a row and returns its index.
    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(Constraint { coeffs, sense, rhs });
        self.constraints.len() - 1
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.cost_offset + super::dot(&self.cost, x)
    }

    /// Largest violation of any bound or row at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let gap = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }
}

/// How a [`GeneralLp`] maps onto its standard form.
///
/// Standard rows are the general constraints in order, followed by one row
/// per finite upper bound. Standard columns are the shifted original
/// variables in order, then one slack per inequality constraint, then one
/// slack per upper-bound row.
#[derive(Debug, Clone, PartialEq)]
pub struct VarMap {
    pub n_original: usize,
    pub shift: Vec<f64>,
    pub n_std_vars: usize,
    pub n_std_rows: usize,
    pub constraint_slack: Vec<Option<usize>>,
    pub upper_rows: Vec<Option<usize>>,
    /// Constant added to the standard-form objective to recover the general one.
    pub objective_offset: f64,
}

impl VarMap {
    /// Original variable values from a standard-form point.
    pub fn recover(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n_original).map(|j| y[j] + self.shift[j]).collect()
    }

    pub fn objective(&self, standard_objective: f64) -> f64 {
        standard_objective + self.objective_offset
    }
}

pub fn canonicalize(g: &GeneralLp) -> Result<(StandardLp, VarMap), CanonError> {
    let n = g.n_vars();
    if g.lower.len() != n || g.upper.len() != n {
        return Err(CanonError::NonFinite("bound vectors of wrong length".into()));
    }
    for j in 0..n {
        let (lo, hi) = (g.lower[j], g.upper[j]);
        if !g.cost[j].is_finite() {
            return Err(CanonError::NonFinite(format!("cost of variable {j}")));
        }
        if !lo.is_finite() {
            return Err(CanonError::UnboundedVariable(j));
        }
        if hi.is_nan() || hi < lo {
            return Err(CanonError::InvalidBounds(j, lo, hi));
        }
    }

    let n_ineq = g
        .constraints
        .iter()
        .filter(|c| c.sense != Sense::Eq)
        .count();
    let n_upper = g.upper.iter().filter(|u| u.is_finite()).count();
    let rows = g.constraints.len() + n_upper;
    let cols = n + n_ineq + n_upper;

    let mut a = Matrix::zeros(rows, cols);
    let mut rhs = vec![0.0; rows];
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&g.cost);
    let mut constraint_slack = vec![None; g.constraints.len()];
    let mut upper_rows = vec![None; n];

    let mut next_slack = n;
    for (i, c) in g.constraints.iter().enumerate() {
        if !c.rhs.is_finite() {
            return Err(CanonError::NonFinite(format!("rhs of constraint {i}")));
        }
        let mut b = c.rhs;
        for &(j, v) in &c.coeffs {
            if j >= n {
                return Err(CanonError::BadIndex(i, j, n));
            }
            if !v.is_finite() {
                return Err(CanonError::NonFinite(format!("constraint {i}")));
            }
            a.add_to(i, j, v);
            b -= v * g.lower[j];
        }
        rhs[i] = b;
        let slack_sign = match c.sense {
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
            Sense::Eq => continue,
        };
        a.set(i, next_slack, slack_sign);
        constraint_slack[i] = Some(next_slack);
        next_slack += 1;
    }
    let mut row = g.constraints.len();
    for j in 0..n {
        if g.upper[j].is_finite() {
            a.set(row, j, 1.0);
            a.set(row, next_slack, 1.0);
            rhs[row] = g.upper[j] - g.lower[j];
            upper_rows[j] = Some(row);
            row += 1;
            next_slack += 1;
        }
    }

    let objective_offset = g.cost_offset + super::dot(&g.cost, &g.lower);
    let map = VarMap {
        n_original: n,
        shift: g.lower.clone(),
        n_std_vars: cols,
        n_std_rows: rows,
        constraint_slack,
        upper_rows,
        objective_offset,
    };
    let lp = StandardLp {
        cost,
        eq_matrix: a,
        eq_rhs: rhs,
    };
    Ok((lp, map))
}
