//! Dense linear programming in equality standard form.
//!
//! Problems are `min cᵀy  s.t.  W y = r, y ≥ 0`. [`solve_lp`] runs a
//! two-phase revised simplex and returns the primal vertex together with a
//! basic dual solution, so the duals are always a vertex of
//! `{π : Wᵀπ ≤ c}`. General bounded/inequality forms go through
//! [`canonicalize`] first.

mod canonical;
mod lu;
mod simplex;

pub use canonical::{canonicalize, CanonError, Constraint, GeneralLp, Sense, VarMap};
pub use lu::LuFactors;
pub use simplex::SimplexOptions;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LpError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LpError::DimensionMismatch("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LpError> {
        if data.len() != rows * cols {
            return Err(LpError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ y`
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (o, &a) in out.iter_mut().zip(self.row(i)) {
                    *o += yi * a;
                }
            }
        }
        out
    }

    /// Column-compressed copy holding only the nonzeros.
    pub fn to_sparse_columns(&self) -> SparseColumns {
        let mut cols = vec![Vec::new(); self.cols];
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                if v != 0.0 {
                    cols[j].push((i, v));
                }
            }
        }
        SparseColumns {
            n_rows: self.rows,
            cols,
        }
    }
}

/// Nonzeros of a matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseColumns {
    pub n_rows: usize,
    pub cols: Vec<Vec<(usize, f64)>>,
}

impl SparseColumns {
    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    /// `(Aᵀ y)_j`
    #[inline]
    pub fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        self.cols[j].iter().map(|&(i, v)| v * y[i]).sum()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `min costᵀy  s.t.  eq_matrix · y = eq_rhs, y ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardLp {
    pub cost: Vec<f64>,
    pub eq_matrix: Matrix,
    pub eq_rhs: Vec<f64>,
}

impl StandardLp {
    pub fn new(cost: Vec<f64>, eq_matrix: Matrix, eq_rhs: Vec<f64>) -> Result<Self, LpError> {
        let lp = Self {
            cost,
            eq_matrix,
            eq_rhs,
        };
        lp.check_dimensions()?;
        Ok(lp)
    }

    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn n_rows(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn check_dimensions(&self) -> Result<(), LpError> {
        let (m, n) = (self.eq_matrix.rows(), self.eq_matrix.cols());
        if n == 0 || m == 0 {
            return Err(LpError::DimensionMismatch(
                "need at least one variable and one constraint".into(),
            ));
        }
        if self.cost.len() != n {
            return Err(LpError::DimensionMismatch(format!(
                "cost has {} entries, matrix has {n} columns",
                self.cost.len()
            )));
        }
        if self.eq_rhs.len() != m {
            return Err(LpError::DimensionMismatch(format!(
                "rhs has {} entries, matrix has {m} rows",
                self.eq_rhs.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal vertex; the last basic point for `Unbounded`, zeros for `Infeasible`.
    pub primal: Vec<f64>,
    /// `+inf` when infeasible, `-inf` when unbounded.
    pub objective: f64,
    /// Basic dual solution (one multiplier per equality row); zeros unless optimal.
    pub dual: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Solve with default tolerances.
pub fn solve_lp(lp: &StandardLp) -> Result<LpSolution, LpError> {
    simplex::solve(lp, &SimplexOptions::default())
}

pub fn solve_lp_with(lp: &StandardLp, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    simplex::solve(lp, opts)
}
