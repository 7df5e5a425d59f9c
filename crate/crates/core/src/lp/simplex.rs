//! Two-phase revised simplex with an explicit dense basis inverse.
//!
//! The inverse is rebuilt from a fresh LU factorization whenever the primal
//! residual `‖B x_B − r‖` drifts, and updated by the usual rank-one pivot
//! transform in between. Pricing is Dantzig (most negative reduced cost,
//! lowest column index on ties); after a run of degenerate pivots it falls
//! back to Bland's rule until the objective moves again.

use super::{LpError, LpSolution, LpStatus, LuFactors, StandardLp};

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptions {
    /// Primal feasibility tolerance (phase-1 residual, bound violations).
    pub feasibility_tol: f64,
    /// Reduced-cost tolerance, scaled by `1 + |c_j|`.
    pub optimality_tol: f64,
    /// Smallest pivot element accepted in the ratio test.
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Pivots between residual checks that may trigger refactorization.
    pub refactor_interval: usize,
    /// Hard cap on pivots; `None` means `50·(m + n) + 1000`.
    pub max_iterations: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            bland_after: 50,
            refactor_interval: 100,
            max_iterations: None,
        }
    }
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Simplex<'a> {
    m: usize,
    n: usize,
    // structural columns followed by one identity column per row (artificials)
    cols: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    rhs_norm: f64,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    x_b: Vec<f64>,
    opts: &'a SimplexOptions,
    iterations: usize,
    max_iterations: usize,
    since_check: usize,
}

pub(super) fn solve(lp: &StandardLp, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    lp.check_dimensions()?;
    let finite = lp.cost.iter().chain(&lp.eq_rhs).chain(lp.eq_matrix.as_slice());
    if finite.into_iter().any(|v| !v.is_finite()) {
        return Err(LpError::NumericalBreakdown("non-finite problem data".into()));
    }
    let (m, n) = (lp.n_rows(), lp.n_vars());

    // Flip rows so the right-hand side is nonnegative.
    let sign: Vec<f64> = lp
        .eq_rhs
        .iter()
        .map(|&b| if b < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let mut cols = lp.eq_matrix.to_sparse_columns().cols;
    for col in &mut cols {
        for (i, v) in col.iter_mut() {
            *v *= sign[*i];
        }
    }
    cols.extend((0..m).map(|i| vec![(i, 1.0)]));
    let rhs: Vec<f64> = lp.eq_rhs.iter().map(|b| b.abs()).collect();

    let mut s = Simplex::new(m, n, cols, rhs, opts);
    s.crash();

    if s.basis.iter().any(|&b| b >= n) {
        let mut phase1 = vec![0.0; n + m];
        phase1[n..].iter_mut().for_each(|c| *c = 1.0);
        match s.run(&phase1, false)? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => {
                return Err(LpError::NumericalBreakdown(
                    "phase 1 reported an unbounded ray".into(),
                ))
            }
        }
        let infeasibility: f64 = s
            .basis
            .iter()
            .zip(&s.x_b)
            .filter(|(&b, _)| b >= n)
            .map(|(_, &x)| x.max(0.0))
            .sum();
        if infeasibility > opts.feasibility_tol * (1.0 + s.rhs_norm) {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                primal: vec![0.0; n],
                objective: f64::INFINITY,
                dual: vec![0.0; m],
                iterations: s.iterations,
            });
        }
        s.drive_out_artificials()?;
    }

    let mut phase2 = lp.cost.clone();
    phase2.extend(std::iter::repeat_n(0.0, m));
    let end = s.run(&phase2, true)?;

    let mut primal = vec![0.0; n];
    for (&b, &x) in s.basis.iter().zip(&s.x_b) {
        if b < n {
            primal[b] = if x < 0.0 && x > -opts.feasibility_tol {
                0.0
            } else {
                x
            };
        }
    }
    Ok(match end {
        PhaseEnd::Unbounded => LpSolution {
            status: LpStatus::Unbounded,
            primal,
            objective: f64::NEG_INFINITY,
            dual: vec![0.0; m],
            iterations: s.iterations,
        },
        PhaseEnd::Optimal => {
            let y = s.duals(&phase2);
            let dual = y.iter().zip(&sign).map(|(v, s)| v * s).collect();
            let objective = super::dot(&lp.cost, &primal);
            LpSolution {
                status: LpStatus::Optimal,
                primal,
                objective,
                dual,
                iterations: s.iterations,
            }
        }
    })
}

impl<'a> Simplex<'a> {
    fn new(
        m: usize,
        n: usize,
        cols: Vec<Vec<(usize, f64)>>,
        rhs: Vec<f64>,
        opts: &'a SimplexOptions,
    ) -> Self {
        let rhs_norm = rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        Self {
            m,
            n,
            cols,
            rhs,
            rhs_norm,
            basis: vec![0; m],
            in_basis: vec![false; n + m],
            binv: vec![0.0; m * m],
            x_b: vec![0.0; m],
            opts,
            iterations: 0,
            max_iterations: opts.max_iterations.unwrap_or(50 * (m + n) + 1000),
            since_check: 0,
        }
    }

    /// Start from singleton columns with a positive entry (slacks), then
    /// artificials for the remaining rows. The resulting basis is diagonal.
    fn crash(&mut self) {
        let mut owner: Vec<Option<(usize, f64)>> = vec![None; self.m];
        for j in 0..self.n {
            if let [(i, v)] = self.cols[j][..] {
                if v > 0.0 && owner[i].is_none() {
                    owner[i] = Some((j, v));
                }
            }
        }
        for i in 0..self.m {
            let (j, v) = owner[i].unwrap_or((self.n + i, 1.0));
            self.basis[i] = j;
            self.in_basis[j] = true;
            self.binv[i * self.m + i] = 1.0 / v;
            self.x_b[i] = self.rhs[i] / v;
        }
    }

    #[inline]
    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        self.cols[j].iter().map(|&(i, v)| v * y[i]).sum()
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &r) in y.iter_mut().zip(row) {
                    *yk += cb * r;
                }
            }
        }
        y
    }

    fn ftran(&self, q: usize) -> Vec<f64> {
        let m = self.m;
        let col = &self.cols[q];
        (0..m)
            .map(|i| {
                let row = &self.binv[i * m..(i + 1) * m];
                col.iter().map(|&(k, v)| row[k] * v).sum()
            })
            .collect()
    }

    fn run(&mut self, cost: &[f64], artificials_fixed: bool) -> Result<PhaseEnd, LpError> {
        let (m, n) = (self.m, self.n);
        let mut y = self.duals(cost);
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut refined = false;
        let mut ray_checked = false;
        loop {
            // pricing over structural nonbasic columns
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..n {
                if self.in_basis[j] {
                    continue;
                }
                let d = cost[j] - self.col_dot(j, &y);
                if d < -self.opts.optimality_tol * (1.0 + cost[j].abs()) {
                    if bland {
                        entering = Some((j, d));
                        break;
                    }
                    if entering.is_none_or(|(_, best)| d < best) {
                        entering = Some((j, d));
                    }
                }
            }
            let Some((q, dq)) = entering else {
                if !refined {
                    self.refine()?;
                    y = self.duals(cost);
                    refined = true;
                    continue;
                }
                return Ok(PhaseEnd::Optimal);
            };
            refined = false;

            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(LpError::NumericalBreakdown(format!(
                    "iteration limit {} reached",
                    self.max_iterations
                )));
            }

            let alpha = self.ftran(q);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = alpha[i];
                let ratio = if artificials_fixed && self.basis[i] >= n {
                    if a.abs() <= self.opts.pivot_tol {
                        continue;
                    }
                    0.0
                } else {
                    if a <= self.opts.pivot_tol {
                        continue;
                    }
                    self.x_b[i].max(0.0) / a
                };
                let better = match leave {
                    None => true,
                    Some((r, best)) => {
                        let tie = 1e-12 * (1.0 + best.abs());
                        if ratio < best - tie {
                            true
                        } else if ratio <= best + tie {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                let (ai, ar) = (a.abs(), alpha[r].abs());
                                ai > ar || (ai == ar && self.basis[i] < self.basis[r])
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let Some((r, theta)) = leave else {
                // the incrementally updated duals may have drifted; confirm
                // the ray on a fresh factorization before reporting it
                if !ray_checked {
                    self.refactor()?;
                    y = self.duals(cost);
                    ray_checked = true;
                    self.iterations -= 1;
                    continue;
                }
                return Ok(PhaseEnd::Unbounded);
            };
            ray_checked = false;

            if theta <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= self.opts.bland_after {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }

            // duals move along row r of the old inverse
            let step = dq / alpha[r];
            let row_r = &self.binv[r * m..(r + 1) * m];
            for (yk, &v) in y.iter_mut().zip(row_r) {
                *yk += step * v;
            }
            self.pivot(r, q, &alpha, theta);

            self.since_check += 1;
            if self.since_check >= self.opts.refactor_interval {
                self.since_check = 0;
                if self.primal_residual() > 1e-9 * (1.0 + self.rhs_norm) {
                    self.refactor()?;
                    y = self.duals(cost);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64], theta: f64) {
        let m = self.m;
        for (i, x) in self.x_b.iter_mut().enumerate() {
            if i != r {
                *x -= theta * alpha[i];
            }
        }
        self.x_b[r] = theta;

        let piv = alpha[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (row_r, after) = rest.split_at_mut(m);
        row_r.iter_mut().for_each(|v| *v /= piv);
        let row_r: &[f64] = row_r;
        for (i, row) in before.chunks_exact_mut(m).enumerate() {
            let f = alpha[i];
            if f != 0.0 {
                row.iter_mut().zip(row_r).for_each(|(v, &p)| *v -= f * p);
            }
        }
        for (k, row) in after.chunks_exact_mut(m).enumerate() {
            let f = alpha[r + 1 + k];
            if f != 0.0 {
                row.iter_mut().zip(row_r).for_each(|(v, &p)| *v -= f * p);
            }
        }

        self.in_basis[self.basis[r]] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
    }

    fn primal_residual(&self) -> f64 {
        let mut res = self.rhs.clone();
        for (&b, &x) in self.basis.iter().zip(&self.x_b) {
            for &(k, v) in &self.cols[b] {
                res[k] -= v * x;
            }
        }
        res.iter().fold(0.0f64, |a, r| a.max(r.abs()))
    }

    /// One step of iterative refinement on `x_B`; refactors if that is not enough.
    fn refine(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut res = self.rhs.clone();
        for (&b, &x) in self.basis.iter().zip(&self.x_b) {
            for &(k, v) in &self.cols[b] {
                res[k] -= v * x;
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.x_b[i] += super::dot(row, &res);
        }
        if self.primal_residual() > 1e-9 * (1.0 + self.rhs_norm) {
            self.refactor()?;
        }
        Ok(())
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut dense = vec![0.0; m * m];
        for (i, &b) in self.basis.iter().enumerate() {
            for &(k, v) in &self.cols[b] {
                dense[k * m + i] = v;
            }
        }
        let lu = LuFactors::factor(&dense, m, 1e-13).ok_or_else(|| {
            LpError::NumericalBreakdown("basis matrix became singular".into())
        })?;
        self.binv = lu.inverse();
        let mut x = self.rhs.clone();
        lu.solve(&mut x);
        self.x_b = x;
        Ok(())
    }

    /// Pivot zero-level artificials out of the basis after phase 1. Rows
    /// where no structural column can replace the artificial are linearly
    /// dependent on the others; the artificial stays basic at zero.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let (m, n) = (self.m, self.n);
        let mut redundant = 0usize;
        for r in 0..m {
            if self.basis[r] < n {
                continue;
            }
            self.x_b[r] = 0.0;
            let row = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if self.in_basis[j] {
                    continue;
                }
                let v = self.col_dot(j, &row).abs();
                if v > 1e-8 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            match best {
                Some((q, _)) => {
                    let alpha = self.ftran(q);
                    self.pivot(r, q, &alpha, 0.0);
                }
                None => redundant += 1,
            }
        }
        if redundant > 0 {
            log::warn!("dropped {redundant} linearly dependent equality row(s)");
        }
        Ok(())
    }
}
