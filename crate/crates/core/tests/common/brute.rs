//! Exhaustive basis enumeration for tiny standard-form LPs.

use hmpc::lp::{Matrix, StandardLp};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BruteStatus {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

/// Indices of a maximal linearly independent subset of `rows`, greedy in order.
fn independent_rows(rows: &[Vec<f64>]) -> Vec<usize> {
    let mut kept: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut idx = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut v = r.clone();
        for (k, p) in &kept {
            let f = v[*p];
            for (a, b) in v.iter_mut().zip(k) {
                *a -= f * b;
            }
        }
        let (p, pv) = v
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        if pv.abs() > 1e-7 {
            v.iter_mut().for_each(|x| *x /= pv);
            for (k, _) in kept.iter_mut() {
                let f = k[p];
                for (a, b) in k.iter_mut().zip(&v) {
                    *a -= f * b;
                }
            }
            kept.push((v, p));
            idx.push(i);
        }
    }
    idx
}

/// Solve a square system; `None` if singular.
fn solve_square(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(r, &bi)| {
            let mut r = r.clone();
            r.push(bi);
            r
        })
        .collect();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap())?;
        if m[p][k].abs() < TOL {
            return None;
        }
        m.swap(k, p);
        for i in 0..n {
            if i != k {
                let f = m[i][k] / m[k][k];
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            cur.push(j);
            rec(j + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Minimum of `cost·y` over basic feasible solutions of `rows·y = rhs, y ≥ 0`,
/// or `None` when there is none.
fn best_bfs(rows: &[Vec<f64>], rhs: &[f64], cost: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = cost.len();
    let keep = independent_rows(rows);
    let rows: Vec<Vec<f64>> = keep.iter().map(|&i| rows[i].clone()).collect();
    let rhs: Vec<f64> = keep.iter().map(|&i| rhs[i]).collect();
    let r = rows.len();
    if r == 0 {
        return Some((0.0, vec![0.0; n]));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cols in subsets(n, r) {
        let b: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| cols.iter().map(|&j| row[j]).collect())
            .collect();
        let Some(xb) = solve_square(&b, &rhs) else {
            continue;
        };
        if xb.iter().any(|&v| v < -1e-9) {
            continue;
        }
        let mut y = vec![0.0; n];
        for (&j, &v) in cols.iter().zip(&xb) {
            y[j] = v.max(0.0);
        }
        // discard points that violate dropped (dependent) rows numerically
        let obj: f64 = cost.iter().zip(&y).map(|(c, v)| c * v).sum();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, y));
        }
    }
    best
}

fn feasible(a: &Matrix, rhs: &[f64], y: &[f64]) -> bool {
    a.mul_vec(y)
        .iter()
        .zip(rhs)
        .all(|(l, r)| (l - r).abs() < 1e-7 * (1.0 + r.abs()))
}

pub fn brute_force(lp: &StandardLp) -> BruteStatus {
    let a = &lp.eq_matrix;
    let rows: Vec<Vec<f64>> = (0..a.rows()).map(|i| a.row(i).to_vec()).collect();
    let Some((obj, y)) = best_bfs(&rows, &lp.eq_rhs, &lp.cost) else {
        return BruteStatus::Infeasible;
    };
    if !feasible(a, &lp.eq_rhs, &y) {
        // the dropped rows were inconsistent with the kept ones
        return BruteStatus::Infeasible;
    }
    // Recession cone {d ≥ 0, A d = 0}, normalized by 1ᵀd = 1.
    let mut ray_rows = rows.clone();
    ray_rows.push(vec![1.0; lp.n_vars()]);
    let mut ray_rhs = vec![0.0; rows.len()];
    ray_rhs.push(1.0);
    if let Some((ray_obj, _)) = best_bfs(&ray_rows, &ray_rhs, &lp.cost) {
        if ray_obj < -1e-9 {
            return BruteStatus::Unbounded;
        }
    }
    BruteStatus::Optimal(obj)
}
