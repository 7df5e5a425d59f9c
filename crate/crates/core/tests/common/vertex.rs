//! Vertex enumeration in the general (inequality) form: eliminate the
//! equalities through a null-space basis, then try every choice of `k`
//! active inequalities, `k` being the remaining degrees of freedom.

use hmpc::lp::{GeneralLp, Sense};

const PIVOT: f64 = 1e-9;

/// Reduced row echelon form of `[a | b]`; returns pivot columns, or `None`
/// if the system is inconsistent.
fn rref(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<usize>> {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let p = (r..rows).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())?;
        if a[p][c].abs() < PIVOT {
            continue;
        }
        a.swap(r, p);
        b.swap(r, p);
        let pv = a[r][c];
        a[r].iter_mut().for_each(|v| *v /= pv);
        b[r] /= pv;
        for i in 0..rows {
            if i != r && a[i][c] != 0.0 {
                let f = a[i][c];
                let row_r = a[r].clone();
                a[i].iter_mut().zip(&row_r).for_each(|(v, p)| *v -= f * p);
                b[i] -= f * b[r];
            }
        }
        pivots.push(c);
        r += 1;
    }
    if b[r..].iter().any(|v| v.abs() > 1e-7) {
        return None;
    }
    Some(pivots)
}

fn solve_square(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let k = rhs.len();
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap())?;
        if m[p][c].abs() < PIVOT {
            return None;
        }
        m.swap(c, p);
        rhs.swap(c, p);
        for i in c + 1..k {
            let f = m[i][c] / m[c][c];
            if f != 0.0 {
                for j in c..k {
                    m[i][j] -= f * m[c][j];
                }
                rhs[i] -= f * rhs[c];
            }
        }
    }
    let mut z = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| m[i][j] * z[j]).sum();
        z[i] = (rhs[i] - s) / m[i][i];
    }
    Some(z)
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

pub struct Enumeration {
    pub best: Option<f64>,
    pub dof: usize,
    pub inequalities: usize,
}

/// Minimum of a bounded LP over its vertices.
pub fn enumerate_vertices(lp: &GeneralLp) -> Enumeration {
    let n = lp.n_vars();
    let mut eq_a = Vec::new();
    let mut eq_b = Vec::new();
    let mut g = Vec::new();
    let mut h = Vec::new();
    for c in &lp.constraints {
        let mut row = vec![0.0; n];
        for &(j, v) in &c.coeffs {
            row[j] += v;
        }
        match c.sense {
            Sense::Eq => {
                eq_a.push(row);
                eq_b.push(c.rhs);
            }
            Sense::Le => {
                g.push(row);
                h.push(c.rhs);
            }
            Sense::Ge => {
                g.push(row.iter().map(|v| -v).collect());
                h.push(-c.rhs);
            }
        }
    }
    for j in 0..n {
        if lp.lower[j].is_finite() {
            let mut row = vec![0.0; n];
            row[j] = -1.0;
            g.push(row);
            h.push(-lp.lower[j]);
        }
        if lp.upper[j].is_finite() {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            g.push(row);
            h.push(lp.upper[j]);
        }
    }

    let pivots = rref(&mut eq_a, &mut eq_b).expect("consistent equalities");
    let free: Vec<usize> = (0..n).filter(|j| !pivots.contains(j)).collect();
    let k = free.len();
    // x = xp + N z, pivot variables expressed through the free ones
    let mut xp = vec![0.0; n];
    for (r, &p) in pivots.iter().enumerate() {
        xp[p] = eq_b[r];
    }
    let mut basis = vec![vec![0.0; k]; n];
    for (f, &j) in free.iter().enumerate() {
        basis[j][f] = 1.0;
        for (r, &p) in pivots.iter().enumerate() {
            basis[p][f] = -eq_a[r][j];
        }
    }
    let gn: Vec<Vec<f64>> = g
        .iter()
        .map(|row| (0..k).map(|f| (0..n).map(|j| row[j] * basis[j][f]).sum()).collect())
        .collect();
    let gxp: Vec<f64> = g.iter().map(|row| hmpc::lp::dot(row, &xp)).collect();

    let mut best: Option<f64> = None;
    let total = g.len();
    let mut idx: Vec<usize> = (0..k).collect();
    if k <= total {
        loop {
            let m: Vec<Vec<f64>> = idx.iter().map(|&i| gn[i].clone()).collect();
            let rhs: Vec<f64> = idx.iter().map(|&i| h[i] - gxp[i]).collect();
            if let Some(z) = solve_square(m, rhs) {
                let feasible = (0..total).all(|i| {
                    gxp[i] + hmpc::lp::dot(&gn[i], &z) <= h[i] + 1e-7 * (1.0 + h[i].abs())
                });
                if feasible {
                    let x: Vec<f64> = (0..n)
                        .map(|j| xp[j] + hmpc::lp::dot(&basis[j], &z))
                        .collect();
                    let v = lp.evaluate(&x);
                    if best.is_none_or(|b| v < b) {
                        best = Some(v);
                    }
                }
            }
            if k == 0 || !next_combination(&mut idx, total) {
                break;
            }
        }
    }
    Enumeration {
        best,
        dof: k,
        inequalities: total,
    }
}
