//! Monolithic reference solves: the periodic sample-average problem, the
//! non-periodic long-horizon problem and the exact finite-support cost.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{canonicalize, solve_lp, GeneralLp, LpError, LpStatus, Sense};
use crate::scenario::{PeriodRealization, ScenarioPool};
use crate::stage::{StageError, StageProgram, StageTemplate, TargetBox, Targets};

/// Default limit on the number of period blocks in one monolithic LP.
pub const DEFAULT_CAP: usize = 40;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{blocks} period blocks exceed the oracle cap of {cap}")]
    CapExceeded { blocks: usize, cap: usize },
    #[error("empty history")]
    EmptyHistory,
    #[error("monolithic problem is {0:?}")]
    NotOptimal(LpStatus),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

impl From<crate::lp::CanonError> for OracleError {
    fn from(e: crate::lp::CanonError) -> Self {
        OracleError::Stage(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaaSolution {
    pub targets: Targets,
    /// `min_w c_wᵀw + Σ_k p_k h(w, d_k)`
    pub cost: f64,
    pub blocks: usize,
}

/// Merges bit-identical realizations, returning `(realization, count)` in
/// order of first appearance.
pub fn merge_history(history: &[PeriodRealization]) -> Vec<(&PeriodRealization, usize)> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut out: Vec<(&PeriodRealization, usize)> = Vec::new();
    for d in history {
        let key: Vec<u64> = [&d.energy_price, &d.fr_price, &d.load, &d.fr_request]
            .into_iter()
            .flat_map(|v| v.iter().map(|x| x.to_bits()))
            .collect();
        match index.get(&key) {
            Some(&i) => out[i].1 += 1,
            None => {
                index.insert(key, out.len());
                out.push((d, 1));
            }
        }
    }
    out
}

/// Copies a period program into `ext` with every column offset, objective
/// scaled by `weight`, and coupled rows moved onto the shared target columns.
/// Rows listed in `skip` are dropped. Returns the column offset of the block.
fn append_block(
    ext: &mut GeneralLp,
    prog: &StageProgram,
    weight: f64,
    target_cols: &[Option<usize>],
    skip: &[usize],
) -> Result<usize, OracleError> {
    let base = ext.n_vars();
    let lp = &prog.lp;
    for j in 0..lp.n_vars() {
        ext.add_var(weight * lp.cost[j], lp.lower[j], lp.upper[j]);
    }
    ext.cost_offset += weight * lp.cost_offset;
    for (i, c) in lp.constraints.iter().enumerate() {
        if skip.contains(&i) {
            continue;
        }
        let mut coeffs: Vec<(usize, f64)> = c.coeffs.iter().map(|&(j, a)| (base + j, a)).collect();
        for e in prog.coupling.iter().filter(|e| e.row == i) {
            let col = target_cols[e.target].ok_or_else(|| {
                StageError::DimensionMismatch(format!(
                    "row {i} couples to target {}, which has no column here",
                    e.target
                ))
            })?;
            coeffs.push((col, e.coef));
        }
        ext.add_constraint(coeffs, c.sense, c.rhs);
    }
    Ok(base)
}

fn solve_general(ext: &GeneralLp) -> Result<Vec<f64>, OracleError> {
    let (lp, map) = canonicalize(ext)?;
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(OracleError::NotOptimal(sol.status));
    }
    Ok(map.recover(&sol.primal))
}

/// Periodic problem with explicit scenario probabilities.
pub fn solve_saa_weighted(
    template: &StageTemplate,
    scenarios: &[(&PeriodRealization, f64)],
    target_box: &TargetBox,
    cap: usize,
) -> Result<SaaSolution, OracleError> {
    if scenarios.is_empty() {
        return Err(OracleError::EmptyHistory);
    }
    if scenarios.len() > cap {
        return Err(OracleError::CapExceeded {
            blocks: scenarios.len(),
            cap,
        });
    }
    let nw = template.n_targets();
    let mut ext = GeneralLp::default();
    let target_cols: Vec<Option<usize>> = (0..nw)
        .map(|i| {
            Some(ext.add_var(
                template.design_cost()[i],
                target_box.lower[i],
                target_box.upper[i],
            ))
        })
        .collect();
    for (d, p) in scenarios {
        let prog = template.program(d)?;
        append_block(&mut ext, &prog, *p, &target_cols, &[])?;
    }
    let x = solve_general(&ext)?;
    let targets = Targets::decode(&x[..nw]);
    Ok(SaaSolution {
        cost: ext.evaluate(&x),
        targets,
        blocks: scenarios.len(),
    })
}

/// `min_w φ_m(w)` over the box as one LP; repeated realizations share a block.
pub fn solve_saa(
    template: &StageTemplate,
    history: &[PeriodRealization],
    target_box: &TargetBox,
    cap: usize,
) -> Result<SaaSolution, OracleError> {
    let m = history.len() as f64;
    let merged: Vec<(&PeriodRealization, f64)> = merge_history(history)
        .into_iter()
        .map(|(d, c)| (d, c as f64 / m))
        .collect();
    solve_saa_weighted(template, &merged, target_box, cap)
}

/// Periodic problem under the pool distribution itself.
pub fn solve_expected(
    template: &StageTemplate,
    pool: &ScenarioPool,
    target_box: &TargetBox,
    cap: usize,
) -> Result<SaaSolution, OracleError> {
    let scenarios: Vec<(&PeriodRealization, f64)> = pool
        .templates
        .iter()
        .zip(&pool.weights)
        .filter(|(_, &p)| p > 0.0)
        .map(|(d, &p)| (d, p))
        .collect();
    solve_saa_weighted(template, &scenarios, target_box, cap)
}

/// Start of the first period in the long-horizon problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialState {
    /// Chosen by the optimizer.
    Free,
    Fixed(Vec<f64>),
}

/// End of the last period in the long-horizon problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalState {
    Free,
    /// Must return to the initial state.
    MatchInitial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonperiodicSolution {
    /// Per-period average cost, comparable with [`SaaSolution::cost`].
    pub cost: f64,
    pub eta: f64,
    /// State at each period boundary, `m + 1` entries.
    pub boundary_states: Vec<Vec<f64>>,
}

/// Long-horizon problem over the ordered history: consecutive periods are
/// chained by state continuity instead of a common periodic state.
pub fn solve_nonperiodic(
    template: &StageTemplate,
    history: &[PeriodRealization],
    target_box: &TargetBox,
    initial: &InitialState,
    terminal: TerminalState,
    cap: usize,
) -> Result<NonperiodicSolution, OracleError> {
    if history.is_empty() {
        return Err(OracleError::EmptyHistory);
    }
    if history.len() > cap {
        return Err(OracleError::CapExceeded {
            blocks: history.len(),
            cap,
        });
    }
    let ns = template.model().n_state();
    let nw = template.n_targets();
    let weight = 1.0 / history.len() as f64;
    let mut ext = GeneralLp::default();
    // only coupled targets that are not periodic states get a column
    let mut target_cols: Vec<Option<usize>> = vec![None; nw];
    for (i, col) in target_cols.iter_mut().enumerate().skip(ns) {
        *col = Some(ext.add_var(
            template.design_cost()[i],
            target_box.lower[i],
            target_box.upper[i],
        ));
    }

    let mut firsts: Vec<Vec<usize>> = Vec::new();
    let mut lasts: Vec<Vec<usize>> = Vec::new();
    for d in history {
        let prog = template.program(d)?;
        let skip: Vec<usize> = prog.boundary.iter().map(|b| b.row).collect();
        let base = append_block(&mut ext, &prog, weight, &target_cols, &skip)?;
        firsts.push(prog.initial_state.iter().map(|j| base + j).collect());
        lasts.push(prog.terminal_state.iter().map(|j| base + j).collect());
    }
    // design cost of the state applies to the initial state
    for (s, &j) in firsts[0].iter().enumerate() {
        ext.cost[j] += template.design_cost()[s];
    }
    for k in 0..history.len() - 1 {
        for s in 0..ns {
            ext.add_constraint(
                vec![(lasts[k][s], 1.0), (firsts[k + 1][s], -1.0)],
                Sense::Eq,
                0.0,
            );
        }
    }
    if let InitialState::Fixed(x) = initial {
        if x.len() != ns {
            return Err(StageError::DimensionMismatch(format!(
                "initial state of length {}, model has {ns}",
                x.len()
            ))
            .into());
        }
        for s in 0..ns {
            ext.add_constraint(vec![(firsts[0][s], 1.0)], Sense::Eq, x[s]);
        }
    }
    if terminal == TerminalState::MatchInitial {
        let last = lasts.last().expect("nonempty");
        for s in 0..ns {
            ext.add_constraint(vec![(last[s], 1.0), (firsts[0][s], -1.0)], Sense::Eq, 0.0);
        }
    }

    let x = solve_general(&ext)?;
    let mut boundary_states: Vec<Vec<f64>> = firsts
        .iter()
        .map(|f| f.iter().map(|&j| x[j]).collect())
        .collect();
    boundary_states.push(lasts.last().unwrap().iter().map(|&j| x[j]).collect());
    let eta = target_cols[nw - 1].map_or(0.0, |j| x[j]);
    Ok(NonperiodicSolution {
        cost: ext.evaluate(&x),
        eta,
        boundary_states,
    })
}

/// Exact expected cost `c_wᵀw + Σ_k p_k h(w, d_k)` under a finite pool.
pub fn reference_cost(
    template: &StageTemplate,
    pool: &ScenarioPool,
    w: &Targets,
) -> Result<f64, StageError> {
    let costs: Vec<f64> = pool
        .templates
        .par_iter()
        .zip(&pool.weights)
        .map(|(d, &p)| {
            if p > 0.0 {
                template.stage_cost(w, d).map(|h| p * h)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(template.design_value(w) + costs.iter().sum::<f64>())
}
