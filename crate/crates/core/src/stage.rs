//! Period recourse subproblems `min cᵀy  s.t.  W y = r − T w, y ≥ 0`.
//!
//! A [`StageModel`] describes one period as a bounded general LP whose
//! right-hand side is given at `w = 0`, plus the sparse coupling `T` between
//! its rows and the targets. [`StageTemplate`] canonicalizes that program,
//! shifts the right-hand side by the targets and solves it.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{
    canonicalize, solve_lp, CanonError, GeneralLp, LpError, LpStatus, SparseColumns, StandardLp,
    VarMap,
};
use crate::scenario::PeriodRealization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("stage problem infeasible at the given targets")]
    Infeasible,
    #[error("stage problem unbounded")]
    Unbounded,
    #[error("invalid model data: {0}")]
    InvalidData(String),
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Periodic state and peak targets `w = (x₀, η)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub x0: Vec<f64>,
    pub eta: f64,
}

impl Targets {
    pub fn new(x0: Vec<f64>, eta: f64) -> Self {
        Self { x0, eta }
    }

    /// `(x₀ components, η)`, the column order of `T`.
    pub fn encode(&self) -> Vec<f64> {
        let mut w = self.x0.clone();
        w.push(self.eta);
        w
    }

    pub fn decode(w: &[f64]) -> Self {
        let (eta, x0) = w.split_last().expect("at least the peak component");
        Self {
            x0: x0.to_vec(),
            eta: *eta,
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.len() + 1
    }

    pub fn max_abs_diff(&self, other: &Targets) -> f64 {
        self.encode()
            .iter()
            .zip(other.encode())
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }
}

impl fmt::Display for Targets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x0=[")?;
        for (i, x) in self.x0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x:.4}")?;
        }
        write!(f, "] eta={:.4}", self.eta)
    }
}

/// Axis-aligned box on the encoded targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TargetBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, StageError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(StageError::DimensionMismatch(
                "box bounds must have the same nonzero length".into(),
            ));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u))
        {
            return Err(StageError::InvalidData(
                "box bounds must be finite with lower <= upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Targets {
        Targets::decode(
            &self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect::<Vec<_>>(),
        )
    }

    pub fn contains(&self, w: &Targets, tol: f64) -> bool {
        let w = w.encode();
        w.len() == self.dim()
            && w
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Targets {
        let w: Vec<f64> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
            .collect();
        Targets::decode(&w)
    }

    /// Largest side length.
    pub fn width(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .fold(0.0, |a, (l, u)| a.max(u - l))
    }

    /// All `2^dim` corners.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            self.upper[i]
                        } else {
                            self.lower[i]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Row `row` of the general program has right-hand side `r_row − coef · w[target]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEntry {
    pub row: usize,
    pub target: usize,
    pub coef: f64,
}

/// Rows tying a period's first or last state to the periodic state target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryRow {
    pub row: usize,
    pub state: usize,
    pub terminal: bool,
}

/// One period as a general LP at `w = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageProgram {
    pub lp: GeneralLp,
    pub coupling: Vec<CouplingEntry>,
    /// Rows `x_first = x₀` / `x_last = x₀`, in state order.
    pub boundary: Vec<BoundaryRow>,
    /// Variable holding each state component at the start of the period.
    pub initial_state: Vec<usize>,
    /// Variable holding each state component at the end of the period.
    pub terminal_state: Vec<usize>,
    /// Elastic slack variables whose use is reported as slack activation.
    pub elastic: Vec<usize>,
}

/// A periodic system: builds each period's program from its data.
pub trait StageModel: Send + Sync + fmt::Debug {
    /// Number of periodic state components.
    fn n_state(&self) -> usize;

    /// Cost vector of the targets, `g(w) = c_wᵀw`.
    fn design_cost(&self) -> Vec<f64>;

    fn program(&self, d: &PeriodRealization) -> Result<StageProgram, StageError>;

    /// A constant `L` with `h(w, d) ≥ L` for every target `w`.
    fn recourse_floor(&self, d: &PeriodRealization) -> f64;
}

/// A canonicalized period problem at specific targets.
#[derive(Debug, Clone)]
pub struct StageLp {
    pub lp: StandardLp,
    /// Standard-form right-hand side at `w = 0`.
    pub base_rhs: Vec<f64>,
    /// Constant added to the standard objective to obtain `h`.
    pub offset: f64,
    pub map: VarMap,
    pub elastic: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    pub cost_h: f64,
    pub dual_vertex: Vec<f64>,
    /// Original (unshifted) variable values.
    pub trajectories: Vec<f64>,
    /// Sum of elastic slack values.
    pub slack_activation: f64,
}

/// Per-realization data the cut engine needs: `W_ξ`, `c_ξ`, `r_ξ` and the
/// constants of the canonical form.
#[derive(Debug, Clone)]
pub struct RealizationData {
    pub columns: SparseColumns,
    pub cost: Vec<f64>,
    pub base_rhs: Vec<f64>,
    pub offset: f64,
    pub floor: f64,
}

impl RealizationData {
    /// Whether `Wᵀπ ≤ c` holds up to `tol · (1 + |c_j|)`.
    pub fn is_dual_feasible(&self, pi: &[f64], tol: f64) -> bool {
        if pi.len() != self.base_rhs.len() {
            return false;
        }
        self.cost
            .iter()
            .enumerate()
            .all(|(j, &c)| self.columns.col_dot(j, pi) <= c + tol * (1.0 + c.abs()))
    }

    /// `πᵀr + offset`, the `w`-independent part of the vertex's bound.
    pub fn vertex_intercept(&self, pi: &[f64]) -> f64 {
        crate::lp::dot(pi, &self.base_rhs) + self.offset
    }
}

/// The fixed structure shared by every period: model, coupling `T`, `c_w`.
#[derive(Debug, Clone)]
pub struct StageTemplate {
    model: Arc<dyn StageModel>,
    coupling: Vec<CouplingEntry>,
    design_cost: Vec<f64>,
    n_rows: usize,
}

impl StageTemplate {
    /// `probe` is any valid realization; it fixes the row layout and `T`.
    pub fn new(model: Arc<dyn StageModel>, probe: &PeriodRealization) -> Result<Self, StageError> {
        let prog = model.program(probe)?;
        let (_, map) = canonicalize(&prog.lp)?;
        let design_cost = model.design_cost();
        if design_cost.len() != model.n_state() + 1 {
            return Err(StageError::DimensionMismatch(format!(
                "design cost has {} entries for {} targets",
                design_cost.len(),
                model.n_state() + 1
            )));
        }
        if prog
            .coupling
            .iter()
            .any(|e| e.target > model.n_state() || e.row >= prog.lp.constraints.len())
        {
            return Err(StageError::DimensionMismatch(
                "coupling entry outside the program".into(),
            ));
        }
        Ok(Self {
            model,
            coupling: prog.coupling,
            design_cost,
            n_rows: map.n_std_rows,
        })
    }

    pub fn model(&self) -> &Arc<dyn StageModel> {
        &self.model
    }

    pub fn n_targets(&self) -> usize {
        self.design_cost.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn design_cost(&self) -> &[f64] {
        &self.design_cost
    }

    pub fn coupling(&self) -> &[CouplingEntry] {
        &self.coupling
    }

    pub fn design_value(&self, w: &Targets) -> f64 {
        crate::lp::dot(&self.design_cost, &w.encode())
    }

    /// `T w` as a dense vector over standard rows.
    pub fn apply_coupling(&self, w: &[f64]) -> Vec<f64> {
        let mut tw = vec![0.0; self.n_rows];
        for e in &self.coupling {
            tw[e.row] += e.coef * w[e.target];
        }
        tw
    }

    /// `Tᵀπ`.
    pub fn coupling_transpose(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_targets()];
        for e in &self.coupling {
            out[e.target] += e.coef * pi[e.row];
        }
        out
    }

    fn check_targets(&self, w: &Targets) -> Result<(), StageError> {
        if w.dim() != self.n_targets() {
            return Err(StageError::DimensionMismatch(format!(
                "{} target components, template expects {}",
                w.dim(),
                self.n_targets()
            )));
        }
        if !w.encode().iter().all(|v| v.is_finite()) {
            return Err(StageError::InvalidData("non-finite targets".into()));
        }
        Ok(())
    }

    fn program_checked(&self, d: &PeriodRealization) -> Result<StageProgram, StageError> {
        d.validate()
            .map_err(|e| StageError::InvalidData(e.to_string()))?;
        let prog = self.model.program(d)?;
        if prog.coupling != self.coupling {
            return Err(StageError::DimensionMismatch(
                "realization changes the coupling structure".into(),
            ));
        }
        Ok(prog)
    }

    pub fn build_stage(&self, w: &Targets, d: &PeriodRealization) -> Result<StageLp, StageError> {
        self.check_targets(w)?;
        let prog = self.program_checked(d)?;
        let (mut lp, map) = canonicalize(&prog.lp)?;
        if map.n_std_rows != self.n_rows {
            return Err(StageError::DimensionMismatch(format!(
                "realization gives {} rows, template has {}",
                map.n_std_rows, self.n_rows
            )));
        }
        let base_rhs = lp.eq_rhs.clone();
        let tw = self.apply_coupling(&w.encode());
        for (r, t) in lp.eq_rhs.iter_mut().zip(&tw) {
            *r -= t;
        }
        Ok(StageLp {
            lp,
            base_rhs,
            offset: map.objective_offset,
            map,
            elastic: prog.elastic,
        })
    }

    pub fn solve_stage(&self, w: &Targets, d: &PeriodRealization) -> Result<StageResult, StageError> {
        let stage = self.build_stage(w, d)?;
        solve_built(&stage)
    }

    /// `h(w, d)` only.
    pub fn stage_cost(&self, w: &Targets, d: &PeriodRealization) -> Result<f64, StageError> {
        Ok(self.solve_stage(w, d)?.cost_h)
    }

    pub fn realization_data(&self, d: &PeriodRealization) -> Result<RealizationData, StageError> {
        let zero = Targets::decode(&vec![0.0; self.n_targets()]);
        let stage = self.build_stage(&zero, d)?;
        Ok(RealizationData {
            columns: stage.lp.eq_matrix.to_sparse_columns(),
            cost: stage.lp.cost,
            base_rhs: stage.base_rhs,
            offset: stage.offset,
            floor: self.model.recourse_floor(d),
        })
    }

    /// `min_{w ∈ box} h(w, d)`, the tightest recourse floor valid on the box.
    pub fn box_minimum(&self, d: &PeriodRealization, target_box: &TargetBox) -> Result<f64, StageError> {
        if target_box.dim() != self.n_targets() {
            return Err(StageError::DimensionMismatch(format!(
                "box of dimension {}, template expects {}",
                target_box.dim(),
                self.n_targets()
            )));
        }
        let mut lp = self.program_checked(d)?.lp;
        let cols: Vec<usize> = (0..self.n_targets())
            .map(|i| lp.add_var(0.0, target_box.lower[i], target_box.upper[i]))
            .collect();
        for e in &self.coupling {
            lp.constraints[e.row].coeffs.push((cols[e.target], e.coef));
        }
        let (std, map) = canonicalize(&lp)?;
        let sol = solve_lp(&std)?;
        match sol.status {
            LpStatus::Optimal => Ok(map.objective(sol.objective)),
            LpStatus::Infeasible => Err(StageError::Infeasible),
            LpStatus::Unbounded => Err(StageError::Unbounded),
        }
    }

    /// General program of a period, for assembling monolithic problems.
    pub fn program(&self, d: &PeriodRealization) -> Result<StageProgram, StageError> {
        self.program_checked(d)
    }
}

fn solve_built(stage: &StageLp) -> Result<StageResult, StageError> {
    let sol = solve_lp(&stage.lp)?;
    match sol.status {
        LpStatus::Infeasible => return Err(StageError::Infeasible),
        LpStatus::Unbounded => return Err(StageError::Unbounded),
        LpStatus::Optimal => {}
    }
    let trajectories = stage.map.recover(&sol.primal);
    let slack_activation = stage.elastic.iter().map(|&j| trajectories[j]).sum();
    Ok(StageResult {
        cost_h: stage.map.objective(sol.objective),
        dual_vertex: sol.dual,
        trajectories,
        slack_activation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::Sense;

    // One state, no dynamics: min p·y s.t. y ≥ x₀ (coupled), y ≤ 10; peak row y − s ≤ η.
    #[derive(Debug)]
    struct Toy;

    impl StageModel for Toy {
        fn n_state(&self) -> usize {
            1
        }
        fn design_cost(&self) -> Vec<f64> {
            vec![0.0, 1.0]
        }
        fn program(&self, d: &PeriodRealization) -> Result<StageProgram, StageError> {
            let mut lp = GeneralLp::default();
            let y = lp.add_var(d.energy_price[0], 0.0, 10.0);
            let s = lp.add_var(100.0, 0.0, f64::INFINITY);
            let r0 = lp.add_constraint(vec![(y, 1.0)], Sense::Ge, 0.0);
            let r1 = lp.add_constraint(vec![(y, 1.0), (s, -1.0)], Sense::Le, 0.0);
            Ok(StageProgram {
                lp,
                coupling: vec![
                    CouplingEntry { row: r0, target: 0, coef: -1.0 },
                    CouplingEntry { row: r1, target: 1, coef: -1.0 },
                ],
                boundary: vec![],
                initial_state: vec![y],
                terminal_state: vec![y],
                elastic: vec![s],
            })
        }
        fn recourse_floor(&self, _: &PeriodRealization) -> f64 {
            0.0
        }
    }

    fn data(price: f64) -> PeriodRealization {
        PeriodRealization {
            energy_price: vec![price; 2],
            fr_price: vec![0.0; 2],
            load: vec![0.0; 2],
            fr_request: vec![0.0; 2],
        }
    }

    #[test]
    fn rhs_is_affine_in_targets() {
        let t = StageTemplate::new(Arc::new(Toy), &data(1.0)).unwrap();
        let w = Targets::new(vec![3.0], 2.0);
        let a = t.build_stage(&w, &data(1.0)).unwrap();
        let tw = t.apply_coupling(&w.encode());
        for i in 0..a.lp.n_rows() {
            assert!((a.lp.eq_rhs[i] - (a.base_rhs[i] - tw[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn elastic_slack_and_duality() {
        let t = StageTemplate::new(Arc::new(Toy), &data(1.0)).unwrap();
        let w = Targets::new(vec![3.0], 2.0);
        let res = t.solve_stage(&w, &data(1.0)).unwrap();
        // y = 3, slack 1 → 3 + 100
        assert!((res.cost_h - 103.0).abs() < 1e-9);
        assert!((res.slack_activation - 1.0).abs() < 1e-9);
        let stage = t.build_stage(&w, &data(1.0)).unwrap();
        let dual_val = crate::lp::dot(&res.dual_vertex, &stage.lp.eq_rhs) + stage.offset;
        assert!((dual_val - res.cost_h).abs() < 1e-9);
    }

    #[test]
    fn box_helpers() {
        let b = TargetBox::new(vec![0.0, 1.0], vec![2.0, 5.0]).unwrap();
        assert_eq!(b.center(), Targets::new(vec![1.0], 3.0));
        assert_eq!(b.corners().len(), 4);
        assert_eq!(b.width(), 4.0);
        assert!(TargetBox::new(vec![1.0], vec![0.0]).is_err());
    }
}
