//! Incremental cutting planes: dual-vertex store, cut generation and
//! rescaling, and the epigraph master problem.
//!
//! Cut intercepts are measured from a per-realization recourse floor
//! `L_ξ ≤ h(·, d_ξ)`, so the recourse part `h − L_ξ` that rescaling shrinks
//! is nonnegative. The floors enter the lower bound as their running mean.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{canonicalize, solve_lp, GeneralLp, LpError, LpStatus, Sense};
use crate::scenario::PeriodRealization;
use crate::stage::{RealizationData, StageError, StageTemplate, TargetBox, Targets};

#[derive(Debug, Error)]
pub enum CutError {
    #[error("vertex store is empty")]
    EmptyStore,
    #[error("no cuts available")]
    EmptyCuts,
    #[error("master problem infeasible")]
    MasterInfeasible,
    #[error("no stored vertex is dual feasible for realization {0}")]
    NoFeasibleVertex(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dual vertices collected so far, without near-duplicates.
#[derive(Debug, Clone)]
pub struct VertexStore {
    vertices: Vec<Vec<f64>>,
    dedup_tol: f64,
}

impl VertexStore {
    pub fn new(dedup_tol: f64) -> Self {
        Self {
            vertices: Vec::new(),
            dedup_tol,
        }
    }

    pub fn dedup_tol(&self) -> f64 {
        self.dedup_tol
    }

    /// Index of the stored copy of `pi` and whether it was newly added.
    pub fn insert(&mut self, pi: Vec<f64>) -> (usize, bool) {
        let tol = self.dedup_tol;
        let existing = self.vertices.iter().position(|v| {
            v.len() == pi.len() && v.iter().zip(&pi).all(|(a, b)| (a - b).abs() <= tol)
        });
        match existing {
            Some(i) => (i, false),
            None => {
                self.vertices.push(pi);
                (self.vertices.len() - 1, true)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.vertices[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.vertices.iter().map(Vec::as_slice)
    }
}

/// Affine minorant `floor + alpha + (c_w + beta)ᵀw` of the running cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub birth_period: usize,
}

impl Cut {
    /// `alpha + (c_w + beta)ᵀw`, without the floor.
    pub fn value(&self, design_cost: &[f64], w: &[f64]) -> f64 {
        self.alpha
            + design_cost
                .iter()
                .zip(&self.beta)
                .zip(w)
                .map(|((c, b), x)| (c + b) * x)
                .sum::<f64>()
    }

    fn slope(&self, design_cost: &[f64]) -> Vec<f64> {
        design_cost.iter().zip(&self.beta).map(|(c, b)| c + b).collect()
    }

    fn min_over_box(&self, design_cost: &[f64], bx: &TargetBox) -> f64 {
        self.alpha
            + self
                .slope(design_cost)
                .iter()
                .zip(bx.lower.iter().zip(&bx.upper))
                .map(|(g, (l, u))| (g * l).min(g * u))
                .sum::<f64>()
    }
}

/// Multiplies every cut by `(m − 1)/m`; the design cost is not part of the cut.
pub fn rescale_cuts(cuts: &mut [Cut], m: usize) {
    assert!(m >= 1);
    let f = (m - 1) as f64 / m as f64;
    for c in cuts {
        c.alpha *= f;
        c.beta.iter_mut().for_each(|b| *b *= f);
    }
}

/// Drops cuts that some other cut dominates at every corner of the box
/// (hence on the whole box). Keeps the earliest of equal cuts.
pub fn prune_dominated(cuts: &mut Vec<Cut>, design_cost: &[f64], bx: &TargetBox) {
    let corners = bx.corners();
    let values: Vec<Vec<f64>> = cuts
        .iter()
        .map(|c| corners.iter().map(|w| c.value(design_cost, w)).collect())
        .collect();
    let keep: Vec<bool> = (0..cuts.len())
        .map(|i| {
            !(0..cuts.len()).any(|j| {
                j != i
                    && values[j].iter().zip(&values[i]).all(|(a, b)| a >= b)
                    && (values[j] != values[i] || j < i)
            })
        })
        .collect();
    let mut it = keep.iter();
    cuts.retain(|_| *it.next().unwrap());
}

/// `min_w max_j floor + cut_j(w)` over the target box.
#[derive(Debug, Clone, Copy)]
pub struct MasterProblem<'a> {
    pub cuts: &'a [Cut],
    pub design_cost: &'a [f64],
    pub target_box: &'a TargetBox,
    pub floor: f64,
}

impl MasterProblem<'_> {
    pub fn lower_bound_at(&self, w: &Targets) -> Result<f64, CutError> {
        let w = w.encode();
        self.cuts
            .iter()
            .map(|c| c.value(self.design_cost, &w))
            .reduce(f64::max)
            .map(|v| v + self.floor)
            .ok_or(CutError::EmptyCuts)
    }

    /// Minimizer of the cut model and its value there.
    pub fn solve(&self) -> Result<(Targets, f64), CutError> {
        if self.cuts.is_empty() {
            return Err(CutError::EmptyCuts);
        }
        let nw = self.target_box.dim();
        if self.design_cost.len() != nw || self.cuts.iter().any(|c| c.beta.len() != nw) {
            return Err(CutError::DimensionMismatch(
                "cut, design cost and box dimensions differ".into(),
            ));
        }
        // θ is bounded below by the best single-cut minimum over the box
        let theta_floor = self
            .cuts
            .iter()
            .map(|c| c.min_over_box(self.design_cost, self.target_box))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut g = GeneralLp::default();
        for i in 0..nw {
            g.add_var(0.0, self.target_box.lower[i], self.target_box.upper[i]);
        }
        let theta = g.add_var(1.0, theta_floor - 1.0, f64::INFINITY);
        for c in self.cuts {
            let mut coeffs: Vec<(usize, f64)> = c
                .slope(self.design_cost)
                .into_iter()
                .enumerate()
                .map(|(i, s)| (i, -s))
                .collect();
            coeffs.push((theta, 1.0));
            g.add_constraint(coeffs, Sense::Ge, c.alpha);
        }
        let (lp, map) = canonicalize(&g).map_err(StageError::from)?;
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(CutError::MasterInfeasible);
        }
        let x = map.recover(&sol.primal);
        let w: Vec<f64> = (0..nw)
            .map(|i| x[i].clamp(self.target_box.lower[i], self.target_box.upper[i]))
            .collect();
        let targets = Targets::decode(&w);
        let lb = self.lower_bound_at(&targets)?;
        Ok((targets, lb))
    }
}

/// Stand-alone form of [`MasterProblem::solve`].
pub fn solve_master(master: &MasterProblem) -> Result<(Targets, f64), CutError> {
    master.solve()
}

#[derive(Debug, Clone)]
struct DistinctRealization {
    realization: PeriodRealization,
    data: RealizationData,
    count: usize,
    // per stored vertex: πᵀr + offset − floor if π is dual feasible here
    intercepts: Vec<Option<f64>>,
}

/// Observed realizations, with bit-identical repeats merged.
#[derive(Debug, Clone, Default)]
struct History {
    distinct: Vec<DistinctRealization>,
    lookup: HashMap<Vec<u64>, usize>,
    sequence: Vec<usize>,
    floor_sum: f64,
}

fn realization_key(d: &PeriodRealization) -> Vec<u64> {
    [&d.energy_price, &d.fr_price, &d.load, &d.fr_request]
        .into_iter()
        .flat_map(|v| v.iter().map(|x| x.to_bits()))
        .collect()
}

/// How the per-realization recourse floor `L_ξ` is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum FloorRule {
    /// The model's closed-form bound.
    Model,
    /// `min_{w ∈ box} h(w, d_ξ)`, one extra LP per distinct realization.
    BoxMinimum(TargetBox),
}

/// Vertex store, realization history and live cuts of the incremental scheme.
#[derive(Debug, Clone)]
pub struct CutEngine {
    template: StageTemplate,
    floor_rule: FloorRule,
    store: VertexStore,
    // Tᵀπ for each stored vertex
    vertex_coupling: Vec<Vec<f64>>,
    history: History,
    cuts: Vec<Cut>,
    dual_tol: f64,
}

/// Defaults: vertices closer than `1e-9` are merged; dual feasibility is
/// checked to `1e-7·(1 + |c_j|)`.
pub const DEFAULT_DEDUP_TOL: f64 = 1e-9;
pub const DEFAULT_DUAL_TOL: f64 = 1e-7;

impl CutEngine {
    pub fn new(template: StageTemplate) -> Self {
        Self::with_tolerances(template, DEFAULT_DEDUP_TOL, DEFAULT_DUAL_TOL)
    }

    pub fn with_tolerances(template: StageTemplate, dedup_tol: f64, dual_tol: f64) -> Self {
        Self {
            template,
            floor_rule: FloorRule::Model,
            store: VertexStore::new(dedup_tol),
            vertex_coupling: Vec::new(),
            history: History::default(),
            cuts: Vec::new(),
            dual_tol,
        }
    }

    /// Sets the floor rule; only allowed before the first observation.
    pub fn with_floor_rule(mut self, rule: FloorRule) -> Result<Self, CutError> {
        if self.periods() > 0 {
            return Err(CutError::DimensionMismatch(
                "floor rule must be set before observing data".into(),
            ));
        }
        if let FloorRule::BoxMinimum(b) = &rule {
            if b.dim() != self.template.n_targets() {
                return Err(CutError::DimensionMismatch(format!(
                    "floor box of dimension {}, template expects {}",
                    b.dim(),
                    self.template.n_targets()
                )));
            }
        }
        self.floor_rule = rule;
        Ok(self)
    }

    pub fn floor_rule(&self) -> &FloorRule {
        &self.floor_rule
    }

    pub fn template(&self) -> &StageTemplate {
        &self.template
    }

    pub fn store(&self) -> &VertexStore {
        &self.store
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    /// Number of observed periods `m`.
    pub fn periods(&self) -> usize {
        self.history.sequence.len()
    }

    pub fn distinct_realizations(&self) -> usize {
        self.history.distinct.len()
    }

    /// Observed realizations in order.
    pub fn history(&self) -> impl Iterator<Item = &PeriodRealization> + '_ {
        self.history
            .sequence
            .iter()
            .map(|&k| &self.history.distinct[k].realization)
    }

    /// Distinct observed realizations with their multiplicities.
    pub fn weighted_history(&self) -> Vec<(&PeriodRealization, usize)> {
        self.history
            .distinct
            .iter()
            .map(|d| (&d.realization, d.count))
            .collect()
    }

    /// Mean recourse floor over the observed periods.
    pub fn floor(&self) -> f64 {
        match self.periods() {
            0 => 0.0,
            m => self.history.floor_sum / m as f64,
        }
    }

    fn intercept(&self, data: &RealizationData, pi: &[f64]) -> Option<f64> {
        data.is_dual_feasible(pi, self.dual_tol)
            .then(|| data.vertex_intercept(pi) - data.floor)
    }

    /// Appends `d` to the history; returns its distinct-realization index.
    pub fn observe(&mut self, d: &PeriodRealization) -> Result<usize, CutError> {
        let key = realization_key(d);
        let k = match self.history.lookup.get(&key) {
            Some(&k) => k,
            None => {
                let mut data = self.template.realization_data(d)?;
                if let FloorRule::BoxMinimum(b) = &self.floor_rule {
                    let lo = self.template.box_minimum(d, b)?;
                    // keep the floor strictly below h despite solver round-off
                    data.floor = lo - 1e-9 * (1.0 + lo.abs());
                }
                let intercepts = self
                    .store
                    .vertices
                    .par_iter()
                    .map(|pi| self.intercept(&data, pi))
                    .collect();
                self.history.distinct.push(DistinctRealization {
                    realization: d.clone(),
                    data,
                    count: 0,
                    intercepts,
                });
                let k = self.history.distinct.len() - 1;
                self.history.lookup.insert(key, k);
                k
            }
        };
        let entry = &mut self.history.distinct[k];
        entry.count += 1;
        self.history.floor_sum += entry.data.floor;
        self.history.sequence.push(k);
        Ok(k)
    }

    /// Adds a dual vertex; returns its store index and whether it was new.
    pub fn add_vertex(&mut self, pi: Vec<f64>) -> Result<(usize, bool), CutError> {
        if pi.len() != self.template.n_rows() {
            return Err(CutError::DimensionMismatch(format!(
                "vertex of length {}, stage has {} rows",
                pi.len(),
                self.template.n_rows()
            )));
        }
        let (i, new) = self.store.insert(pi);
        if new {
            let pi = self.store.get(i).to_vec();
            self.vertex_coupling.push(self.template.coupling_transpose(&pi));
            let tol = self.dual_tol;
            self.history.distinct.par_iter_mut().for_each(|d| {
                let v = d
                    .data
                    .is_dual_feasible(&pi, tol)
                    .then(|| d.data.vertex_intercept(&pi) - d.data.floor);
                d.intercepts.push(v);
            });
        }
        Ok((i, new))
    }

    /// `max{πᵀ(r_k − T w) + offset_k : π stored, dual feasible for k}` minus
    /// the floor, with the maximizing vertex (lowest index on ties).
    fn best_vertex(&self, k: usize, w: &[f64]) -> Option<(usize, f64)> {
        let d = &self.history.distinct[k];
        let mut best: Option<(usize, f64)> = None;
        for (i, icpt) in d.intercepts.iter().enumerate() {
            if let Some(a) = icpt {
                let v = a - crate::lp::dot(&self.vertex_coupling[i], w);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        best
    }

    /// Vertex-store approximation `h_m(w, d)` of the recourse cost of any
    /// realization, or `None` if no stored vertex is dual feasible for it.
    pub fn approx_recourse(&self, w: &Targets, d: &PeriodRealization) -> Result<Option<f64>, CutError> {
        let data = self.template.realization_data(d)?;
        let tw = self.template.apply_coupling(&w.encode());
        let best = self
            .store
            .iter()
            .filter(|pi| data.is_dual_feasible(pi, self.dual_tol))
            .map(|pi| {
                crate::lp::dot(pi, &data.base_rhs) - crate::lp::dot(pi, &tw) + data.offset
            })
            .reduce(f64::max);
        Ok(best)
    }

    /// New cut at `w` from the current store and history (not stored).
    pub fn generate_cut(&self, w: &Targets) -> Result<Cut, CutError> {
        if self.store.is_empty() {
            return Err(CutError::EmptyStore);
        }
        let m = self.periods();
        if m == 0 {
            return Err(CutError::DimensionMismatch("no observed periods".into()));
        }
        let w = w.encode();
        let picks: Vec<(usize, usize)> = (0..self.history.distinct.len())
            .into_par_iter()
            .map(|k| {
                self.best_vertex(k, &w)
                    .map(|(i, _)| (k, i))
                    .ok_or(CutError::NoFeasibleVertex(k))
            })
            .collect::<Result<_, _>>()?;
        let nw = w.len();
        let mut alpha = 0.0;
        let mut beta = vec![0.0; nw];
        for (k, i) in picks {
            let d = &self.history.distinct[k];
            let weight = d.count as f64 / m as f64;
            alpha += weight * d.intercepts[i].expect("picked vertex is feasible");
            for (b, t) in beta.iter_mut().zip(&self.vertex_coupling[i]) {
                *b -= weight * t;
            }
        }
        Ok(Cut {
            alpha,
            beta,
            birth_period: m,
        })
    }

    /// One period of the scheme after `S_m` was solved at `w_m`: store the
    /// vertex, record `d_m`, rescale earlier cuts and add the new one.
    pub fn update(&mut self, w_m: &Targets, d_m: &PeriodRealization, pi: Vec<f64>) -> Result<&Cut, CutError> {
        self.add_vertex(pi)?;
        self.observe(d_m)?;
        let m = self.periods();
        rescale_cuts(&mut self.cuts, m);
        let cut = self.generate_cut(w_m)?;
        self.cuts.push(cut);
        Ok(self.cuts.last().expect("just pushed"))
    }

    pub fn master<'a>(&'a self, target_box: &'a TargetBox) -> MasterProblem<'a> {
        MasterProblem {
            cuts: &self.cuts,
            design_cost: self.template.design_cost(),
            target_box,
            floor: self.floor(),
        }
    }

    /// `φ̲_m(w)`.
    pub fn lower_bound_at(&self, w: &Targets, target_box: &TargetBox) -> Result<f64, CutError> {
        self.master(target_box).lower_bound_at(w)
    }

    /// Running cost `φ_m(w) = c_wᵀw + (1/m) Σ h(w, d_ξ)` by fresh stage solves.
    pub fn running_cost(&self, w: &Targets) -> Result<f64, CutError> {
        let m = self.periods();
        if m == 0 {
            return Err(CutError::DimensionMismatch("no observed periods".into()));
        }
        let costs: Vec<f64> = self
            .history
            .distinct
            .par_iter()
            .map(|d| self.template.stage_cost(w, &d.realization))
            .collect::<Result<_, _>>()?;
        let total: f64 = costs
            .iter()
            .zip(&self.history.distinct)
            .map(|(h, d)| h * d.count as f64)
            .sum();
        Ok(self.template.design_value(w) + total / m as f64)
    }

    /// Replace the live cuts, e.g. after external pruning.
    pub fn set_cuts(&mut self, cuts: Vec<Cut>) {
        self.cuts = cuts;
    }
}

/// One line of the cut ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutRecord {
    pub period: usize,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub birth_period: usize,
}

pub fn write_cut_record<W: Write>(out: &mut W, period: usize, cut: &Cut) -> Result<(), CutError> {
    let rec = CutRecord {
        period,
        alpha: cut.alpha,
        beta: cut.beta.clone(),
        birth_period: cut.birth_period,
    };
    serde_json::to_writer(&mut *out, &rec).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> TargetBox {
        TargetBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn rescale_halves_at_period_two() {
        let mut cuts = vec![Cut {
            alpha: 2.0,
            beta: vec![-1.0, 0.0],
            birth_period: 1,
        }];
        rescale_cuts(&mut cuts, 2);
        assert_eq!(cuts[0].alpha, 1.0);
        assert_eq!(cuts[0].beta, vec![-0.5, 0.0]);
    }

    #[test]
    fn telescoping_rescale() {
        let mut cuts = vec![Cut {
            alpha: 6.0,
            beta: vec![3.0, -9.0],
            birth_period: 3,
        }];
        for m in 4..=6 {
            rescale_cuts(&mut cuts, m);
        }
        assert!((cuts[0].alpha - 3.0).abs() < 1e-15);
        assert!((cuts[0].beta[1] + 4.5).abs() < 1e-15);
    }

    #[test]
    fn positive_gradient_goes_to_lower_corner() {
        let cuts = [Cut {
            alpha: 1.0,
            beta: vec![0.5, 0.25],
            birth_period: 1,
        }];
        let bx = unit_box();
        let master = MasterProblem {
            cuts: &cuts,
            design_cost: &[0.0, 1.0],
            target_box: &bx,
            floor: 0.0,
        };
        let (w, lb) = master.solve().unwrap();
        assert_eq!(w, Targets::new(vec![0.0], 0.0));
        assert!((lb - 1.0).abs() < 1e-12);
    }

    #[test]
    fn v_shaped_model_minimum() {
        // max(1 - w0, w0) + w1 → minimum 0.5 at (0.5, 0)
        let cuts = [
            Cut { alpha: 1.0, beta: vec![-1.0, 0.0], birth_period: 1 },
            Cut { alpha: 0.0, beta: vec![1.0, 0.0], birth_period: 2 },
        ];
        let bx = unit_box();
        let master = MasterProblem {
            cuts: &cuts,
            design_cost: &[0.0, 1.0],
            target_box: &bx,
            floor: 2.0,
        };
        let (w, lb) = master.solve().unwrap();
        assert!((w.x0[0] - 0.5).abs() < 1e-12 && w.eta.abs() < 1e-12);
        assert!((lb - 2.5).abs() < 1e-12);
        assert!(matches!(
            MasterProblem { cuts: &[], ..master }.solve(),
            Err(CutError::EmptyCuts)
        ));
    }

    #[test]
    fn dominated_cuts_are_pruned() {
        let mut cuts = vec![
            Cut { alpha: 0.0, beta: vec![0.0, 0.0], birth_period: 1 },
            Cut { alpha: 1.0, beta: vec![0.0, 0.0], birth_period: 2 },
            Cut { alpha: 0.0, beta: vec![2.0, 0.0], birth_period: 3 },
        ];
        prune_dominated(&mut cuts, &[0.0, 0.0], &unit_box());
        let births: Vec<usize> = cuts.iter().map(|c| c.birth_period).collect();
        assert_eq!(births, vec![2, 3]);
    }

    #[test]
    fn store_dedups_within_tolerance() {
        let mut s = VertexStore::new(1e-9);
        assert_eq!(s.insert(vec![1.0, 2.0]), (0, true));
        assert_eq!(s.insert(vec![1.0 + 1e-12, 2.0]), (0, false));
        assert_eq!(s.insert(vec![1.0, 2.1]), (1, true));
        assert_eq!(s.len(), 2);
    }
}
