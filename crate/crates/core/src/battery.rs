//! Battery storage bidding into energy and frequency-regulation markets
//! under a demand charge, as a periodic stage model.
//!
//! Per time point `t = 0..=n` the period has net discharge `P`, FR capacity
//! `F`, state of charge `E`, utility draw `d` and (optionally) an elastic
//! peak slack `s`. The periodic state is `E₀ = E_n = x₀`; the peak target
//! `η` caps the utility draw.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{GeneralLp, Sense};
use crate::scenario::PeriodRealization;
use crate::stage::{
    BoundaryRow, CouplingEntry, StageError, StageModel, StageProgram, StageResult, TargetBox,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatteryError {
    #[error("invalid battery parameters: {0}")]
    InvalidParams(String),
    #[error("result does not match this model: {0}")]
    MapMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryParams {
    /// Ē, kWh
    pub capacity_kwh: f64,
    /// P̄, kW
    pub max_discharge_kw: f64,
    /// P̲, kW
    pub max_charge_kw: f64,
    /// ρ, kWh of headroom held per kW of FR capacity
    pub fr_reserve_hours: f64,
    /// ΔP̄, kW per step
    pub ramp_limit_kw: f64,
    /// π^D, $/kW charged on the peak target once per period
    pub demand_charge: f64,
    /// n, steps per period
    pub period_steps: usize,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity_kwh: 500.0,
            max_discharge_kw: 1000.0,
            max_charge_kw: 1000.0,
            fr_reserve_hours: 0.25,
            ramp_limit_kw: 500.0,
            demand_charge: 0.5,
            period_steps: 24,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), BatteryError> {
        let fields = [
            ("capacity_kwh", self.capacity_kwh),
            ("max_discharge_kw", self.max_discharge_kw),
            ("max_charge_kw", self.max_charge_kw),
            ("fr_reserve_hours", self.fr_reserve_hours),
            ("ramp_limit_kw", self.ramp_limit_kw),
            ("demand_charge", self.demand_charge),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(BatteryError::InvalidParams(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if self.capacity_kwh <= 0.0 {
            return Err(BatteryError::InvalidParams("capacity_kwh must be positive".into()));
        }
        if self.period_steps == 0 {
            return Err(BatteryError::InvalidParams("period_steps must be positive".into()));
        }
        Ok(())
    }

    /// Default penalty on peak slack, `10³·π^D` (at least 1 $/kW).
    pub fn default_peak_penalty(&self) -> f64 {
        1e3 * self.demand_charge.max(1e-3)
    }

    /// `x₀ ∈ [0, Ē]`, `η ∈ [0, max_load + P̲]`.
    pub fn default_box(&self, max_load: f64) -> TargetBox {
        TargetBox::new(
            vec![0.0, 0.0],
            vec![self.capacity_kwh, max_load + self.max_charge_kw],
        )
        .expect("nonnegative bounds")
    }
}

/// How the peak rows `d_t ≤ η` are enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PeakSlack {
    /// Hard constraint; stage problems may be infeasible for small `η`.
    Off,
    /// `d_t ≤ η + s_t`, with `penalty · s_t` added to the cost.
    Penalty(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryModel {
    params: BatteryParams,
    slack: PeakSlack,
}

/// Column layout of one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryLayout {
    pub steps: usize,
    pub elastic: bool,
}

impl BatteryLayout {
    fn block(&self, k: usize, t: usize) -> usize {
        debug_assert!(t <= self.steps);
        k * (self.steps + 1) + t
    }
    pub fn p(&self, t: usize) -> usize {
        self.block(0, t)
    }
    pub fn f(&self, t: usize) -> usize {
        self.block(1, t)
    }
    pub fn e(&self, t: usize) -> usize {
        self.block(2, t)
    }
    pub fn d(&self, t: usize) -> usize {
        self.block(3, t)
    }
    pub fn s(&self, t: usize) -> usize {
        assert!(self.elastic, "no slack columns without elastic peaks");
        self.block(4, t)
    }
    pub fn n_vars(&self) -> usize {
        (if self.elastic { 5 } else { 4 }) * (self.steps + 1)
    }
    /// Rows of the general form: `7(n+1) + 5n + 2`.
    pub fn n_rows(&self) -> usize {
        7 * (self.steps + 1) + 5 * self.steps + 2
    }
}

impl BatteryModel {
    pub fn new(params: BatteryParams, slack: PeakSlack) -> Result<Self, BatteryError> {
        params.validate()?;
        if let PeakSlack::Penalty(m) = slack {
            if !(m.is_finite() && m > 0.0) {
                return Err(BatteryError::InvalidParams(format!(
                    "peak penalty must be positive, got {m}"
                )));
            }
        }
        Ok(Self { params, slack })
    }

    /// Elastic peaks with the default penalty.
    pub fn with_default_penalty(params: BatteryParams) -> Result<Self, BatteryError> {
        let m = params.default_peak_penalty();
        Self::new(params, PeakSlack::Penalty(m))
    }

    pub fn params(&self) -> &BatteryParams {
        &self.params
    }

    pub fn peak_slack(&self) -> PeakSlack {
        self.slack
    }

    pub fn layout(&self) -> BatteryLayout {
        BatteryLayout {
            steps: self.params.period_steps,
            elastic: matches!(self.slack, PeakSlack::Penalty(_)),
        }
    }

    pub fn decode_trajectory(&self, result: &StageResult) -> Result<BatteryTrajectory, BatteryError> {
        self.decode_values(&result.trajectories)
    }

    pub fn decode_values(&self, y: &[f64]) -> Result<BatteryTrajectory, BatteryError> {
        let lay = self.layout();
        if y.len() != lay.n_vars() {
            return Err(BatteryError::MapMismatch(format!(
                "{} values, layout has {} variables",
                y.len(),
                lay.n_vars()
            )));
        }
        let n = lay.steps;
        let take = |f: &dyn Fn(usize) -> usize| (0..=n).map(|t| y[f(t)]).collect::<Vec<_>>();
        Ok(BatteryTrajectory {
            power: take(&|t| lay.p(t)),
            fr_capacity: take(&|t| lay.f(t)),
            energy: take(&|t| lay.e(t)),
            utility_draw: take(&|t| lay.d(t)),
            peak_slack: if lay.elastic {
                take(&|t| lay.s(t))
            } else {
                vec![0.0; n + 1]
            },
        })
    }
}

impl StageModel for BatteryModel {
    fn n_state(&self) -> usize {
        1
    }

    fn design_cost(&self) -> Vec<f64> {
        vec![0.0, self.params.demand_charge]
    }

    fn program(&self, d: &PeriodRealization) -> Result<StageProgram, StageError> {
        let p = &self.params;
        let lay = self.layout();
        let n = lay.steps;
        if d.steps() != n {
            return Err(StageError::DimensionMismatch(format!(
                "realization has {} steps, model has {n}",
                d.steps()
            )));
        }

        let mut lp = GeneralLp::default();
        for t in 0..=n {
            lp.add_var(-d.energy_price[t], -p.max_charge_kw, p.max_discharge_kw);
        }
        for t in 0..=n {
            let c = d.energy_price[t] * d.fr_request[t] - d.fr_price[t];
            lp.add_var(c, 0.0, p.max_discharge_kw);
        }
        for _ in 0..=n {
            lp.add_var(0.0, 0.0, p.capacity_kwh);
        }
        for _ in 0..=n {
            lp.add_var(0.0, 0.0, f64::INFINITY);
        }
        if let PeakSlack::Penalty(m) = self.slack {
            for _ in 0..=n {
                lp.add_var(m, 0.0, f64::INFINITY);
            }
        }

        let (pv, fv, ev, dv) = (|t| lay.p(t), |t| lay.f(t), |t| lay.e(t), |t| lay.d(t));
        let rho = p.fr_reserve_hours;
        for t in 0..=n {
            lp.add_constraint(vec![(pv(t), 1.0), (fv(t), 1.0)], Sense::Le, p.max_discharge_kw);
        }
        for t in 0..=n {
            lp.add_constraint(vec![(pv(t), 1.0), (fv(t), -1.0)], Sense::Ge, -p.max_charge_kw);
        }
        for t in 0..n {
            lp.add_constraint(
                vec![
                    (ev(t + 1), 1.0),
                    (ev(t), -1.0),
                    (pv(t), 1.0),
                    (fv(t), -d.fr_request[t]),
                ],
                Sense::Eq,
                0.0,
            );
        }
        for t in 0..=n {
            lp.add_constraint(vec![(fv(t), rho), (ev(t), -1.0)], Sense::Le, 0.0);
        }
        for t in 0..=n {
            lp.add_constraint(vec![(ev(t), 1.0), (fv(t), rho)], Sense::Le, p.capacity_kwh);
        }
        for t in 0..n {
            lp.add_constraint(vec![(fv(t), rho), (ev(t + 1), -1.0)], Sense::Le, 0.0);
        }
        for t in 0..n {
            lp.add_constraint(vec![(ev(t + 1), 1.0), (fv(t), rho)], Sense::Le, p.capacity_kwh);
        }
        for t in 0..n {
            lp.add_constraint(vec![(pv(t + 1), 1.0), (pv(t), -1.0)], Sense::Le, p.ramp_limit_kw);
        }
        for t in 0..n {
            lp.add_constraint(vec![(pv(t + 1), 1.0), (pv(t), -1.0)], Sense::Ge, -p.ramp_limit_kw);
        }
        for t in 0..=n {
            lp.add_constraint(
                vec![(dv(t), 1.0), (pv(t), 1.0), (fv(t), -d.fr_request[t])],
                Sense::Eq,
                d.load[t],
            );
        }
        let mut coupling = Vec::with_capacity(n + 3);
        let mut elastic = Vec::new();
        for t in 0..=n {
            let mut coeffs = vec![(dv(t), 1.0)];
            if lay.elastic {
                coeffs.push((lay.s(t), -1.0));
                elastic.push(lay.s(t));
            }
            let row = lp.add_constraint(coeffs, Sense::Le, 0.0);
            coupling.push(CouplingEntry { row, target: 1, coef: -1.0 });
        }
        for t in 0..=n {
            lp.add_constraint(vec![(pv(t), 1.0), (fv(t), 1.0)], Sense::Le, d.load[t]);
        }
        let first = lp.add_constraint(vec![(ev(0), 1.0)], Sense::Eq, 0.0);
        let last = lp.add_constraint(vec![(ev(n), 1.0)], Sense::Eq, 0.0);
        coupling.push(CouplingEntry { row: first, target: 0, coef: -1.0 });
        coupling.push(CouplingEntry { row: last, target: 0, coef: -1.0 });
        coupling.sort_by_key(|e| (e.row, e.target));
        debug_assert_eq!(lp.constraints.len(), lay.n_rows());

        Ok(StageProgram {
            lp,
            coupling,
            boundary: vec![
                BoundaryRow { row: first, state: 0, terminal: false },
                BoundaryRow { row: last, state: 0, terminal: true },
            ],
            initial_state: vec![ev(0)],
            terminal_state: vec![ev(n)],
            elastic,
        })
    }

    fn recourse_floor(&self, d: &PeriodRealization) -> f64 {
        // revenue per step is at most max(π^e, π^f)·min(P̄, L)
        -(0..d.load.len())
            .map(|t| {
                d.energy_price[t].max(d.fr_price[t]) * d.load[t].min(self.params.max_discharge_kw)
            })
            .sum::<f64>()
    }
}

/// Per-time-point values of one period, `n + 1` samples each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryTrajectory {
    /// P, kW net discharge
    pub power: Vec<f64>,
    /// F, kW
    pub fr_capacity: Vec<f64>,
    /// E, kWh
    pub energy: Vec<f64>,
    /// d, kW
    pub utility_draw: Vec<f64>,
    /// kW above the peak target
    pub peak_slack: Vec<f64>,
}

impl BatteryTrajectory {
    /// Largest `|E_{t+1} − E_t + P_t − α_t F_t|`.
    pub fn energy_balance_residual(&self, d: &PeriodRealization) -> f64 {
        (0..self.energy.len() - 1)
            .map(|t| {
                (self.energy[t + 1] - self.energy[t] + self.power[t]
                    - d.fr_request[t] * self.fr_capacity[t])
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn peak_draw(&self) -> f64 {
        self.utility_draw.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Market cost `Σ −π^e(P − αF) − π^f F` of this trajectory under `d`.
    pub fn market_cost(&self, d: &PeriodRealization) -> f64 {
        (0..self.power.len())
            .map(|t| {
                -d.energy_price[t] * (self.power[t] - d.fr_request[t] * self.fr_capacity[t])
                    - d.fr_price[t] * self.fr_capacity[t]
            })
            .sum()
    }
}
