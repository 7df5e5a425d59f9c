//! The hierarchical scheme: the cut engine sets periodic targets between
//! periods, an intra-period MPC plans each period on a forecast.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cuts::{prune_dominated, CutEngine, CutError, FloorRule};
use crate::oracle;
use crate::scenario::{ForecastModel, PeriodRealization, ScenarioPool};
use crate::stage::{StageError, StageResult, StageTemplate, TargetBox, Targets};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Cut(#[from] CutError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error("initial targets lie outside the target box")]
    TargetsOutsideBox,
}

/// When `φ_m(w_m)` is recomputed: every period up to `dense_until`, then
/// every `sparse_every`-th period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSchedule {
    pub dense_until: usize,
    pub sparse_every: usize,
}

impl Default for EvalSchedule {
    fn default() -> Self {
        Self {
            dense_until: 100,
            sparse_every: 5,
        }
    }
}

impl EvalSchedule {
    pub fn every_period() -> Self {
        Self {
            dense_until: usize::MAX,
            sparse_every: 1,
        }
    }

    pub fn due(&self, m: usize) -> bool {
        m <= self.dense_until || m.is_multiple_of(self.sparse_every.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub target_box: TargetBox,
    /// `None` starts from the box center.
    pub initial_targets: Option<Targets>,
    pub schedule: EvalSchedule,
    /// Drop cuts dominated on the whole box after each update.
    pub prune_dominated: bool,
    /// Use the exact box minimum of each realization's recourse cost as the
    /// rescaling floor instead of the model's closed-form bound.
    pub exact_floor: bool,
}

impl ControllerConfig {
    pub fn new(target_box: TargetBox) -> Self {
        Self {
            target_box,
            initial_targets: None,
            schedule: EvalSchedule::default(),
            prune_dominated: false,
            exact_floor: true,
        }
    }
}

/// Metrics of one completed period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub period: usize,
    /// `w_m`, the targets applied during the period.
    pub targets: Targets,
    /// `φ_m(w_m)`, when scheduled.
    pub running_cost: Option<f64>,
    /// `φ̲_m(w_m)`.
    pub lower_bound: f64,
    /// `ε_m`, when the running cost is available.
    pub current_gap: Option<f64>,
    /// `ε̄_m`, when a reference cost is available.
    pub overall_gap: Option<f64>,
    /// `h(w_m, d_m)` on the realized data.
    pub stage_cost: f64,
    pub slack_activation: f64,
    /// `w_{m+1}` and the model value `φ̲_m(w_{m+1})` there.
    pub next_targets: Targets,
    pub master_value: f64,
}

/// `(φ − φ̲)/|φ|`.
pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    (upper - lower) / upper.abs().max(f64::MIN_POSITIVE)
}

/// `ε̄ = (reference − lower)/|reference|`.
pub fn overall_gap(reference_cost: f64, lower_bound: f64) -> f64 {
    relative_gap(reference_cost, lower_bound)
}

/// Low-level policy for one period: the stage problem on forecast data
/// with the targets held fixed.
pub fn intra_period_mpc(
    template: &StageTemplate,
    targets: &Targets,
    forecast: &PeriodRealization,
) -> Result<StageResult, StageError> {
    template.solve_stage(targets, forecast)
}

/// State of the hierarchical scheme between periods.
#[derive(Debug, Clone)]
pub struct HierarchyState {
    engine: CutEngine,
    config: ControllerConfig,
    targets: Targets,
    realized_cost: f64,
}

impl HierarchyState {
    pub fn new(template: StageTemplate, config: ControllerConfig) -> Result<Self, ControllerError> {
        let targets = config
            .initial_targets
            .clone()
            .unwrap_or_else(|| config.target_box.center());
        if !config.target_box.contains(&targets, 0.0) {
            return Err(ControllerError::TargetsOutsideBox);
        }
        let floor = if config.exact_floor {
            FloorRule::BoxMinimum(config.target_box.clone())
        } else {
            FloorRule::Model
        };
        Ok(Self {
            engine: CutEngine::new(template).with_floor_rule(floor)?,
            config,
            targets,
            realized_cost: 0.0,
        })
    }

    /// Index of the upcoming period (1-based).
    pub fn period(&self) -> usize {
        self.engine.periods() + 1
    }

    /// Targets for the upcoming period.
    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn engine(&self) -> &CutEngine {
        &self.engine
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn template(&self) -> &StageTemplate {
        self.engine.template()
    }

    /// Sum over completed periods of `c_wᵀw_m + h(w_m, d_m)`.
    pub fn realized_cost(&self) -> f64 {
        self.realized_cost
    }

    pub fn mpc(&self, forecast: &PeriodRealization) -> Result<StageResult, StageError> {
        intra_period_mpc(self.template(), &self.targets, forecast)
    }

    /// Observe the period's data, update the cut model and move to the next
    /// targets.
    pub fn step_period(&mut self, realized: &PeriodRealization) -> Result<GapRecord, ControllerError> {
        let w_m = self.targets.clone();
        let stage = self.template().solve_stage(&w_m, realized)?;
        self.realized_cost += self.template().design_value(&w_m) + stage.cost_h;

        self.engine.update(&w_m, realized, stage.dual_vertex)?;
        if self.config.prune_dominated {
            let mut cuts = self.engine.cuts().to_vec();
            prune_dominated(&mut cuts, self.template().design_cost(), &self.config.target_box);
            self.engine.set_cuts(cuts);
        }
        let m = self.engine.periods();
        let master = self.engine.master(&self.config.target_box);
        let lower_bound = master.lower_bound_at(&w_m)?;
        let (next, master_value) = master.solve()?;

        let running_cost = if self.config.schedule.due(m) {
            Some(self.engine.running_cost(&w_m)?)
        } else {
            None
        };
        let current_gap = running_cost.map(|phi| relative_gap(phi, lower_bound));
        self.targets = next.clone();
        Ok(GapRecord {
            period: m,
            targets: w_m,
            running_cost,
            lower_bound,
            current_gap,
            overall_gap: None,
            stage_cost: stage.cost_h,
            slack_activation: stage.slack_activation,
            next_targets: next,
            master_value,
        })
    }
}

/// Everything recorded by [`simulate`].
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub records: Vec<GapRecord>,
    /// MPC plans of the first periods, as `(period, plan)`.
    pub plans: Vec<(usize, StageResult)>,
    pub realized_cost: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationOptions<'a> {
    /// Number of leading periods whose MPC plans are kept.
    pub keep_plans: usize,
    /// Exact-expectation reference for `ε̄_m`, computed on the running-cost schedule.
    pub reference_pool: Option<&'a ScenarioPool>,
}

impl Default for SimulationOptions<'_> {
    fn default() -> Self {
        Self {
            keep_plans: 7,
            reference_pool: None,
        }
    }
}

/// Runs the scheme over `periods`: each period is planned on a forecast,
/// then its realized data is observed.
pub fn simulate<'a, I>(
    state: &mut HierarchyState,
    periods: I,
    forecast: &mut ForecastModel,
    opts: &SimulationOptions,
) -> Result<SimulationOutput, ControllerError>
where
    I: IntoIterator<Item = &'a PeriodRealization>,
{
    let mut records = Vec::new();
    let mut plans = Vec::new();
    for d in periods {
        let m = state.period();
        let guess = forecast.make_forecast(d);
        let plan = state.mpc(&guess)?;
        if m <= opts.keep_plans {
            plans.push((m, plan));
        }
        let mut rec = state.step_period(d)?;
        if let Some(pool) = opts.reference_pool {
            if rec.running_cost.is_some() {
                let reference = oracle::reference_cost(state.template(), pool, &rec.targets)?;
                rec.overall_gap = Some(overall_gap(reference, rec.lower_bound));
            }
        }
        log::debug!(
            "period {}: {} lb={:.4} phi={:?}",
            rec.period,
            rec.targets,
            rec.lower_bound,
            rec.running_cost
        );
        records.push(rec);
    }
    Ok(SimulationOutput {
        records,
        plans,
        realized_cost: state.realized_cost(),
    })
}
