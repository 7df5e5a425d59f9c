//! Shared models and data for integration tests.

use std::sync::Arc;

use hmpc::battery::{BatteryModel, BatteryParams, PeakSlack};
use hmpc::lp::{GeneralLp, Sense};
use hmpc::scenario::{synthetic_pool, PeriodRealization, ScenarioPool, SyntheticSpec};
use hmpc::stage::{
    CouplingEntry, StageError, StageModel, StageProgram, StageTemplate, TargetBox,
};

/// Two independent shortfall terms:
/// `h(w, d) = p₀·max(L₀ − w₀, 0) + p₁·max(L₁ − w₁, 0)`, with
/// `p = energy_price[0..2]` and `L = load[0..2]`. Shortfalls are capped at 100.
#[derive(Debug, Clone)]
pub struct Shortfall {
    pub design: [f64; 2],
}

impl StageModel for Shortfall {
    fn n_state(&self) -> usize {
        1
    }
    fn design_cost(&self) -> Vec<f64> {
        self.design.to_vec()
    }
    fn program(&self, d: &PeriodRealization) -> Result<StageProgram, StageError> {
        let mut lp = GeneralLp::default();
        let y0 = lp.add_var(d.energy_price[0], 0.0, 100.0);
        let y1 = lp.add_var(d.energy_price[1], 0.0, 100.0);
        let r0 = lp.add_constraint(vec![(y0, 1.0)], Sense::Ge, d.load[0]);
        let r1 = lp.add_constraint(vec![(y1, 1.0)], Sense::Ge, d.load[1]);
        Ok(StageProgram {
            lp,
            coupling: vec![
                CouplingEntry { row: r0, target: 0, coef: 1.0 },
                CouplingEntry { row: r1, target: 1, coef: 1.0 },
            ],
            boundary: vec![],
            initial_state: vec![y0],
            terminal_state: vec![y0],
            elastic: vec![],
        })
    }
    fn recourse_floor(&self, _: &PeriodRealization) -> f64 {
        0.0
    }
}

pub fn shortfall_data(price: [f64; 2], level: [f64; 2]) -> PeriodRealization {
    PeriodRealization {
        energy_price: vec![price[0], price[1], 0.0],
        fr_price: vec![0.0; 3],
        load: vec![level[0], level[1], 0.0],
        fr_request: vec![0.0; 3],
    }
}

pub fn shortfall_value(design: [f64; 2], w: &[f64], d: &PeriodRealization) -> f64 {
    let h: f64 = (0..2)
        .map(|i| d.energy_price[i] * (d.load[i] - w[i]).max(0.0))
        .sum();
    design[0] * w[0] + design[1] * w[1] + h
}

pub fn shortfall_template(design: [f64; 2]) -> StageTemplate {
    StageTemplate::new(
        Arc::new(Shortfall { design }),
        &shortfall_data([1.0, 1.0], [0.0, 0.0]),
    )
    .unwrap()
}

pub fn unit_box(side: f64) -> TargetBox {
    TargetBox::new(vec![0.0, 0.0], vec![side, side]).unwrap()
}

pub struct BatteryFixture {
    pub params: BatteryParams,
    pub model: BatteryModel,
    pub template: StageTemplate,
    pub pool: ScenarioPool,
    pub target_box: TargetBox,
}

/// Battery with the default elastic penalty over a synthetic pool.
pub fn battery_fixture(templates: usize, steps: usize, seed: u64) -> BatteryFixture {
    let params = BatteryParams {
        period_steps: steps,
        ..BatteryParams::default()
    };
    let pool = synthetic_pool(&SyntheticSpec {
        templates,
        steps,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let model = BatteryModel::with_default_penalty(params.clone()).unwrap();
    let template = StageTemplate::new(Arc::new(model.clone()), &pool.templates[0]).unwrap();
    let max_load = pool
        .templates
        .iter()
        .map(|d| d.peak_load())
        .fold(0.0, f64::max);
    let target_box = params.default_box(max_load);
    BatteryFixture {
        params,
        model,
        template,
        pool,
        target_box,
    }
}

pub fn hard_peak_model(params: BatteryParams) -> BatteryModel {
    BatteryModel::new(params, PeakSlack::Off).unwrap()
}
