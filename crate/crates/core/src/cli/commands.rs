//! The four subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::battery::{BatteryModel, BatteryParams};
use crate::controller::{overall_gap, ControllerConfig, EvalSchedule, GapRecord, HierarchyState};
use crate::cuts::write_cut_record;
use crate::oracle::{self, InitialState, TerminalState};
use crate::scenario::{
    load_csv, synthetic_pool, write_csv, ForecastModel, PeriodRealization, ScenarioPool,
    SyntheticSpec,
};
use crate::stage::{StageTemplate, TargetBox, Targets};

use super::config::{RunConfig, Source};
use super::output::{self, MetricsRow};
use super::svg::{line_chart, Panel, Series};
use super::CliError;

// RNG streams of the run seed
const REALIZED_STREAM: u64 = 2;
const WARM_STREAM: u64 = 3;

/// Everything a command needs, derived from the configuration alone.
pub struct Setup {
    pub params: BatteryParams,
    pub model: Arc<BatteryModel>,
    pub template: StageTemplate,
    /// Distribution used for exact expectations.
    pub pool: ScenarioPool,
    /// Realized data of periods `1..=horizon`.
    pub periods: Vec<PeriodRealization>,
    pub target_box: TargetBox,
}

fn empirical_pool(days: &[PeriodRealization], seed: u64) -> Result<ScenarioPool, CliError> {
    let merged = oracle::merge_history(days);
    let total = days.len() as f64;
    let weights = merged.iter().map(|(_, c)| *c as f64 / total).collect();
    let templates = merged.into_iter().map(|(d, _)| d.clone()).collect();
    Ok(ScenarioPool::new(templates, weights, seed)?)
}

fn draw(pool: &ScenarioPool, seed: u64, stream: u64, count: usize) -> Vec<PeriodRealization> {
    let sampling = ScenarioPool {
        seed,
        ..pool.clone()
    };
    let mut s = sampling.sampler(stream);
    (0..count).map(|_| s.sample_period()).collect()
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let params = cfg.battery_params().map_err(CliError::Input)?;
        let model = Arc::new(cfg.model_with(params.clone()).map_err(CliError::Input)?);
        let (pool, periods) = match cfg.source {
            Source::Synthetic => {
                let pool = synthetic_pool(&SyntheticSpec {
                    templates: cfg.templates,
                    steps: cfg.steps,
                    seed: cfg.seed,
                    peak_load_kw: cfg.peak_load_kw,
                    load_spread: cfg.load_spread,
                    price_spread: cfg.price_spread,
                })?;
                let periods = draw(&pool, cfg.seed, REALIZED_STREAM, cfg.horizon);
                (pool, periods)
            }
            Source::Pool => {
                let path = cfg.pool_path.as_deref().expect("validated");
                let pool = ScenarioPool::load_json(path)
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                let periods = draw(&pool, cfg.seed, REALIZED_STREAM, cfg.horizon);
                (pool, periods)
            }
            Source::Csv => {
                let path = cfg.csv_path.as_deref().expect("validated");
                let days = load_csv(path, cfg.steps)
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                if days.len() < cfg.horizon {
                    return Err(CliError::Input(format!(
                        "{} holds {} periods, horizon is {}",
                        path.display(),
                        days.len(),
                        cfg.horizon
                    )));
                }
                let pool = empirical_pool(&days, cfg.seed)?;
                (pool, days[..cfg.horizon].to_vec())
            }
        };
        if pool.steps() != cfg.steps {
            return Err(CliError::Input(format!(
                "data has {} steps per period, config has {}",
                pool.steps(),
                cfg.steps
            )));
        }
        let template = StageTemplate::new(model.clone(), &periods[0])?;
        let max_load = pool
            .templates
            .iter()
            .chain(&periods)
            .map(|d| d.peak_load())
            .fold(0.0, f64::max);
        let target_box = cfg.target_box(&params, max_load).map_err(CliError::Input)?;
        Ok(Self {
            params,
            model,
            template,
            pool,
            periods,
            target_box,
        })
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Input(format!("{}: {e}", cfg.out.display())))?;
    Ok(&cfg.out)
}

pub fn gen_data(cfg: &RunConfig) -> Result<(), CliError> {
    let setup = Setup::new(cfg)?;
    let dir = out_dir(cfg)?;
    setup.pool.save_json(&dir.join("pool.json"))?;
    write_csv(&dir.join("data.csv"), &setup.periods)?;
    println!(
        "wrote {} templates and {} periods to {}",
        setup.pool.len(),
        setup.periods.len(),
        dir.display()
    );
    Ok(())
}

/// Initial targets: explicit values, else the periodic optimum on a bundle of
/// forecasts, else the box center.
fn initial_targets(cfg: &RunConfig, setup: &Setup) -> Result<Option<Targets>, CliError> {
    if let Some(t) = cfg.initial_targets() {
        return Ok(Some(t));
    }
    if cfg.warm_start == 0 {
        return Ok(None);
    }
    let days = match cfg.source {
        Source::Csv => setup.periods.iter().take(cfg.warm_start).cloned().collect(),
        _ => draw(&setup.pool, cfg.seed, WARM_STREAM, cfg.warm_start),
    };
    let mut fm = ForecastModel::new(cfg.sigma, cfg.seed.wrapping_add(1))?;
    let bundle: Vec<PeriodRealization> = days.iter().map(|d| fm.make_forecast(d)).collect();
    let sol = oracle::solve_saa(&setup.template, &bundle, &setup.target_box, cfg.oracle_cap)?;
    Ok(Some(sol.targets))
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let setup = Setup::new(cfg)?;
    let dir = out_dir(cfg)?;
    let mut ccfg = ControllerConfig::new(setup.target_box.clone());
    ccfg.initial_targets = initial_targets(cfg, &setup)?;
    ccfg.schedule = EvalSchedule {
        dense_until: cfg.dense_until,
        sparse_every: cfg.eval_every,
    };
    ccfg.exact_floor = cfg.exact_floor;
    let mut state = HierarchyState::new(setup.template.clone(), ccfg)?;
    let initial = state.targets().clone();
    let mut forecast = ForecastModel::new(cfg.sigma, cfg.seed)?;

    let mut cuts = BufWriter::new(File::create(dir.join("cuts.jsonl"))?);
    let mut records: Vec<GapRecord> = Vec::with_capacity(cfg.horizon);
    let mut plans = Vec::new();
    for d in &setup.periods {
        let m = state.period();
        let guess = forecast.make_forecast(d);
        let plan = state.mpc(&guess)?;
        if m <= cfg.keep_plans {
            let tr = setup
                .model
                .decode_trajectory(&plan)
                .map_err(|e| CliError::Solver(e.to_string()))?;
            plans.push((m, tr));
        }
        let rec = state.step_period(d)?;
        if let Some(cut) = state.engine().cuts().iter().find(|c| c.birth_period == m) {
            write_cut_record(&mut cuts, m, cut)?;
        }
        log::info!(
            "period {m}: {} lb={:.4} eps={:?}",
            rec.targets,
            rec.lower_bound,
            rec.current_gap
        );
        records.push(rec);
    }
    cuts.flush()?;

    let rows: Vec<MetricsRow> = records.iter().map(MetricsRow::from_record).collect();
    output::write_metrics(&dir.join("metrics.csv"), &rows)?;
    output::write_targets(&dir.join("targets.csv"), &initial, &records)?;
    output::write_trajectories(&dir.join("trajectories.csv"), &plans, cfg.steps)?;
    setup.pool.save_json(&dir.join("pool.json"))?;
    fs::write(
        dir.join("battery.toml"),
        toml::to_string(&setup.params).map_err(|e| CliError::Input(e.to_string()))?,
    )?;
    fs::write(
        dir.join("run.toml"),
        toml::to_string(cfg).map_err(|e| CliError::Input(e.to_string()))?,
    )?;
    if cfg.svg {
        fs::write(dir.join("targets.svg"), targets_chart(&initial, &records))?;
        fs::write(dir.join("gap.svg"), gap_chart(&rows))?;
    }

    let last = records.last().expect("horizon >= 1");
    println!("periods: {}", records.len());
    println!("final targets: {}", last.next_targets);
    println!("realized cost: {}", state.realized_cost());
    if let Some(r) = records.iter().rev().find(|r| r.current_gap.is_some()) {
        println!("last eps (period {}): {:e}", r.period, r.current_gap.unwrap());
    }
    Ok(())
}

pub fn oracle(cfg: &RunConfig) -> Result<(), CliError> {
    let setup = Setup::new(cfg)?;
    let dir = out_dir(cfg)?;
    let saa = oracle::solve_saa(
        &setup.template,
        &setup.periods,
        &setup.target_box,
        cfg.oracle_cap,
    )?;
    output::write_json(&dir.join("saa.json"), &saa)?;
    println!(
        "periodic: cost {} targets {} over {} blocks",
        saa.cost, saa.targets, saa.blocks
    );
    if cfg.nonperiodic {
        let np = oracle::solve_nonperiodic(
            &setup.template,
            &setup.periods,
            &setup.target_box,
            &InitialState::Free,
            TerminalState::Free,
            cfg.oracle_cap,
        )?;
        output::write_json(&dir.join("nonperiodic.json"), &np)?;
        let tol = 1e-6 * (1.0 + saa.cost.abs());
        let ok = saa.cost >= np.cost - tol;
        println!("nonperiodic: cost {} peak {}", np.cost, np.eta);
        println!(
            "periodic >= nonperiodic: {} (difference {:e})",
            if ok { "PASS" } else { "FAIL" },
            saa.cost - np.cost
        );
    }
    Ok(())
}

fn required(path: &Path) -> Result<&Path, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Input(format!("missing {}", path.display())))
    }
}

pub fn gap(run_dir: &Path, pool_path: Option<&Path>) -> Result<(), CliError> {
    let run_toml = required(&run_dir.join("run.toml"))?.to_path_buf();
    let text = fs::read_to_string(&run_toml)?;
    let cfg = RunConfig::from_toml(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", run_toml.display())))?;
    let battery = required(&run_dir.join("battery.toml"))?.to_path_buf();
    let params: BatteryParams = toml::from_str(&fs::read_to_string(&battery)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", battery.display())))?;
    let model = cfg.model_with(params).map_err(CliError::Input)?;
    let default_pool = run_dir.join("pool.json");
    let pool_path = required(pool_path.unwrap_or(&default_pool))?;
    let pool = ScenarioPool::load_json(pool_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", pool_path.display())))?;
    let metrics = required(&run_dir.join("metrics.csv"))?.to_path_buf();
    let mut rows = output::read_metrics(&metrics)?;
    if rows.is_empty() {
        return Err(CliError::Input(format!("{} has no rows", metrics.display())));
    }

    let template = StageTemplate::new(Arc::new(model), &pool.templates[0])?;
    let mut violations = 0;
    for row in &mut rows {
        let reference = oracle::reference_cost(&template, &pool, &row.targets())?;
        row.reference_cost = Some(reference);
        row.epsbar = Some(overall_gap(reference, row.lower_bound));
        if row.lower_bound > reference + 1e-6 * (1.0 + reference.abs()) {
            violations += 1;
        }
    }
    output::write_metrics(&metrics, &rows)?;
    if cfg.svg {
        fs::write(run_dir.join("gap.svg"), gap_chart(&rows))?;
    }
    let last = rows.last().expect("nonempty");
    println!("rows: {}", rows.len());
    println!("final epsbar: {:e}", last.epsbar.expect("set above"));
    println!("rows with lower bound above reference: {violations}");
    Ok(())
}

fn targets_chart(initial: &Targets, records: &[GapRecord]) -> String {
    let mut e0 = vec![(0.0, initial.x0.first().copied().unwrap_or(0.0))];
    let mut eta = vec![(0.0, initial.eta)];
    for r in records {
        e0.push((r.period as f64, r.next_targets.x0.first().copied().unwrap_or(0.0)));
        eta.push((r.period as f64, r.next_targets.eta));
    }
    line_chart(
        "Periodic targets",
        "period",
        &[
            Panel {
                ylabel: "initial energy (kWh)".into(),
                series: vec![Series { name: "E0 target".into(), points: e0 }],
            },
            Panel {
                ylabel: "peak (kW)".into(),
                series: vec![Series { name: "peak target".into(), points: eta }],
            },
        ],
    )
}

fn gap_chart(rows: &[MetricsRow]) -> String {
    let pts = |f: &dyn Fn(&MetricsRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter()
            .filter_map(|r| f(r).map(|v| (r.period as f64, v)))
            .collect()
    };
    let mut gaps = vec![Series {
        name: "eps".into(),
        points: pts(&|r| r.eps),
    }];
    let epsbar = pts(&|r| r.epsbar);
    if !epsbar.is_empty() {
        gaps.push(Series { name: "epsbar".into(), points: epsbar });
    }
    let mut costs = vec![
        Series {
            name: "running cost".into(),
            points: pts(&|r| r.running_cost),
        },
        Series {
            name: "lower bound".into(),
            points: pts(&|r| Some(r.lower_bound)),
        },
    ];
    let reference = pts(&|r| r.reference_cost);
    if !reference.is_empty() {
        costs.push(Series { name: "reference".into(), points: reference });
    }
    line_chart(
        "Optimality gaps",
        "period",
        &[
            Panel { ylabel: "relative gap".into(), series: gaps },
            Panel { ylabel: "cost per period".into(), series: costs },
        ],
    )
}
