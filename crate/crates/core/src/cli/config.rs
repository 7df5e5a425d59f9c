//! Flat run configuration: a TOML file of scalar keys, each of which can be
//! overridden by a command-line flag.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::battery::{BatteryModel, BatteryParams, PeakSlack};
use crate::stage::{TargetBox, Targets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Finite pool generated from the synthetic daily shapes.
    Synthetic,
    /// Pool read from a JSON file.
    Pool,
    /// Consecutive days read from a CSV file, used in order.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon: usize,
    pub sigma: f64,
    pub out: PathBuf,
    /// TOML file with battery parameters; defaults are used when absent.
    pub battery: Option<PathBuf>,
    pub source: Source,
    pub pool_path: Option<PathBuf>,
    pub csv_path: Option<PathBuf>,
    pub templates: usize,
    pub steps: usize,
    pub peak_load_kw: f64,
    pub load_spread: f64,
    pub price_spread: f64,
    pub x0_min: Option<f64>,
    pub x0_max: Option<f64>,
    pub eta_min: Option<f64>,
    pub eta_max: Option<f64>,
    pub peak_penalty: Option<f64>,
    pub initial_x0: Option<f64>,
    pub initial_eta: Option<f64>,
    /// Days in the forecast bundle for the initial targets; 0 starts mid-box.
    pub warm_start: usize,
    pub exact_floor: bool,
    pub dense_until: usize,
    pub eval_every: usize,
    pub keep_plans: usize,
    pub oracle_cap: usize,
    pub nonperiodic: bool,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            horizon: 150,
            sigma: 0.1,
            out: PathBuf::from("out"),
            battery: None,
            source: Source::Synthetic,
            pool_path: None,
            csv_path: None,
            templates: 5,
            steps: 24,
            peak_load_kw: 3000.0,
            load_spread: 0.05,
            price_spread: 0.3,
            x0_min: None,
            x0_max: None,
            eta_min: None,
            eta_max: None,
            peak_penalty: None,
            initial_x0: None,
            initial_eta: None,
            warm_start: 0,
            exact_floor: true,
            dense_until: 100,
            eval_every: 5,
            keep_plans: 7,
            oracle_cap: crate::oracle::DEFAULT_CAP,
            nonperiodic: false,
            svg: true,
        }
    }
}

/// Command-line overrides, one flag per configuration key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Configuration file (TOML)
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of periods
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Forecast noise (lognormal sigma)
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Output directory
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub battery: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub source: Option<Source>,
    #[arg(long)]
    pub pool_path: Option<PathBuf>,
    #[arg(long)]
    pub csv_path: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub peak_load_kw: Option<f64>,
    #[arg(long)]
    pub load_spread: Option<f64>,
    #[arg(long)]
    pub price_spread: Option<f64>,
    #[arg(long)]
    pub x0_min: Option<f64>,
    #[arg(long)]
    pub x0_max: Option<f64>,
    #[arg(long)]
    pub eta_min: Option<f64>,
    #[arg(long)]
    pub eta_max: Option<f64>,
    #[arg(long)]
    pub peak_penalty: Option<f64>,
    #[arg(long)]
    pub initial_x0: Option<f64>,
    #[arg(long)]
    pub initial_eta: Option<f64>,
    #[arg(long)]
    pub warm_start: Option<usize>,
    #[arg(long)]
    pub exact_floor: Option<bool>,
    #[arg(long)]
    pub dense_until: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub keep_plans: Option<usize>,
    #[arg(long)]
    pub oracle_cap: Option<usize>,
    #[arg(long)]
    pub nonperiodic: Option<bool>,
    #[arg(long)]
    pub svg: Option<bool>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

macro_rules! apply {
    ($cfg:ident, $ov:ident, $($field:ident),*) => {
        $( if let Some(v) = $ov.$field.clone() { $cfg.$field = v; } )*
    };
}

macro_rules! apply_opt {
    ($cfg:ident, $ov:ident, $($field:ident),*) => {
        $( if let Some(v) = $ov.$field.clone() { $cfg.$field = Some(v); } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// File values (paths relative to the file), then flag overrides.
    pub fn load(ov: &Overrides) -> Result<Self, String> {
        let mut cfg = match &ov.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                let mut cfg = Self::from_toml(&text)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                let base = path.parent().unwrap_or(Path::new("."));
                resolve(base, &mut cfg.battery);
                resolve(base, &mut cfg.pool_path);
                resolve(base, &mut cfg.csv_path);
                let mut out = Some(cfg.out.clone());
                resolve(base, &mut out);
                cfg.out = out.expect("set above");
                cfg
            }
            None => Self::default(),
        };
        apply!(
            cfg, ov, seed, horizon, sigma, out, source, templates, steps, peak_load_kw,
            load_spread, price_spread, warm_start, exact_floor, dense_until, eval_every,
            keep_plans, oracle_cap, nonperiodic, svg
        );
        apply_opt!(
            cfg, ov, battery, pool_path, csv_path, x0_min, x0_max, eta_min, eta_max,
            peak_penalty, initial_x0, initial_eta
        );
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.horizon == 0 {
            return Err("horizon must be at least 1".into());
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if self.steps == 0 || self.templates == 0 {
            return Err("steps and templates must be positive".into());
        }
        if self.eval_every == 0 {
            return Err("eval_every must be positive".into());
        }
        match self.source {
            Source::Pool if self.pool_path.is_none() => {
                return Err("source = \"pool\" needs pool_path".into())
            }
            Source::Csv if self.csv_path.is_none() => {
                return Err("source = \"csv\" needs csv_path".into())
            }
            _ => {}
        }
        if self.initial_x0.is_some() != self.initial_eta.is_some() {
            return Err("initial_x0 and initial_eta must be given together".into());
        }
        if let Some(m) = self.peak_penalty {
            if !(m.is_finite() && m > 0.0) {
                return Err(format!("peak_penalty must be positive, got {m}"));
            }
        }
        Ok(())
    }

    pub fn battery_params(&self) -> Result<BatteryParams, String> {
        let mut params = match &self.battery {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                toml::from_str::<BatteryParams>(&text)
                    .map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => BatteryParams {
                period_steps: self.steps,
                ..BatteryParams::default()
            },
        };
        if self.battery.is_some() && params.period_steps != self.steps {
            return Err(format!(
                "battery file has period_steps = {}, config has steps = {}",
                params.period_steps, self.steps
            ));
        }
        params.period_steps = self.steps;
        params.validate().map_err(|e| e.to_string())?;
        Ok(params)
    }

    pub fn battery_model(&self) -> Result<BatteryModel, String> {
        self.model_with(self.battery_params()?)
    }

    /// Battery model on explicit parameters with the configured penalty.
    pub fn model_with(&self, params: BatteryParams) -> Result<BatteryModel, String> {
        let m = self.peak_penalty.unwrap_or_else(|| params.default_peak_penalty());
        BatteryModel::new(params, PeakSlack::Penalty(m)).map_err(|e| e.to_string())
    }

    /// Configured bounds, falling back to the battery defaults.
    pub fn target_box(&self, params: &BatteryParams, max_load: f64) -> Result<TargetBox, String> {
        let d = params.default_box(max_load);
        TargetBox::new(
            vec![self.x0_min.unwrap_or(d.lower[0]), self.eta_min.unwrap_or(d.lower[1])],
            vec![self.x0_max.unwrap_or(d.upper[0]), self.eta_max.unwrap_or(d.upper[1])],
        )
        .map_err(|e| e.to_string())
    }

    pub fn initial_targets(&self) -> Option<Targets> {
        Some(Targets::new(vec![self.initial_x0?], self.initial_eta?))
    }
}
