//! Period data: realizations, finite-support pools, CSV series and forecasts.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Exogenous data of one period, sampled at `n + 1` time points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRealization {
    /// $/kWh
    pub energy_price: Vec<f64>,
    /// $/kW
    pub fr_price: Vec<f64>,
    /// kW
    pub load: Vec<f64>,
    /// fraction of reserved FR capacity dispatched, in [0, 1]
    pub fr_request: Vec<f64>,
}

impl PeriodRealization {
    /// Number of steps `n` (one less than the number of samples).
    pub fn steps(&self) -> usize {
        self.load.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let len = self.load.len();
        if len < 2 {
            return Err(ScenarioError::Schema(
                "a period needs at least two samples".into(),
            ));
        }
        for (name, v) in [
            ("energy_price", &self.energy_price),
            ("fr_price", &self.fr_price),
            ("fr_request", &self.fr_request),
        ] {
            if v.len() != len {
                return Err(ScenarioError::Schema(format!(
                    "{name} has {} samples, load has {len}",
                    v.len()
                )));
            }
        }
        for t in 0..len {
            let (e, f, l, a) = (
                self.energy_price[t],
                self.fr_price[t],
                self.load[t],
                self.fr_request[t],
            );
            if !(e.is_finite() && f.is_finite() && l.is_finite() && a.is_finite()) {
                return Err(ScenarioError::Value(format!("non-finite sample at t={t}")));
            }
            if e < 0.0 || f < 0.0 {
                return Err(ScenarioError::Value(format!("negative price at t={t}")));
            }
            if l < 0.0 {
                return Err(ScenarioError::Value(format!("negative load {l} at t={t}")));
            }
            if !(0.0..=1.0).contains(&a) {
                return Err(ScenarioError::Value(format!(
                    "fr_request {a} outside [0, 1] at t={t}"
                )));
            }
        }
        Ok(())
    }

    /// Largest load sample.
    pub fn peak_load(&self) -> f64 {
        self.load.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// Same data with every price multiplied by `factor`.
    pub fn scale_prices(&self, factor: f64) -> Self {
        Self {
            energy_price: self.energy_price.iter().map(|p| p * factor).collect(),
            fr_price: self.fr_price.iter().map(|p| p * factor).collect(),
            ..self.clone()
        }
    }
}

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A finite support of period templates with probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPool {
    pub templates: Vec<PeriodRealization>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioPool {
    pub fn new(
        templates: Vec<PeriodRealization>,
        weights: Vec<f64>,
        seed: u64,
    ) -> Result<Self, ScenarioError> {
        let pool = Self {
            templates,
            weights,
            seed,
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn uniform(templates: Vec<PeriodRealization>, seed: u64) -> Result<Self, ScenarioError> {
        let k = templates.len().max(1);
        Self::new(templates, vec![1.0 / k as f64; k], seed)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.templates[0].steps()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.templates.is_empty() {
            return Err(ScenarioError::Schema("pool has no templates".into()));
        }
        if self.weights.len() != self.templates.len() {
            return Err(ScenarioError::Schema(format!(
                "{} weights for {} templates",
                self.weights.len(),
                self.templates.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ScenarioError::Value("weights must be nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::Value(format!("weights sum to {total}")));
        }
        let n = self.templates[0].steps();
        for (k, t) in self.templates.iter().enumerate() {
            t.validate()
                .map_err(|e| ScenarioError::Value(format!("template {k}: {e}")))?;
            if t.steps() != n {
                return Err(ScenarioError::Schema(format!(
                    "template {k} has {} steps, template 0 has {n}",
                    t.steps()
                )));
            }
        }
        Ok(())
    }

    pub fn sampler(&self, stream: u64) -> PoolSampler<'_> {
        PoolSampler {
            pool: self,
            index: WeightedIndex::new(&self.weights).expect("validated weights"),
            rng: stream_rng(self.seed, stream),
        }
    }

    pub fn load_json(path: &Path) -> Result<Self, ScenarioError> {
        let pool: Self = serde_json::from_reader(File::open(path)?)?;
        pool.validate()?;
        Ok(pool)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), ScenarioError> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// I.i.d. draws from a pool on one RNG stream.
#[derive(Debug, Clone)]
pub struct PoolSampler<'a> {
    pool: &'a ScenarioPool,
    index: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl PoolSampler<'_> {
    pub fn sample_index(&mut self) -> usize {
        self.index.sample(&mut self.rng)
    }

    pub fn sample_period(&mut self) -> PeriodRealization {
        let k = self.sample_index();
        self.pool.templates[k].clone()
    }
}

/// Parameters of the synthetic daily pool.
///
/// Every template shares the same midnight samples, so any sequence of
/// templates is a continuous series and survives a CSV round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub templates: usize,
    pub steps: usize,
    pub seed: u64,
    /// Evening peak of the base load shape, kW.
    pub peak_load_kw: f64,
    /// Relative spread of the template load scale factors.
    pub load_spread: f64,
    /// Relative spread of the template price scale factors.
    pub price_spread: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            templates: 5,
            steps: 24,
            seed: 7,
            peak_load_kw: 3000.0,
            load_spread: 0.05,
            price_spread: 0.3,
        }
    }
}

const MIDNIGHT_FR_REQUEST: f64 = 0.25;

fn load_shape(hour: f64) -> f64 {
    let daily = 0.15 * (2.0 * std::f64::consts::PI * (hour - 9.0) / 24.0).sin();
    let evening = 0.25 * (-(hour - 18.0).powi(2) / (2.0 * 1.5 * 1.5)).exp();
    0.7 + daily + evening
}

// zero at both midnights, so template scaling leaves them untouched
fn day_bump(hour: f64) -> f64 {
    (std::f64::consts::PI * hour / 24.0).sin()
}

fn energy_price(hour: f64) -> f64 {
    let base = if (7.0..22.0).contains(&hour) { 0.06 } else { 0.03 };
    base + 0.02 * (-(hour - 18.0).powi(2) / 8.0).exp()
}

fn fr_price(hour: f64) -> f64 {
    0.02 + 0.008 * (2.0 * std::f64::consts::PI * (hour - 14.0) / 24.0).cos()
}

pub fn synthetic_pool(spec: &SyntheticSpec) -> Result<ScenarioPool, ScenarioError> {
    if spec.templates == 0 || spec.steps == 0 {
        return Err(ScenarioError::Value(
            "need at least one template and one step".into(),
        ));
    }
    if spec.peak_load_kw <= 0.0 || spec.load_spread < 0.0 || spec.price_spread < 0.0 {
        return Err(ScenarioError::Value("invalid synthetic spec".into()));
    }
    let mut rng = stream_rng(spec.seed, 0);
    let n = spec.steps;
    let peak_shape = (0..=240)
        .map(|i| load_shape(i as f64 / 10.0))
        .fold(0.0, f64::max);
    let templates = (0..spec.templates)
        .map(|_| {
            let load_scale = spec.load_spread * rng.random_range(-1.0..=1.0);
            let price_scale = spec.price_spread * rng.random_range(-1.0..=1.0);
            let fr_scale = spec.price_spread * rng.random_range(-1.0..=1.0);
            let mut r = PeriodRealization {
                energy_price: Vec::with_capacity(n + 1),
                fr_price: Vec::with_capacity(n + 1),
                load: Vec::with_capacity(n + 1),
                fr_request: Vec::with_capacity(n + 1),
            };
            for t in 0..=n {
                let hour = 24.0 * (t % n) as f64 / n as f64;
                let bump = day_bump(hour);
                let load = spec.peak_load_kw * load_shape(hour) / peak_shape;
                r.load.push(load * (1.0 + load_scale * bump));
                r.energy_price
                    .push(energy_price(hour) * (1.0 + price_scale * bump));
                r.fr_price.push(fr_price(hour) * (1.0 + fr_scale * bump));
                let a = if t == 0 || t == n {
                    MIDNIGHT_FR_REQUEST
                } else {
                    rng.random_range(0.1..=0.4)
                };
                r.fr_request.push(a);
            }
            r
        })
        .collect();
    ScenarioPool::uniform(templates, spec.seed)
}

pub const CSV_HEADER: [&str; 5] = ["hour", "energy_price", "fr_price", "load", "fr_request"];

/// Reads consecutive periods of `steps` rows each.
///
/// The final sample of each period is the first row of the next period;
/// the last period wraps to its own first row.
pub fn load_csv(path: &Path, steps: usize) -> Result<Vec<PeriodRealization>, ScenarioError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_csv(&text, steps)
}

pub fn parse_csv(text: &str, steps: usize) -> Result<Vec<PeriodRealization>, ScenarioError> {
    if steps == 0 {
        return Err(ScenarioError::Schema("period length must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| ScenarioError::Schema(e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(ScenarioError::Schema(format!(
            "expected header `{}`, found `{}`",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ScenarioError::Schema(format!("line {line}: {e}")))?;
        if rec.len() != 5 {
            return Err(ScenarioError::Schema(format!(
                "line {line}: expected 5 columns, found {}",
                rec.len()
            )));
        }
        let parse = |col: usize| -> Result<f64, ScenarioError> {
            rec[col].parse::<f64>().map_err(|_| {
                ScenarioError::Value(format!(
                    "line {line}, column {}: `{}` is not a number",
                    CSV_HEADER[col], &rec[col]
                ))
            })
        };
        let hour = parse(0)?;
        if hour != (i % steps) as f64 {
            return Err(ScenarioError::Schema(format!(
                "line {line}: hour {hour}, expected {}",
                i % steps
            )));
        }
        let row = [parse(1)?, parse(2)?, parse(3)?, parse(4)?];
        if row[2] < 0.0 {
            return Err(ScenarioError::Value(format!(
                "line {line}, column load: negative load {}",
                row[2]
            )));
        }
        if !(0.0..=1.0).contains(&row[3]) {
            return Err(ScenarioError::Value(format!(
                "line {line}, column fr_request: {} outside [0, 1]",
                row[3]
            )));
        }
        if row[0] < 0.0 || row[1] < 0.0 {
            return Err(ScenarioError::Value(format!("line {line}: negative price")));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ScenarioError::Schema("file has no data rows".into()));
    }
    if !rows.len().is_multiple_of(steps) {
        return Err(ScenarioError::Schema(format!(
            "{} data rows is not a multiple of the period length {steps}",
            rows.len()
        )));
    }
    let days = rows.len() / steps;
    let out = (0..days)
        .map(|d| {
            let start = d * steps;
            let closing = if d + 1 < days { start + steps } else { start };
            let idx = (start..start + steps).chain(std::iter::once(closing));
            let mut r = PeriodRealization {
                energy_price: Vec::with_capacity(steps + 1),
                fr_price: Vec::with_capacity(steps + 1),
                load: Vec::with_capacity(steps + 1),
                fr_request: Vec::with_capacity(steps + 1),
            };
            for i in idx {
                let [e, f, l, a] = rows[i];
                r.energy_price.push(e);
                r.fr_price.push(f);
                r.load.push(l);
                r.fr_request.push(a);
            }
            r
        })
        .collect();
    Ok(out)
}

/// Writes the first `n` samples of each period; see [`load_csv`].
pub fn write_csv(path: &Path, periods: &[PeriodRealization]) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ScenarioError::Schema(e.to_string()))?;
    let err = |e: csv::Error| ScenarioError::Schema(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for p in periods {
        for t in 0..p.steps() {
            w.write_record(&[
                t.to_string(),
                p.energy_price[t].to_string(),
                p.fr_price[t].to_string(),
                p.load[t].to_string(),
                p.fr_request[t].to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Multiplicative lognormal forecast noise.
#[derive(Debug, Clone)]
pub struct ForecastModel {
    sigma: f64,
    noise: Option<LogNormal<f64>>,
    rng: ChaCha8Rng,
}

impl ForecastModel {
    pub fn new(sigma: f64, seed: u64) -> Result<Self, ScenarioError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(ScenarioError::Value(format!("forecast sigma {sigma}")));
        }
        let noise = if sigma > 0.0 {
            Some(LogNormal::new(0.0, sigma).map_err(|e| ScenarioError::Value(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            sigma,
            noise,
            rng: stream_rng(seed, 1),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn make_forecast(&mut self, truth: &PeriodRealization) -> PeriodRealization {
        let Some(noise) = self.noise else {
            return truth.clone();
        };
        let rng = &mut self.rng;
        let mut perturb = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x * noise.sample(rng)).collect() };
        let energy_price = perturb(&truth.energy_price);
        let fr_price = perturb(&truth.fr_price);
        let load = perturb(&truth.load);
        let fr_request = perturb(&truth.fr_request)
            .into_iter()
            .map(|a| a.clamp(0.0, 1.0))
            .collect();
        PeriodRealization {
            energy_price,
            fr_price,
            load,
            fr_request,
        }
    }
}
