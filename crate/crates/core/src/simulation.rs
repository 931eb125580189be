//! Data-generating processes and the Monte Carlo engine.
//!
//! The catalog holds the study designs this crate can replay. Every
//! design draws a fixed covariate matrix once (RNG stream 0), computes
//! true per-observation `(mu_t, phi_t)` from its generating formulas,
//! and then draws fresh beta responses per replication (stream r for
//! replication r). The estimated model may deliberately differ from the
//! generating one: omitted covariates, ignored dispersion, or a linear
//! stand-in for a nonlinear predictor.
//!
//! Varying-dispersion designs draw a base block of 20 covariate values
//! and tile it to reach the requested sample size, so the dispersion
//! intensity `lambda = max phi / min phi` is literally identical across
//! sample sizes.
//!
//! Scenario ids:
//!
//! * `s1`..`s4` — linear logit mean with five parameters, fixed
//!   dispersion, estimating 1, 2, 3, or all 4 covariates. Suffixes
//!   `-low` / `-high` select the response ranges near the boundaries
//!   (`mu` around 0.02 or 0.97); the default keeps `mu` in (0.20, 0.88).
//! * `s5`..`s8` — varying dispersion with block-tiled covariates; `s5`
//!   to `s7` fit a constant-dispersion model, `s8` fits the full truth.
//! * `nl-mean`, `nl-mean-correct` — nonlinear mean predictor, fitted
//!   with a linear surrogate or with the true form.
//! * `nl-disp`, `nl-disp-correct` — nonlinear predictors in both
//!   submodels at n = 400, fitted linearly or exactly.

use crate::data::Dataset;
use crate::diagnostics::{lambda_intensity, p2_family, press, press_combined, r2_family};
use crate::estimation::{fit, FitOptions, ModelSpec};
use crate::formula::{ParamPrefix, PredictorSpec};
use crate::links::LinkKind;
use crate::special::{beta_sample, BetaParams};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::io::Write;

/// Dispersion setting of one experiment cell: either a fixed precision
/// or a target intensity `lambda ~ max phi / min phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DispersionLevel {
    Phi(f64),
    Lambda(f64),
}

impl fmt::Display for DispersionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DispersionLevel::Phi(v) => write!(f, "phi={v}"),
            DispersionLevel::Lambda(v) => write!(f, "lambda={v}"),
        }
    }
}

impl DispersionLevel {
    fn matches(&self, other: &DispersionLevel) -> bool {
        match (self, other) {
            (DispersionLevel::Phi(a), DispersionLevel::Phi(b)) => (a - b).abs() < 1e-9,
            (DispersionLevel::Lambda(a), DispersionLevel::Lambda(b)) => (a - b).abs() < 1e-9,
            _ => false,
        }
    }
}

/// One admissible dispersion cell: the level label and the true
/// precision-submodel parameters that realize it.
#[derive(Debug, Clone)]
pub struct ScenarioLevel {
    pub level: DispersionLevel,
    pub gamma: Vec<f64>,
}

/// Law of one covariate column: uniform draws on `(low, high)`.
#[derive(Debug, Clone)]
pub struct CovariateRecipe {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

/// A complete experiment design: generating model, estimated model,
/// covariate recipes, and admissible sample sizes and dispersion levels.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    id: String,
    true_mean: String,
    true_precision: String,
    beta: Vec<f64>,
    levels: Vec<ScenarioLevel>,
    estimated_mean: String,
    estimated_precision: String,
    covariates: Vec<CovariateRecipe>,
    /// Base block length for the tile-and-repeat covariate device.
    block: Option<usize>,
    sizes: Vec<usize>,
    mu_range: (f64, f64),
    /// Start the fit at the generating parameters (used when the
    /// estimated model equals the truth and has nonlinear parts).
    anchor_at_truth: bool,
}

const MID_BETA: [f64; 5] = [-1.9, 1.2, 1.0, 1.1, 1.3];
const HIGH_BETA: [f64; 5] = [1.8, 1.2, 1.0, 1.1, 0.9];
const LOW_BETA: [f64; 5] = [-1.5, -1.2, -1.0, -1.1, -1.3];

/// All catalog ids, in presentation order.
pub fn scenario_ids() -> Vec<String> {
    let mut ids = Vec::new();
    for base in ["s1", "s2", "s3", "s4"] {
        ids.push(base.to_string());
        ids.push(format!("{base}-high"));
        ids.push(format!("{base}-low"));
    }
    for rest in ["s5", "s6", "s7", "s8", "nl-mean", "nl-mean-correct", "nl-disp", "nl-disp-correct"] {
        ids.push(rest.to_string());
    }
    ids
}

fn uniform_columns(names: &[&str], low: f64, high: f64) -> Vec<CovariateRecipe> {
    names
        .iter()
        .map(|&name| CovariateRecipe {
            name: name.into(),
            low,
            high,
        })
        .collect()
}

fn linear_formula(letter: char, covariates: &[&str]) -> String {
    let mut text = format!("{letter}1");
    for (i, name) in covariates.iter().enumerate() {
        text.push_str(&format!(" + {letter}{}*{name}", i + 2));
    }
    text
}

fn phi_levels(values: &[f64]) -> Vec<ScenarioLevel> {
    values
        .iter()
        .map(|&phi| ScenarioLevel {
            level: DispersionLevel::Phi(phi),
            gamma: vec![phi.ln()],
        })
        .collect()
}

fn lambda_levels(pairs: &[(f64, &[f64])]) -> Vec<ScenarioLevel> {
    pairs
        .iter()
        .map(|&(lambda, gamma)| ScenarioLevel {
            level: DispersionLevel::Lambda(lambda),
            gamma: gamma.to_vec(),
        })
        .collect()
}

/// Look up a design by catalog id.
pub fn build_scenario(id: &str) -> Result<ScenarioSpec> {
    let unknown = || Error::UnknownScenario {
        id: id.into(),
        known: scenario_ids().join(", "),
    };

    // s1..s4 with an optional response-range suffix.
    if let Some(rest) = id.strip_prefix('s') {
        let (digit, range) = match rest.split_once('-') {
            Some((d, "high")) => (d, Some(HIGH_BETA)),
            Some((d, "low")) => (d, Some(LOW_BETA)),
            Some(_) => return Err(unknown()),
            None => (rest, None),
        };
        if let Ok(number @ 1..=4) = digit.parse::<u32>() {
            let estimated_covariates = number as usize;
            let all = ["x2", "x3", "x4", "x5"];
            let (beta, mu_range) = match range {
                None => (MID_BETA, (0.20, 0.88)),
                Some(HIGH_BETA) => (HIGH_BETA, (0.90, 0.99)),
                _ => (LOW_BETA, (0.005, 0.12)),
            };
            return Ok(ScenarioSpec {
                id: id.into(),
                true_mean: linear_formula('b', &all),
                true_precision: "g1".into(),
                beta: beta.to_vec(),
                levels: phi_levels(&[20.0, 50.0, 150.0, 400.0]),
                estimated_mean: linear_formula('b', &all[..estimated_covariates]),
                estimated_precision: "g1".into(),
                covariates: uniform_columns(&all, 0.0, 1.0),
                block: None,
                sizes: vec![40, 80, 120, 400],
                mu_range,
                anchor_at_truth: false,
            });
        }
        if range.is_some() {
            return Err(unknown());
        }
    }

    match id {
        "s5" => Ok(ScenarioSpec {
            id: id.into(),
            true_mean: linear_formula('b', &["x2"]),
            true_precision: linear_formula('g', &["z2"]),
            beta: vec![-1.3, 3.2],
            levels: lambda_levels(&[
                (20.0, &[3.5, 3.0]),
                (50.0, &[3.5, 4.0]),
                (150.0, &[3.5, 5.0]),
            ]),
            estimated_mean: linear_formula('b', &["x2"]),
            estimated_precision: "g1".into(),
            covariates: vec![
                uniform_columns(&["x2"], 0.0, 1.0),
                uniform_columns(&["z2"], -0.5, 0.5),
            ]
            .concat(),
            block: Some(20),
            sizes: vec![40, 80, 120],
            mu_range: (0.22, 0.87),
            anchor_at_truth: false,
        }),
        "s6" => Ok(ScenarioSpec {
            id: id.into(),
            true_mean: linear_formula('b', &["x2", "x3", "x4"]),
            true_precision: linear_formula('g', &["z2", "z3", "z4"]),
            beta: vec![-1.9, 1.2, 1.6, 2.0],
            levels: lambda_levels(&[
                (20.0, &[2.4, 1.2, -1.7, 1.0]),
                (50.0, &[2.9, 2.0, -1.7, 2.0]),
                (100.0, &[2.9, 2.0, -1.7, 2.8]),
            ]),
            estimated_mean: linear_formula('b', &["x2", "x3", "x4"]),
            estimated_precision: "g1".into(),
            covariates: vec![
                uniform_columns(&["x2", "x3", "x4"], 0.0, 1.0),
                uniform_columns(&["z2", "z3", "z4"], -0.5, 0.5),
            ]
            .concat(),
            block: Some(20),
            sizes: vec![40, 80, 120],
            mu_range: (0.24, 0.88),
            anchor_at_truth: false,
        }),
        "s7" | "s8" => Ok(ScenarioSpec {
            id: id.into(),
            true_mean: linear_formula('b', &["x2", "x3", "x4", "x5"]),
            true_precision: linear_formula('g', &["z2", "z3", "z4", "z5"]),
            beta: MID_BETA.to_vec(),
            levels: lambda_levels(&[
                (20.0, &[3.2, 2.5, -1.1, 1.9, 2.2]),
                (50.0, &[3.2, 2.5, -1.1, 1.9, 3.2]),
                (100.0, &[3.2, 2.5, -1.1, 1.9, 4.0]),
            ]),
            estimated_mean: linear_formula('b', &["x2", "x3", "x4", "x5"]),
            estimated_precision: if id == "s8" {
                linear_formula('g', &["z2", "z3", "z4", "z5"])
            } else {
                "g1".into()
            },
            covariates: vec![
                uniform_columns(&["x2", "x3", "x4", "x5"], 0.0, 1.0),
                uniform_columns(&["z2", "z3", "z4", "z5"], -0.5, 0.5),
            ]
            .concat(),
            block: Some(20),
            sizes: vec![40, 80, 120],
            mu_range: (0.20, 0.88),
            anchor_at_truth: false,
        }),
        "nl-mean" | "nl-mean-correct" => {
            let correct = id == "nl-mean-correct";
            Ok(ScenarioSpec {
                id: id.into(),
                true_mean: "b1 + x2^b2 + b3*log(x3 - b4) + x3/b5".into(),
                true_precision: "g1".into(),
                beta: vec![1.0, 1.9, -2.0, 3.4, 7.2],
                levels: phi_levels(&[20.0, 50.0, 150.0, 400.0]),
                estimated_mean: if correct {
                    "b1 + x2^b2 + b3*log(x3 - b4) + x3/b5".into()
                } else {
                    linear_formula('b', &["x2", "x3"])
                },
                estimated_precision: "g1".into(),
                covariates: vec![
                    CovariateRecipe { name: "x2".into(), low: 1.0, high: 2.0 },
                    CovariateRecipe { name: "x3".into(), low: 4.5, high: 34.5 },
                ],
                block: None,
                sizes: vec![20, 40, 60, 200, 400],
                mu_range: (0.36, 0.98),
                anchor_at_truth: correct,
            })
        }
        "nl-disp" | "nl-disp-correct" => {
            let correct = id == "nl-disp-correct";
            Ok(ScenarioSpec {
                id: id.into(),
                true_mean: "b1 + x1^b2".into(),
                true_precision: "g1 + z1^g2".into(),
                beta: vec![-1.1, 1.7],
                levels: lambda_levels(&[
                    (25.0, &[2.6, 3.0]),
                    (29.0, &[1.6, 3.1]),
                    (35.0, &[0.9, 3.2]),
                    (100.0, &[-0.3, 3.9]),
                ]),
                estimated_mean: if correct {
                    "b1 + x1^b2".into()
                } else {
                    linear_formula('b', &["x1"])
                },
                estimated_precision: if correct {
                    "g1 + z1^g2".into()
                } else {
                    linear_formula('g', &["z1"])
                },
                covariates: vec![
                    CovariateRecipe { name: "x1".into(), low: 0.3, high: 1.3 },
                    CovariateRecipe { name: "z1".into(), low: 0.5, high: 1.5 },
                ],
                block: None,
                sizes: vec![400],
                mu_range: (0.28, 0.61),
                anchor_at_truth: correct,
            })
        }
        _ => Err(unknown()),
    }
}

impl ScenarioSpec {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn levels(&self) -> &[ScenarioLevel] {
        &self.levels
    }

    pub fn mu_range(&self) -> (f64, f64) {
        self.mu_range
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    fn schema(&self) -> Vec<&str> {
        self.covariates.iter().map(|c| c.name.as_str()).collect()
    }

    /// The generating model.
    pub fn true_model(&self) -> Result<ModelSpec> {
        let schema = self.schema();
        ModelSpec::new(
            PredictorSpec::parse(&self.true_mean, &schema, ParamPrefix::Mean)?,
            LinkKind::Logit,
            PredictorSpec::parse(&self.true_precision, &schema, ParamPrefix::Precision)?,
            LinkKind::Log,
        )
    }

    /// The model the experiment fits (possibly misspecified).
    pub fn estimated_model(&self) -> Result<ModelSpec> {
        let schema = self.schema();
        ModelSpec::new(
            PredictorSpec::parse(&self.estimated_mean, &schema, ParamPrefix::Mean)?,
            LinkKind::Logit,
            PredictorSpec::parse(&self.estimated_precision, &schema, ParamPrefix::Precision)?,
            LinkKind::Log,
        )
    }

    fn check_size(&self, n: usize) -> Result<()> {
        if self.sizes.contains(&n) {
            Ok(())
        } else {
            Err(Error::Simulation(format!(
                "scenario {} does not define n = {n}; sizes: {:?}",
                self.id, self.sizes
            )))
        }
    }

    fn find_level(&self, level: &DispersionLevel) -> Result<&ScenarioLevel> {
        self.levels
            .iter()
            .find(|entry| entry.level.matches(level))
            .ok_or_else(|| {
                let known: Vec<String> =
                    self.levels.iter().map(|e| e.level.to_string()).collect();
                Error::Simulation(format!(
                    "scenario {} has no level {level}; levels: {}",
                    self.id,
                    known.join(", ")
                ))
            })
    }

    /// The fixed covariate columns for one experiment (RNG stream 0 of
    /// `seed`). Block designs draw the base block and tile it.
    pub fn design(&self, n: usize, seed: u64) -> Result<Vec<(String, Vec<f64>)>> {
        self.check_size(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let base_len = self.block.unwrap_or(n).min(n);
        let mut columns = Vec::with_capacity(self.covariates.len());
        for recipe in &self.covariates {
            let base: Vec<f64> = (0..base_len)
                .map(|_| rng.random_range(recipe.low..recipe.high))
                .collect();
            let column = (0..n).map(|t| base[t % base_len]).collect();
            columns.push((recipe.name.clone(), column));
        }
        Ok(columns)
    }

    /// True `(mu_t, phi_t)` on the fixed design, with admissibility and
    /// response-range checks that would expose a mistranscribed design.
    pub fn true_moments(
        &self,
        n: usize,
        level: &DispersionLevel,
        seed: u64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let gamma = self.find_level(level)?.gamma.clone();
        let design = self.design(n, seed)?;
        let placeholder = Dataset::new("y", vec![0.5; n], design)?;
        let model = self.true_model()?;
        let eta1 = model.mean().bind(&placeholder)?.eta(&self.beta)?;
        let eta2 = model.precision().bind(&placeholder)?.eta(&gamma)?;
        let mut mu = Vec::with_capacity(n);
        let mut phi = Vec::with_capacity(n);
        for t in 0..n {
            let m = LinkKind::Logit.inverse(eta1[t])?;
            let p = LinkKind::Log.inverse(eta2[t])?;
            if !(m > 0.0 && m < 1.0 && p > 0.0 && p.is_finite()) {
                return Err(Error::Simulation(format!(
                    "scenario {} yields inadmissible (mu, phi) = ({m}, {p}) at row {t}",
                    self.id
                )));
            }
            mu.push(m);
            phi.push(p);
        }
        let mean_mu = mu.iter().sum::<f64>() / n as f64;
        let (low, high) = self.mu_range;
        if mean_mu < low || mean_mu > high {
            return Err(Error::Simulation(format!(
                "scenario {}: mean of true mu is {mean_mu:.4}, outside the declared range ({low}, {high})",
                self.id
            )));
        }
        Ok((mu, phi))
    }

    /// One replication's dataset: fixed design, fresh responses drawn on
    /// RNG stream `replication`.
    pub fn generate_dataset(
        &self,
        n: usize,
        level: &DispersionLevel,
        seed: u64,
        replication: u64,
    ) -> Result<Dataset> {
        let (mu, phi) = self.true_moments(n, level, seed)?;
        let design = self.design(n, seed)?;
        let y = draw_responses(&mu, &phi, seed, replication);
        Dataset::new("y", y, design)
    }
}

fn draw_responses(mu: &[f64], phi: &[f64], seed: u64, replication: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    mu.iter()
        .zip(phi)
        .map(|(&m, &p)| {
            let params = BetaParams::new(m, p).expect("moments validated");
            beta_sample(&params, &mut rng)
        })
        .collect()
}

/// The statistic family computed for one successful replication.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StatRow {
    pub p2: f64,
    pub p2_c: f64,
    pub p2_bg: f64,
    pub p2_bg_c: f64,
    pub r2_fc: f64,
    pub r2_fc_c: f64,
    pub r2_lr: f64,
    pub r2_lr_c: f64,
    pub press: f64,
    pub press_bg: f64,
    pub lambda: f64,
}

/// Outcome of one replication: statistics, or the reason none exist.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRow {
    pub replication: u64,
    /// "ok", "not_converged", or an error tag.
    pub outcome: String,
    pub stats: Option<StatRow>,
}

/// Location summary of one statistic over the successful replications.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StatSummary {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Per-statistic summaries; `None` when no replication succeeded.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryTable {
    pub p2: Option<StatSummary>,
    pub p2_c: Option<StatSummary>,
    pub p2_bg: Option<StatSummary>,
    pub p2_bg_c: Option<StatSummary>,
    pub r2_fc: Option<StatSummary>,
    pub r2_fc_c: Option<StatSummary>,
    pub r2_lr: Option<StatSummary>,
    pub r2_lr_c: Option<StatSummary>,
    pub press: Option<StatSummary>,
    pub press_bg: Option<StatSummary>,
    pub lambda: Option<StatSummary>,
}

/// Aggregated result of one Monte Carlo experiment cell.
#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloSummary {
    pub scenario: String,
    pub n: usize,
    pub level: String,
    pub seed: u64,
    pub requested: usize,
    pub completed: usize,
    pub excluded: usize,
    /// Intensity of nonconstant dispersion realized by the design.
    pub design_lambda: f64,
    pub stats: SummaryTable,
    #[serde(skip)]
    rows: Vec<ReplicationRow>,
}

impl MonteCarloSummary {
    pub fn rows(&self) -> &[ReplicationRow] {
        &self.rows
    }

    /// Dump the per-replication statistics, one row per replication.
    pub fn write_rows_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record([
            "replication", "outcome", "p2", "p2_c", "p2_bg", "p2_bg_c",
            "r2_fc", "r2_fc_c", "r2_lr", "r2_lr_c", "press", "press_bg", "lambda",
        ])?;
        for row in &self.rows {
            let mut record = vec![row.replication.to_string(), row.outcome.clone()];
            match &row.stats {
                Some(s) => record.extend(
                    [s.p2, s.p2_c, s.p2_bg, s.p2_bg_c, s.r2_fc, s.r2_fc_c,
                     s.r2_lr, s.r2_lr_c, s.press, s.press_bg, s.lambda]
                    .iter()
                    .map(|v| format!("{v}")),
                ),
                None => record.extend(std::iter::repeat(String::new()).take(11)),
            }
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Linearly interpolated quantile of pre-sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = (m as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize<F: Fn(&StatRow) -> f64>(rows: &[ReplicationRow], pick: F) -> Option<StatSummary> {
    let mut values: Vec<f64> = rows
        .iter()
        .filter_map(|row| row.stats.as_ref().map(&pick))
        .collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("statistics are finite"));
    Some(StatSummary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        median: quantile(&values, 0.5),
        q1: quantile(&values, 0.25),
        q3: quantile(&values, 0.75),
    })
}

fn replicate(
    estimated: &ModelSpec,
    null_model: &ModelSpec,
    options: &FitOptions,
    design: &[(String, Vec<f64>)],
    mu: &[f64],
    phi: &[f64],
    seed: u64,
    replication: u64,
) -> std::result::Result<StatRow, String> {
    let y = draw_responses(mu, phi, seed, replication);
    let data =
        Dataset::new("y", y, design.to_vec()).map_err(|e| e.kind().to_string())?;
    let fitted = fit(estimated, &data, options).map_err(|e| e.kind().to_string())?;
    if !fitted.converged() {
        return Err("not_converged".into());
    }
    let null_fit = fit(null_model, &data, &FitOptions::default())
        .map_err(|e| format!("null_{}", e.kind()))?;
    if !null_fit.converged() {
        return Err("null_not_converged".into());
    }
    let p2 = p2_family(&fitted).map_err(|e| e.kind().to_string())?;
    let r2 = r2_family(&fitted, &null_fit).map_err(|e| e.kind().to_string())?;
    let (press_total, _) = press(&fitted).map_err(|e| e.kind().to_string())?;
    let (press_bg_total, _) = press_combined(&fitted).map_err(|e| e.kind().to_string())?;
    Ok(StatRow {
        p2: p2.p2,
        p2_c: p2.p2_c,
        p2_bg: p2.p2_bg,
        p2_bg_c: p2.p2_bg_c,
        r2_fc: r2.r2_fc,
        r2_fc_c: r2.r2_fc_c,
        r2_lr: r2.r2_lr,
        r2_lr_c: r2.r2_lr_c,
        press: press_total,
        press_bg: press_bg_total,
        lambda: lambda_intensity(&fitted),
    })
}

/// Run one experiment cell: `replications` fits of the estimated model
/// on fresh responses over a fixed design. Replications that fail to
/// converge (or error) are excluded from the summaries and counted.
pub fn run_monte_carlo(
    spec: &ScenarioSpec,
    n: usize,
    level: &DispersionLevel,
    replications: usize,
    seed: u64,
) -> Result<MonteCarloSummary> {
    if replications == 0 {
        return Err(Error::Simulation("need at least 1 replication".into()));
    }
    let level_entry = spec.find_level(level)?;
    let gamma = level_entry.gamma.clone();
    let (mu, phi) = spec.true_moments(n, level, seed)?;
    let design = spec.design(n, seed)?;
    let estimated = spec.estimated_model()?;
    estimated.validate_for(&Dataset::new("y", vec![0.5; n], design.clone())?)?;
    let null_model = estimated.null_spec();
    let mut options = FitOptions::default();
    if spec.anchor_at_truth {
        options.mean_start = Some(spec.beta.clone());
        options.precision_start = Some(gamma);
    }

    let rows: Vec<ReplicationRow> = (1..=replications as u64)
        .into_par_iter()
        .map(|replication| {
            match replicate(
                &estimated, &null_model, &options, &design, &mu, &phi, seed, replication,
            ) {
                Ok(stats) => ReplicationRow {
                    replication,
                    outcome: "ok".into(),
                    stats: Some(stats),
                },
                Err(outcome) => ReplicationRow {
                    replication,
                    outcome,
                    stats: None,
                },
            }
        })
        .collect();

    let completed = rows.iter().filter(|r| r.stats.is_some()).count();
    let design_lambda = phi.iter().cloned().fold(f64::MIN, f64::max)
        / phi.iter().cloned().fold(f64::MAX, f64::min);

    Ok(MonteCarloSummary {
        scenario: spec.id.clone(),
        n,
        level: level.to_string(),
        seed,
        requested: replications,
        completed,
        excluded: replications - completed,
        design_lambda,
        stats: SummaryTable {
            p2: summarize(&rows, |s| s.p2),
            p2_c: summarize(&rows, |s| s.p2_c),
            p2_bg: summarize(&rows, |s| s.p2_bg),
            p2_bg_c: summarize(&rows, |s| s.p2_bg_c),
            r2_fc: summarize(&rows, |s| s.r2_fc),
            r2_fc_c: summarize(&rows, |s| s.r2_fc_c),
            r2_lr: summarize(&rows, |s| s.r2_lr),
            r2_lr_c: summarize(&rows, |s| s.r2_lr_c),
            press: summarize(&rows, |s| s.press),
            press_bg: summarize(&rows, |s| s.press_bg),
            lambda: summarize(&rows, |s| s.lambda),
        },
        rows,
    })
}
