//! Experiment sweeps: synthesize each policy family at each sweep point,
//! evaluate it analytically, optionally simulate it, and write one CSV row
//! per `(sweep value, policy)`.

mod compare;
mod config;

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::numeric::fmt_sig;
use crate::policy::{synthesize, PolicyFamily, PolicyOutcome};
use crate::sim::{simulate, SimResult};

pub use compare::{compare_policies, CompareReport, Ranking, Violation, CONTAINMENT_TOL};
pub use config::{DelaySpec, ExperimentConfig, GridSpec, Param, SimSpec, Spacing, SweepSpec};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    ConfigParse(String),

    #[error("numerical error at sweep value {point}{}: {message}", policy.map(|p| format!(" ({p})")).unwrap_or_default())]
    Numerical {
        point: f64,
        policy: Option<PolicyFamily>,
        message: String,
    },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const CSV_COLUMNS: [&str; 6] = [
    "sweep_value",
    "policy",
    "mbf_analytic",
    "mbf_sim",
    "sim_stderr",
    "policy_summary",
];

const EXP1: &str = r#"
name = "exp1"
estimator = "martingale"
w_max = 1.5
generator = [[-1.0, 1.0], [0.1, -0.1]]
policies = ["zw", "cw", "state_ind", "delay_ind", "greedy", "opt_wait"]

[forward_delay]
kind = "deterministic"
value = 0.0

[backward_delay]
kind = "atoms"
atoms = [[0.0, 0.5], ["d1", 0.5]]

[sweep]
parameter = "d1"
grid = { start = 0.05, stop = 3.0, points = 16, spacing = "log" }

[sim]
cycles = 1000000
seed = 1
"#;

const EXP2: &str = r#"
name = "exp2"
estimator = "martingale"
w_max = 1.5
generator = [[-0.6, 0.6], [0.4, -0.4]]
policies = ["zw", "cw", "state_ind", "delay_ind", "greedy", "opt_wait"]

[forward_delay]
kind = "deterministic"
value = 0.0

[backward_delay]
kind = "atoms"
atoms = [[0.0, 0.5], ["d1", 0.5]]

[sweep]
parameter = "d1"
grid = { start = 0.05, stop = 3.0, points = 16, spacing = "log" }

[sim]
cycles = 1000000
seed = 2
"#;

const EXP3: &str = r#"
name = "exp3"
estimator = "martingale"
w_max = 1.5
generator = [[-1.0, 1.0], [0.1, -0.1]]
policies = ["zw", "cw", "state_ind", "delay_ind", "greedy", "opt_wait"]

[forward_delay]
kind = "atoms"
atoms = [[0.3, 0.3], [0.5, 0.3], [1.0, 0.4]]

[backward_delay]
kind = "atoms"
atoms = [[0.0, 0.5], ["d1", 0.5]]

[sweep]
parameter = "d1"
grid = { start = 0.05, stop = 3.0, points = 16, spacing = "log" }

[sim]
cycles = 1000000
seed = 3
"#;

pub const PRESET_NAMES: [&str; 3] = ["exp1", "exp2", "exp3"];

/// An embedded preset by name.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let text = match name {
        "exp1" => EXP1,
        "exp2" => EXP2,
        "exp3" => EXP3,
        _ => return None,
    };
    Some(ExperimentConfig::from_toml(text).expect("embedded presets parse"))
}

/// Command-line overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub no_sim: bool,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub sweep_value: f64,
    pub policy: PolicyFamily,
    pub mbf_analytic: f64,
    pub sim: Option<SimResult>,
    pub policy_summary: String,
    pub outcome: PolicyOutcome,
}

impl ExperimentRow {
    pub fn csv_record(&self) -> [String; 6] {
        let f = |x: f64| fmt_sig(x, 9);
        [
            f(self.sweep_value),
            self.policy.to_string(),
            f(self.mbf_analytic),
            self.sim.as_ref().map(|s| f(s.mbf_hat)).unwrap_or_default(),
            self.sim.as_ref().map(|s| f(s.stderr)).unwrap_or_default(),
            self.policy_summary.clone(),
        ]
    }
}

/// Runs every `(sweep value, policy)` job; rows come back in sweep order,
/// then in the configured policy order, whatever the worker count.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<Vec<ExperimentRow>, ExperimentError> {
    cfg.validate()?;
    let points = cfg.sweep.points();
    let mut sim = cfg.sim.clone().filter(|s| s.enabled && !opts.no_sim);
    if let (Some(s), Some(seed)) = (sim.as_mut(), opts.seed) {
        s.seed = seed;
    }
    let jobs: Vec<(usize, f64, PolicyFamily)> = points
        .iter()
        .flat_map(|&v| cfg.policies.iter().map(move |&p| (v, p)))
        .enumerate()
        .map(|(k, (v, p))| (k, v, p))
        .collect();
    let run = || -> Vec<Result<ExperimentRow, ExperimentError>> {
        jobs.par_iter()
            .map(|&(k, v, p)| run_job(cfg, v, p, sim.as_ref().map(|s| (s, k))))
            .collect()
    };
    let results = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| ExperimentError::ConfigParse(format!("worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}

fn run_job(
    cfg: &ExperimentConfig,
    value: f64,
    family: PolicyFamily,
    sim: Option<(&SimSpec, usize)>,
) -> Result<ExperimentRow, ExperimentError> {
    let numerical = |message: String| ExperimentError::Numerical {
        point: value,
        policy: Some(family),
        message,
    };
    let model = cfg.model_at(value)?;
    let outcome =
        synthesize(&model, family, &cfg.policy_config()).map_err(|e| numerical(e.to_string()))?;
    for w in &outcome.warnings {
        log::warn!("{} at {} = {value}: {w}", family, cfg.sweep.parameter);
    }
    let sim = sim.map(|(spec, job)| {
        simulate(
            model.kernel(),
            model.forward(),
            model.backward(),
            &outcome.policy,
            &spec.config_for(job),
        )
    });
    log::info!(
        "{} = {value} {family}: mbf {}",
        cfg.sweep.parameter,
        outcome.mbf()
    );
    Ok(ExperimentRow {
        sweep_value: value,
        policy: family,
        mbf_analytic: outcome.mbf(),
        sim,
        policy_summary: outcome.policy.summary(),
        outcome,
    })
}

pub fn write_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ExperimentRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}
