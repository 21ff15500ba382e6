//! Experiment configuration in TOML.
//!
//! ```toml
//! name = "exp1"
//! estimator = "martingale"          # or "map"
//! w_max = 1.5
//! generator = [[-1.0, 1.0], [0.1, -0.1]]
//! policies = ["zw", "cw", "state_ind", "delay_ind", "greedy", "opt_wait"]
//! output = "exp1.csv"               # optional
//!
//! [forward_delay]
//! kind = "deterministic"            # deterministic | atoms | exponential
//! value = 0.0
//!
//! [backward_delay]
//! kind = "atoms"
//! atoms = [[0.0, 0.5], ["d1", 0.5]] # a value may name the sweep parameter
//!
//! [sweep]
//! parameter = "d1"
//! values = [0.1, 0.5, 1.0]          # or: grid = { start = 0.05, stop = 3.0, points = 16, spacing = "log" }
//!
//! [sim]                             # optional; omit or set enabled = false to skip
//! cycles = 1000000
//! seed = 1
//! burn_in = 1000
//! batches = 100
//! ```

use serde::Deserialize;

use crate::ctmc::GeneratorMatrix;
use crate::delay::DelayDistribution;
use crate::estimator::EstimatorKind;
use crate::freshness::FreshnessModel;
use crate::policy::{PolicyConfig, PolicyFamily};
use crate::sim::SimConfig;

use super::ExperimentError;

/// A number, or the name of the swept parameter.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Value(f64),
    Name(String),
}

impl Param {
    fn resolve(&self, sweep: &str, value: f64) -> Result<f64, String> {
        match self {
            Param::Value(v) => Ok(*v),
            Param::Name(n) if n == sweep => Ok(value),
            Param::Name(n) => Err(format!("unknown parameter '{n}' (the sweep parameter is '{sweep}')")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DelaySpec {
    Deterministic { value: Param },
    Atoms { atoms: Vec<(Param, f64)> },
    Exponential { rate: Param },
}

impl DelaySpec {
    pub fn build(&self, sweep: &str, value: f64) -> Result<DelayDistribution, String> {
        let dist = match self {
            DelaySpec::Deterministic { value: v } => {
                DelayDistribution::deterministic(v.resolve(sweep, value)?)
            }
            DelaySpec::Atoms { atoms } => {
                let pairs = atoms
                    .iter()
                    .map(|(v, p)| v.resolve(sweep, value).map(|v| (v, *p)))
                    .collect::<Result<Vec<_>, _>>()?;
                DelayDistribution::atoms(&pairs)
            }
            DelaySpec::Exponential { rate } => DelayDistribution::exponential(rate.resolve(sweep, value)?),
        };
        dist.map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::Log
}

impl GridSpec {
    /// 16 log-spaced points on `[0.05, 3]`.
    pub fn default_d1() -> Self {
        Self {
            start: 0.05,
            stop: 3.0,
            points: 16,
            spacing: Spacing::Log,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|k| {
                if k + 1 == self.points {
                    return self.stop;
                }
                let f = k as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.start + f * (self.stop - self.start),
                    Spacing::Log => (self.start.ln() + f * (self.stop.ln() - self.start.ln())).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

impl SweepSpec {
    pub fn points(&self) -> Vec<f64> {
        match (&self.values, &self.grid) {
            (Some(v), _) => v.clone(),
            (None, Some(g)) => g.values(),
            (None, None) => GridSpec::default_d1().values(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_true() -> bool {
    true
}
fn default_cycles() -> usize {
    SimConfig::default().cycles
}
fn default_seed() -> u64 {
    SimConfig::default().seed
}
fn default_burn_in() -> usize {
    SimConfig::default().burn_in
}
fn default_batches() -> usize {
    SimConfig::default().batches
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            cycles: default_cycles(),
            seed: default_seed(),
            burn_in: default_burn_in(),
            batches: default_batches(),
        }
    }
}

impl SimSpec {
    /// Simulation settings of job `job`; seeds are `seed + job`.
    pub fn config_for(&self, job: usize) -> SimConfig {
        SimConfig {
            cycles: self.cycles,
            seed: self.seed.wrapping_add(job as u64),
            burn_in: self.burn_in,
            batches: self.batches,
        }
    }
}

fn default_w_max() -> f64 {
    1.5
}

fn default_policies() -> Vec<PolicyFamily> {
    PolicyFamily::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub generator: Vec<Vec<f64>>,
    #[serde(default)]
    pub estimator: EstimatorKind,
    pub forward_delay: DelaySpec,
    pub backward_delay: DelaySpec,
    #[serde(default = "default_w_max")]
    pub w_max: f64,
    pub sweep: SweepSpec,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyFamily>,
    #[serde(default)]
    pub sim: Option<SimSpec>,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can fail before any numerics run.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::ConfigParse(m));
        if !(self.w_max > 0.0 && self.w_max.is_finite()) {
            return bad(format!("w_max must be positive, got {}", self.w_max));
        }
        if self.policies.is_empty() {
            return bad("no policies selected".into());
        }
        let points = self.sweep.points();
        if points.is_empty() {
            return bad("empty sweep".into());
        }
        GeneratorMatrix::new(&self.generator)
            .map_err(|e| ExperimentError::ConfigParse(format!("generator: {e}")))?;
        for &v in &points {
            self.delays_at(v)
                .map_err(|e| ExperimentError::ConfigParse(format!("{} = {v}: {e}", self.sweep.parameter)))?;
        }
        if let Some(s) = &self.sim {
            if s.enabled && (s.cycles == 0 || s.batches < 2) {
                return bad("sim needs cycles > 0 and at least 2 batches".into());
            }
        }
        Ok(())
    }

    pub fn generator_matrix(&self) -> Result<GeneratorMatrix, String> {
        GeneratorMatrix::new(&self.generator).map_err(|e| e.to_string())
    }

    /// Forward and backward delays at a sweep value.
    pub fn delays_at(&self, value: f64) -> Result<(DelayDistribution, DelayDistribution), String> {
        let p = &self.sweep.parameter;
        Ok((
            self.forward_delay.build(p, value)?,
            self.backward_delay.build(p, value)?,
        ))
    }

    pub fn model_at(&self, value: f64) -> Result<FreshnessModel, ExperimentError> {
        let g = self.generator_matrix().map_err(ExperimentError::ConfigParse)?;
        let (y, d) = self.delays_at(value).map_err(ExperimentError::ConfigParse)?;
        FreshnessModel::new(&g, self.estimator, &y, &d).map_err(|e| ExperimentError::Numerical {
            point: value,
            policy: None,
            message: e.to_string(),
        })
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig::with_w_max(self.w_max)
    }

    pub fn sim_enabled(&self) -> bool {
        self.sim.as_ref().is_some_and(|s| s.enabled)
    }
}
