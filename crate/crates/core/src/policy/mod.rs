//! Synthesis of the waiting-policy families: zero wait, best constant
//! wait, state-independent (Dinkelbach), delay-independent (SMDP), greedy
//! per-state Dinkelbach and the full `(state, age)` SMDP.

mod benchmark;
mod dinkelbach;
pub mod linearized;
mod sequential;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freshness::{FreshnessError, FreshnessModel, FreshnessReport};
use crate::smdp::SmdpError;
use crate::waiting::WaitingPolicy;

pub use benchmark::{constant_wait_policy, zero_wait_policy};
pub use dinkelbach::{greedy_policy, linearized_value_state_ind, state_independent_policy};
pub use linearized::{threshold_wait, LinearizedObjective};
pub use sequential::{delay_independent_policy, optimal_policy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Freshness(#[from] FreshnessError),

    #[error(transparent)]
    Smdp(#[from] SmdpError),

    #[error("the combined delay has no density")]
    DensityUnavailable,
}

pub type Result<T> = std::result::Result<T, PolicyError>;

/// Optimizer knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub w_max: f64,
    /// Nodes of the uniform wait grid on `[0, w_max]`.
    pub grid_points: usize,
    /// Golden-section tolerance of the grid polish.
    pub polish_tol: f64,
    /// Final width of the θ bracket.
    pub theta_tol: f64,
    /// Bisection tolerance for the threshold `Γ`.
    pub gamma_tol: f64,
    /// Quantile atoms used when a continuous reply delay is tabulated.
    pub delay_bins: usize,
    /// Rounds of action refinement after the grid SMDP is solved.
    pub polish_rounds: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            w_max: 1.5,
            grid_points: 151,
            polish_tol: 1e-6,
            theta_tol: 1e-8,
            gamma_tol: 1e-10,
            delay_bins: 32,
            polish_rounds: 50,
        }
    }
}

impl PolicyConfig {
    pub fn with_w_max(w_max: f64) -> Self {
        Self {
            w_max,
            ..Self::default()
        }
    }

    /// The uniform action grid.
    pub fn wait_grid(&self) -> Vec<f64> {
        let n = self.grid_points.max(2);
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    self.w_max
                } else {
                    self.w_max * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyFamily {
    #[serde(rename = "zw")]
    ZeroWait,
    #[serde(rename = "cw")]
    ConstantWait,
    #[serde(rename = "state_ind")]
    StateIndependent,
    #[serde(rename = "delay_ind")]
    DelayIndependent,
    #[serde(rename = "greedy")]
    Greedy,
    #[serde(rename = "opt_wait")]
    OptWait,
}

impl PolicyFamily {
    pub const ALL: [PolicyFamily; 6] = [
        PolicyFamily::ZeroWait,
        PolicyFamily::ConstantWait,
        PolicyFamily::StateIndependent,
        PolicyFamily::DelayIndependent,
        PolicyFamily::Greedy,
        PolicyFamily::OptWait,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyFamily::ZeroWait => "zw",
            PolicyFamily::ConstantWait => "cw",
            PolicyFamily::StateIndependent => "state_ind",
            PolicyFamily::DelayIndependent => "delay_ind",
            PolicyFamily::Greedy => "greedy",
            PolicyFamily::OptWait => "opt_wait",
        }
    }
}

impl fmt::Display for PolicyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PolicyFamily::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown policy '{s}' (expected zw, cw, state_ind, delay_ind, greedy or opt_wait)"))
    }
}

/// Final state of one Dinkelbach bisection.
#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachState {
    pub theta: f64,
    pub bracket: (f64, f64),
    /// `max_W J(θ)` at `theta`.
    pub j_star: f64,
    /// `(θ, J*(θ))` at every bisection midpoint.
    pub trace: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyWarning {
    /// Tabulating a continuous reply delay moved its mean.
    GridTooCoarse { mean_shift: f64 },
}

impl fmt::Display for PolicyWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyWarning::GridTooCoarse { mean_shift } => {
                write!(f, "delay discretization shifts E[D] by {mean_shift:e}")
            }
        }
    }
}

/// A synthesized policy with its analytic evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    pub family: PolicyFamily,
    pub policy: WaitingPolicy,
    /// Analytic freshness of `policy` on the original model.
    pub report: FreshnessReport,
    /// Greedy only: `min_i E[g(i)] / (E[Z] + E[W(i, D)])`.
    pub lower_bound: Option<f64>,
    /// One entry for the state-independent family, one per state for the
    /// greedy family.
    pub dinkelbach: Vec<DinkelbachState>,
    /// SMDP families only: the solver's gain.
    pub gain: Option<f64>,
    pub warnings: Vec<PolicyWarning>,
}

impl PolicyOutcome {
    pub fn mbf(&self) -> f64 {
        self.report.mbf
    }

    fn plain(family: PolicyFamily, policy: WaitingPolicy, report: FreshnessReport) -> Self {
        Self {
            family,
            policy,
            report,
            lower_bound: None,
            dinkelbach: Vec::new(),
            gain: None,
            warnings: Vec::new(),
        }
    }
}

/// Runs the optimizer of `family`.
pub fn synthesize(
    model: &FreshnessModel,
    family: PolicyFamily,
    cfg: &PolicyConfig,
) -> Result<PolicyOutcome> {
    match family {
        PolicyFamily::ZeroWait => zero_wait_policy(model, cfg),
        PolicyFamily::ConstantWait => constant_wait_policy(model, cfg),
        PolicyFamily::StateIndependent => state_independent_policy(model, cfg),
        PolicyFamily::DelayIndependent => delay_independent_policy(model, cfg),
        PolicyFamily::Greedy => greedy_policy(model, cfg),
        PolicyFamily::OptWait => optimal_policy(model, cfg),
    }
}

/// The model used for tabulated policies, with a warning when a
/// continuous reply delay had to be discretized coarsely.
fn tabulation_model(
    model: &FreshnessModel,
    cfg: &PolicyConfig,
) -> Result<(FreshnessModel, Vec<PolicyWarning>)> {
    let work = model.discretized(cfg.delay_bins)?;
    let shift = (work.backward().mean() - model.backward().mean()).abs();
    let mut warnings = Vec::new();
    if shift > 1e-6 {
        log::warn!("delay discretization with {} atoms shifts E[D] by {shift:e}", cfg.delay_bins);
        warnings.push(PolicyWarning::GridTooCoarse { mean_shift: shift });
    }
    Ok((work, warnings))
}

/// First error raised inside an objective that must return a plain `f64`.
struct ErrorSlot<E>(std::cell::RefCell<Option<E>>);

impl<E> ErrorSlot<E> {
    fn new() -> Self {
        Self(std::cell::RefCell::new(None))
    }

    /// `f`'s value, or `−∞` after recording its error.
    fn score<F: FnOnce() -> std::result::Result<f64, E>>(&self, f: F) -> f64 {
        match f() {
            Ok(v) => v,
            Err(e) => {
                self.0.borrow_mut().get_or_insert(e);
                f64::NEG_INFINITY
            }
        }
    }

    fn finish(self) -> std::result::Result<(), E> {
        match self.0.into_inner() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}
