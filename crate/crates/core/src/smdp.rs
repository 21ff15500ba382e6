//! Average-reward semi-Markov decision processes solved by policy iteration.
//!
//! Each action carries an expected reward and an expected sojourn per
//! decision epoch; the gain of a stationary policy is the long-run reward
//! per unit time.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmdpError {
    #[error("state {state}, action {action}: transition row sums to {sum}")]
    NonStochasticRow { state: usize, action: usize, sum: f64 },

    #[error("state {state}, action {action}: sojourn {sojourn} is not positive")]
    NonPositiveSojourn {
        state: usize,
        action: usize,
        sojourn: f64,
    },

    #[error("state {0} has no actions")]
    NoActions(usize),

    #[error("transition row of state {state} has length {len}, expected {expected}")]
    DimensionMismatch {
        state: usize,
        len: usize,
        expected: usize,
    },

    #[error("policy iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("policy evaluation system is singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, SmdpError>;

/// One admissible action: a wait time and its consequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub wait: f64,
    pub transition: Vec<f64>,
    pub reward: f64,
    pub sojourn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmdpModel {
    actions: Vec<Vec<Action>>,
}

/// Solver knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// State whose bias is pinned to zero.
    pub anchor: usize,
    /// An action replaces the incumbent only if better by more than this.
    pub improvement_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            anchor: 0,
            improvement_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmdpSolution {
    /// Chosen action index per state.
    pub policy: Vec<usize>,
    pub gain: f64,
    pub bias: Vec<f64>,
    pub iterations: usize,
}

impl SmdpModel {
    pub fn new(actions: Vec<Vec<Action>>) -> Result<Self> {
        let n = actions.len();
        for (s, acts) in actions.iter().enumerate() {
            if acts.is_empty() {
                return Err(SmdpError::NoActions(s));
            }
            for (a, act) in acts.iter().enumerate() {
                if act.transition.len() != n {
                    return Err(SmdpError::DimensionMismatch {
                        state: s,
                        len: act.transition.len(),
                        expected: n,
                    });
                }
                let sum: f64 = act.transition.iter().sum();
                if (sum - 1.0).abs() > 1e-10 || act.transition.iter().any(|p| *p < -1e-12) {
                    return Err(SmdpError::NonStochasticRow {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                if !(act.sojourn > 0.0) {
                    return Err(SmdpError::NonPositiveSojourn {
                        state: s,
                        action: a,
                        sojourn: act.sojourn,
                    });
                }
            }
        }
        Ok(Self { actions })
    }

    pub fn states(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self, s: usize) -> &[Action] {
        &self.actions[s]
    }

    pub fn action(&self, s: usize, a: usize) -> &Action {
        &self.actions[s][a]
    }

    /// Gain and bias of a fixed policy, with the anchor's bias set to zero.
    pub fn evaluate(&self, policy: &[usize], anchor: usize) -> Result<(f64, Vec<f64>)> {
        let n = self.states();
        // Unknowns: bias of every state except the anchor, then the gain.
        let col = |j: usize| if j < anchor { j } else { j - 1 };
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for s in 0..n {
            let act = &self.actions[s][policy[s]];
            for j in 0..n {
                if j == anchor {
                    continue;
                }
                let delta = if j == s { 1.0 } else { 0.0 };
                a[(s, col(j))] = delta - act.transition[j];
            }
            a[(s, n - 1)] = act.sojourn;
            b[s] = act.reward;
        }
        let x = a.lu().solve(&b).ok_or(SmdpError::Singular)?;
        let gain = x[n - 1];
        let bias = (0..n)
            .map(|j| if j == anchor { 0.0 } else { x[col(j)] })
            .collect();
        Ok((gain, bias))
    }

    /// `R(s,a) − g·H(s,a) + Σ_j P(s,a,j) h_j`.
    pub fn test_value(&self, s: usize, a: usize, gain: f64, bias: &[f64]) -> f64 {
        let act = &self.actions[s][a];
        act.reward - gain * act.sojourn
            + act.transition.iter().zip(bias).map(|(p, h)| p * h).sum::<f64>()
    }

    pub fn policy_iteration(&self) -> Result<SmdpSolution> {
        self.policy_iteration_with(&SolverConfig::default())
    }

    /// Policy iteration from the smallest-wait action in every state.
    ///
    /// The incumbent action is kept unless another is better by more than
    /// `improvement_tol`; among the best actions the smallest wait wins.
    pub fn policy_iteration_with(&self, cfg: &SolverConfig) -> Result<SmdpSolution> {
        let n = self.states();
        let mut policy: Vec<usize> = (0..n).map(|s| self.smallest_wait(s, None)).collect();
        for iter in 1..=cfg.max_iterations {
            let (gain, bias) = self.evaluate(&policy, cfg.anchor)?;
            log::debug!("policy iteration {iter}: gain {gain}");
            let mut changed = false;
            for s in 0..n {
                let values: Vec<f64> = (0..self.actions[s].len())
                    .map(|a| self.test_value(s, a, gain, &bias))
                    .collect();
                let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if best <= values[policy[s]] + cfg.improvement_tol {
                    continue;
                }
                let near: Vec<bool> = values
                    .iter()
                    .map(|v| *v >= best - cfg.improvement_tol)
                    .collect();
                policy[s] = self.smallest_wait(s, Some(&near));
                changed = true;
            }
            if !changed {
                if !self.is_irreducible(&policy) {
                    log::debug!("returned policy induces a reducible chain");
                }
                return Ok(SmdpSolution {
                    policy,
                    gain,
                    bias,
                    iterations: iter,
                });
            }
        }
        Err(SmdpError::NoConvergence(cfg.max_iterations))
    }

    fn smallest_wait(&self, s: usize, mask: Option<&[bool]>) -> usize {
        let mut best: Option<usize> = None;
        for (a, act) in self.actions[s].iter().enumerate() {
            if mask.is_some_and(|m| !m[a]) {
                continue;
            }
            if best.is_none_or(|b| act.wait < self.actions[s][b].wait) {
                best = Some(a);
            }
        }
        best.expect("at least one admissible action")
    }

    /// Strong connectivity of the chain induced by `policy`.
    pub fn is_irreducible(&self, policy: &[usize]) -> bool {
        let n = self.states();
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    let p = if forward {
                        self.actions[u][policy[u]].transition[v]
                    } else {
                        self.actions[v][policy[v]].transition[u]
                    };
                    if p > 0.0 && !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen.into_iter().all(|x| x)
        };
        reach(true) && reach(false)
    }
}
