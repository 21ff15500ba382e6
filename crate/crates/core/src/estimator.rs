//! Remote estimators and their match probabilities.
//!
//! Given that the freshest reply reported state `i` and is `t` time units
//! old, the monitor's estimate is `X̂ = est(i, t)` and it is correct with
//! probability `m_i(t) = P_{i, est(i,t)}(t)`. For the martingale estimator
//! `est(i, t) = i`; for MAP it is the argmax of row `i` of `P(t)`, which is
//! piecewise constant in `t`.
//!
//! [`MatchKernel`] stores that piecewise structure per state and evaluates
//! `m_i`, its running integral and its integrals against exponential
//! polynomial weights exactly, on top of a [`TransitionFunction`].

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ctmc::{
    self, CtmcError, ExpPoly, GeneratorMatrix, StationaryDistribution, TransitionFunction,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    #[default]
    Martingale,
    Map,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Martingale => "martingale",
            EstimatorKind::Map => "map",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "martingale" => Ok(EstimatorKind::Martingale),
            "map" => Ok(EstimatorKind::Map),
            other => Err(format!("unknown estimator '{other}'")),
        }
    }
}

/// Entries within this much of the row maximum count as ties.
const ARGMAX_SLACK: f64 = 1e-14;

/// Index of the largest entry, ties to the smallest index.
pub(crate) fn argmax_row(p: &DMatrix<f64>, i: usize) -> usize {
    let row = p.row(i);
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    row.iter()
        .position(|v| *v >= best - ARGMAX_SLACK)
        .unwrap_or(i)
}

/// Estimate given the last reply was `last_state`, `age` time units ago.
pub fn estimate_at(
    kind: EstimatorKind,
    g: &GeneratorMatrix,
    last_state: usize,
    age: f64,
) -> Result<usize, CtmcError> {
    match kind {
        EstimatorKind::Martingale => Ok(last_state),
        EstimatorKind::Map => {
            let p = ctmc::transition_probabilities(g, age)?;
            Ok(argmax_row(&p.probs, last_state))
        }
    }
}

/// `P_{i, est(i,t)}(t)`.
pub fn match_probability(
    kind: EstimatorKind,
    g: &GeneratorMatrix,
    i: usize,
    t: f64,
) -> Result<f64, CtmcError> {
    let p = ctmc::transition_probabilities(g, t)?;
    let j = match kind {
        EstimatorKind::Martingale => i,
        EstimatorKind::Map => argmax_row(&p.probs, i),
    };
    Ok(p.get(i, j))
}

/// `p(t) = Σ_i π_i m_i(t)`.
pub fn aggregate_p(
    kind: EstimatorKind,
    g: &GeneratorMatrix,
    pi: &StationaryDistribution,
    t: f64,
) -> Result<f64, CtmcError> {
    let p = ctmc::transition_probabilities(g, t)?;
    Ok((0..g.size())
        .map(|i| {
            let j = match kind {
                EstimatorKind::Martingale => i,
                EstimatorKind::Map => argmax_row(&p.probs, i),
            };
            pi.get(i) * p.get(i, j)
        })
        .sum())
}

/// An age interval `[start, next start)` with a constant estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub state: usize,
}

/// Match probabilities of one estimator on one chain.
#[derive(Debug, Clone)]
pub struct MatchKernel {
    kind: EstimatorKind,
    tf: TransitionFunction,
    segments: Vec<Vec<Segment>>,
}

/// Grid resolution of the MAP breakpoint scan over `[0, T*]`.
const MAP_SCAN_POINTS: usize = 4096;

impl MatchKernel {
    pub fn new(kind: EstimatorKind, g: &GeneratorMatrix) -> Result<Self, CtmcError> {
        Self::from_transition(kind, TransitionFunction::new(g)?)
    }

    pub fn from_transition(kind: EstimatorKind, tf: TransitionFunction) -> Result<Self, CtmcError> {
        let n = tf.size();
        let segments = match kind {
            EstimatorKind::Martingale => (0..n)
                .map(|i| vec![Segment { start: 0.0, state: i }])
                .collect(),
            EstimatorKind::Map => (0..n).map(|i| map_segments(&tf, i)).collect(),
        };
        Ok(Self { kind, tf, segments })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn transition(&self) -> &TransitionFunction {
        &self.tf
    }

    pub fn stationary(&self) -> &StationaryDistribution {
        self.tf.stationary()
    }

    pub fn size(&self) -> usize {
        self.tf.size()
    }

    /// Piecewise-constant estimate trajectory for replies from state `i`.
    pub fn segments(&self, i: usize) -> &[Segment] {
        &self.segments[i]
    }

    /// Ages at which some estimate changes.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .segments
            .iter()
            .flat_map(|s| s.iter().skip(1).map(|seg| seg.start))
            .collect();
        b.sort_by(f64::total_cmp);
        b
    }

    pub fn estimate(&self, i: usize, age: f64) -> usize {
        let segs = &self.segments[i];
        let k = segs.partition_point(|s| s.start <= age);
        segs[k.saturating_sub(1)].state
    }

    /// `m_i(t)`.
    pub fn value(&self, i: usize, t: f64) -> f64 {
        self.tf.entry(i, self.estimate(i, t), t)
    }

    /// `lim_{t→∞} m_i(t)`.
    pub fn limit(&self, i: usize) -> f64 {
        let last = self.segments[i].last().unwrap().state;
        self.tf.stationary().get(last)
    }

    /// `∫_0^t m_i(s) ds`.
    pub fn cumulative(&self, i: usize, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let segs = &self.segments[i];
        let mut acc = 0.0;
        for (k, seg) in segs.iter().enumerate() {
            if seg.start >= t {
                break;
            }
            let end = segs.get(k + 1).map_or(t, |n| n.start.min(t));
            acc += self.tf.integral_entry(i, seg.state, end)
                - self.tf.integral_entry(i, seg.state, seg.start);
        }
        acc
    }

    /// `∫_0^∞ m_i(c + u) k(u) du` for an exponential-polynomial weight `k`.
    ///
    /// On an age segment with estimate `j`, `m_i(c+u) = [P(c) P(u)]_{ij}`,
    /// so each segment contributes `[P(c) ∫ P(u) k(u) du]_{ij}`.
    pub fn weighted(&self, i: usize, c: f64, k: &ExpPoly) -> f64 {
        let c = c.max(0.0);
        let pc = self.tf.at(c);
        let segs = &self.segments[i];
        let mut acc = 0.0;
        for (idx, seg) in segs.iter().enumerate() {
            let end_age = segs.get(idx + 1).map_or(f64::INFINITY, |n| n.start);
            if end_age <= c {
                continue;
            }
            let a = (seg.start - c).max(0.0);
            let b = end_age - c;
            let j = self.tf.weighted_integral(a, b, k);
            acc += (0..self.size())
                .map(|l| pc[(i, l)] * j[(l, seg.state)])
                .sum::<f64>();
        }
        acc
    }

    /// Profile `Σ_i w_i m_i(t)`; `p(t)` uses `w = π`.
    pub fn profile(&self, weights: Vec<f64>) -> MatchProfile<'_> {
        assert_eq!(weights.len(), self.size());
        MatchProfile {
            kernel: self,
            weights,
        }
    }

    /// The aggregate `p(t) = Σ_i π_i m_i(t)`.
    pub fn aggregate(&self) -> MatchProfile<'_> {
        self.profile(self.stationary().probs().to_vec())
    }

    /// The single-state profile `m_i(t)`.
    pub fn single(&self, i: usize) -> MatchProfile<'_> {
        let mut w = vec![0.0; self.size()];
        w[i] = 1.0;
        self.profile(w)
    }
}

/// A convex combination of per-state match probabilities.
#[derive(Debug, Clone)]
pub struct MatchProfile<'a> {
    kernel: &'a MatchKernel,
    weights: Vec<f64>,
}

impl<'a> MatchProfile<'a> {
    pub fn kernel(&self) -> &'a MatchKernel {
        self.kernel
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn fold<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| w * f(i))
            .sum()
    }

    pub fn value(&self, t: f64) -> f64 {
        self.fold(|i| self.kernel.value(i, t))
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        self.fold(|i| self.kernel.cumulative(i, t))
    }

    pub fn weighted(&self, c: f64, k: &ExpPoly) -> f64 {
        self.fold(|i| self.kernel.weighted(i, c, k))
    }

    /// `p(∞)`.
    pub fn limit(&self) -> f64 {
        self.fold(|i| self.kernel.limit(i))
    }

    /// Non-increasing on a `grid`-point uniform grid over `[0, horizon]`
    /// within slack `1e-10`.
    pub fn is_monotone_decreasing(&self, horizon: f64, grid: usize) -> bool {
        is_monotone_decreasing(|t| self.value(t), horizon, grid)
    }
}

/// Grid check that `f` never increases by more than `1e-10` between
/// consecutive nodes of a uniform grid on `[0, horizon]`.
pub fn is_monotone_decreasing<F: Fn(f64) -> f64>(f: F, horizon: f64, grid: usize) -> bool {
    let grid = grid.max(2);
    let mut prev = f(0.0);
    for k in 1..grid {
        let v = f(horizon * k as f64 / (grid - 1) as f64);
        if v > prev + 1e-10 {
            return false;
        }
        prev = v;
    }
    true
}

fn map_segments(tf: &TransitionFunction, i: usize) -> Vec<Segment> {
    let horizon = tf.horizon();
    let argmax_at = |t: f64| argmax_row(&tf.at(t), i);
    let mut segs = vec![Segment {
        start: 0.0,
        state: argmax_at(0.0),
    }];
    let mut prev_t = 0.0;
    let mut current = segs[0].state;
    for k in 1..=MAP_SCAN_POINTS {
        let t = horizon * k as f64 / MAP_SCAN_POINTS as f64;
        while argmax_at(t) != current {
            let (_, hi) = crate::numeric::bisect(prev_t, t, 1e-13, |x| argmax_at(x) == current);
            current = argmax_at(hi);
            segs.push(Segment {
                start: hi,
                state: current,
            });
            prev_t = hi;
        }
        prev_t = t;
    }
    segs
}
