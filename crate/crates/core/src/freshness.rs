//! Analytic mean binary freshness of a stationary waiting policy.
//!
//! The reply states `X_k` form a Markov chain with kernel
//! `P̃_ij = E[P_ij(D' + W(i, D') + Y)]`, where `D'` is the age of the
//! current reply and `Y` the forward delay of the next query. With `φ` its
//! stationary vector, the long-run fraction of fresh time is the renewal
//! ratio
//!
//! ```text
//!          Σ_i φ_i E[g^W(i)]
//! MBF = ─────────────────────────────,
//!        E[Z] + Σ_i φ_i E[W(i, D)]
//!
//! E[g^W(i)] = E_D'[ ∫_0^∞ m_i(t + D') · (1 − F^Z(t − W(i, D'))) dt ].
//! ```
//!
//! For a fixed age `d` and wait `w` the inner integral splits over the
//! mixture components `(w_k, s_k, U_k)` of `Z`:
//! `Σ_k w_k [M_i(d+w+s_k) − M_i(d) + ∫_0^∞ m_i(d+w+s_k+u) S_k(u) du]`, with
//! `M_i` the running integral of `m_i`. Both pieces are exact (see
//! [`MatchKernel`]), so discrete reply delays need no quadrature at all;
//! an exponential reply delay is integrated out by adaptive Simpson.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::ctmc::{solve_left_null_vector, CtmcError, ExpPoly, GeneratorMatrix};
use crate::delay::{convolve, CombinedDelay, DelayDistribution, DelayError, Kernel};
use crate::estimator::{EstimatorKind, MatchKernel};
use crate::numeric::{adaptive_simpson, QuadratureConfig, QuadratureError};
use crate::waiting::WaitingPolicy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreshnessError {
    #[error(transparent)]
    Ctmc(#[from] CtmcError),

    #[error(transparent)]
    Delay(#[from] DelayError),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(#[from] QuadratureError),

    #[error("mean cycle length {0} is not positive")]
    DegenerateCycle(f64),

    #[error("invalid waiting policy: {0}")]
    InvalidPolicy(String),

    #[error("state {0} out of range")]
    StateOutOfRange(usize),
}

pub type Result<T> = std::result::Result<T, FreshnessError>;

/// Embedded chain of reply states.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledChain {
    pub p_tilde: DMatrix<f64>,
    pub phi: Vec<f64>,
}

/// Analytic freshness of one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreshnessReport {
    pub mbf: f64,
    /// `Σ_i φ_i E[g^W(i)]`.
    pub numerator: f64,
    /// `E[Z] + Σ_i φ_i E[W(i, D)]`.
    pub denominator: f64,
    pub phi: Vec<f64>,
    /// `E[g^W(i)]`.
    pub g: Vec<f64>,
    /// `E[W(i, D)]`.
    pub mean_wait: Vec<f64>,
    pub mean_z: f64,
}

impl FreshnessReport {
    /// Column names of [`FreshnessReport::csv_record`] for `states` states.
    pub fn csv_header(states: usize) -> Vec<String> {
        let mut h = vec!["mbf".to_string(), "numerator".into(), "denominator".into()];
        h.extend((1..=states).map(|i| format!("phi_{i}")));
        h.extend((1..=states).map(|i| format!("g_{i}")));
        h
    }

    /// Flat record `{mbf, numerator, denominator, phi[], g[]}` at 9
    /// significant digits.
    pub fn csv_record(&self) -> Vec<String> {
        let f = |x: f64| crate::numeric::fmt_sig(x, 9);
        let mut r = vec![f(self.mbf), f(self.numerator), f(self.denominator)];
        r.extend(self.phi.iter().map(|x| f(*x)));
        r.extend(self.g.iter().map(|x| f(*x)));
        r
    }
}

/// Expectations over the reply age for one reply state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTerms {
    /// Expected fresh time of the cycle.
    pub fresh: f64,
    /// Expected wait.
    pub wait: f64,
    /// Distribution of the next reply state.
    pub next: Vec<f64>,
}

/// Per-state expectations over the reply age for one policy.
#[derive(Debug, Clone)]
pub(crate) struct CycleTerms {
    pub g: Vec<f64>,
    pub mean_wait: Vec<f64>,
    pub p_tilde: DMatrix<f64>,
}

/// Chain, estimator and delays of one monitoring setup; the shared backend
/// of the evaluator and the optimizers.
#[derive(Debug, Clone)]
pub struct FreshnessModel {
    kernel: MatchKernel,
    forward: DelayDistribution,
    backward: DelayDistribution,
    combined: CombinedDelay,
    /// Survival shapes of the continuous components of `Z`.
    z_shapes: Vec<Option<ExpPoly>>,
    /// `E[P(Y)]`.
    forward_transition: DMatrix<f64>,
    quad: QuadratureConfig,
}

impl FreshnessModel {
    pub fn new(
        g: &GeneratorMatrix,
        kind: EstimatorKind,
        forward: &DelayDistribution,
        backward: &DelayDistribution,
    ) -> Result<Self> {
        Self::with_kernel(MatchKernel::new(kind, g)?, forward, backward)
    }

    pub fn with_kernel(
        kernel: MatchKernel,
        forward: &DelayDistribution,
        backward: &DelayDistribution,
    ) -> Result<Self> {
        let combined = convolve(forward, backward)?;
        let z_shapes = combined
            .terms()
            .iter()
            .map(|t| t.kernel.survival_shape())
            .collect();
        let forward_transition = expected_transition(&kernel, &CombinedDelay::from(forward));
        Ok(Self {
            kernel,
            forward: forward.clone(),
            backward: backward.clone(),
            combined,
            z_shapes,
            forward_transition,
            quad: QuadratureConfig::default(),
        })
    }

    pub fn with_quadrature(mut self, quad: QuadratureConfig) -> Self {
        self.quad = quad;
        self
    }

    pub fn kernel(&self) -> &MatchKernel {
        &self.kernel
    }

    pub fn states(&self) -> usize {
        self.kernel.size()
    }

    pub fn forward(&self) -> &DelayDistribution {
        &self.forward
    }

    pub fn backward(&self) -> &DelayDistribution {
        &self.backward
    }

    pub fn combined(&self) -> &CombinedDelay {
        &self.combined
    }

    pub fn mean_z(&self) -> f64 {
        self.combined.mean()
    }

    pub fn pi(&self) -> &[f64] {
        self.kernel.stationary().probs()
    }

    /// `E[P(Y)]` for the forward delay.
    pub fn forward_transition(&self) -> &DMatrix<f64> {
        &self.forward_transition
    }

    /// Expected fresh time of one cycle that starts with a reply from state
    /// `i` aged `d` and a wait `w`: `E_Z[∫_d^{d+w+Z} m_i(t) dt]`.
    pub fn cycle_fresh_time(&self, i: usize, d: f64, w: f64) -> f64 {
        let base = self.kernel.cumulative(i, d);
        self.combined
            .terms()
            .iter()
            .zip(&self.z_shapes)
            .map(|(term, shape)| {
                let c = d + w + term.shift;
                let mut v = self.kernel.cumulative(i, c) - base;
                if let Some(shape) = shape {
                    v += self.kernel.weighted(i, c, shape);
                }
                term.weight * v
            })
            .sum()
    }

    /// Same as [`Self::cycle_fresh_time`] for a weighted mix of states.
    pub fn profile_fresh_time(&self, weights: &[f64], d: f64, w: f64) -> f64 {
        weights
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != 0.0)
            .map(|(i, p)| p * self.cycle_fresh_time(i, d, w))
            .sum()
    }

    /// Distribution of the next reply state: row `i` of `P(d + w) E[P(Y)]`.
    pub fn next_state_row(&self, i: usize, d: f64, w: f64) -> Vec<f64> {
        let p = self.kernel.transition().at(d + w);
        let n = self.states();
        (0..n)
            .map(|j| (0..n).map(|l| p[(i, l)] * self.forward_transition[(l, j)]).sum())
            .collect()
    }

    /// `E[g^W(i)]`, `E[W(i, D)]` and `P̃` for a policy.
    pub(crate) fn cycle_terms(&self, policy: &WaitingPolicy) -> Result<CycleTerms> {
        let n = self.states();
        policy
            .validate(n)
            .map_err(FreshnessError::InvalidPolicy)?;
        let mut g = vec![0.0; n];
        let mut mean_wait = vec![0.0; n];
        let mut p_tilde = DMatrix::zeros(n, n);
        for i in 0..n {
            let row = self.state_terms(i, |d| policy.wait(i, d), policy.delay_breakpoints(i))?;
            g[i] = row.fresh;
            mean_wait[i] = row.wait;
            for j in 0..n {
                p_tilde[(i, j)] = row.next[j];
            }
        }
        Ok(CycleTerms {
            g,
            mean_wait,
            p_tilde,
        })
    }

    /// Cycle expectations over the reply age for state `i` under the
    /// age-dependent wait `wait`; `breaks` are ages where `wait` has kinks.
    pub fn state_terms<W>(&self, i: usize, wait: W, breaks: Vec<f64>) -> Result<StateTerms>
    where
        W: Fn(f64) -> f64,
    {
        if i >= self.states() {
            return Err(FreshnessError::StateOutOfRange(i));
        }
        let n = self.states();
        let per_age = |d: f64| -> Vec<f64> {
            let w = wait(d);
            let mut v = Vec::with_capacity(n + 2);
            v.push(self.cycle_fresh_time(i, d, w));
            v.push(w);
            v.extend(self.next_state_row(i, d, w));
            v
        };
        let acc = match self.backward.atom_list() {
            Some(atoms) => {
                let mut acc = vec![0.0; n + 2];
                for a in atoms {
                    for (x, y) in acc.iter_mut().zip(per_age(a.value)) {
                        *x += a.prob * y;
                    }
                }
                acc
            }
            None => self.integrate_over_age(&per_age, breaks)?,
        };
        Ok(StateTerms {
            fresh: acc[0],
            wait: acc[1],
            next: acc[2..].to_vec(),
        })
    }

    /// The same setup with the reply delay replaced by `bins` quantile
    /// atoms; atomic reply delays are kept as they are.
    pub fn discretized(&self, bins: usize) -> Result<Self> {
        if self.backward.is_discrete() {
            return Ok(self.clone());
        }
        let d = self.backward.discretize(bins);
        Ok(Self::with_kernel(self.kernel.clone(), &self.forward, &d)?.with_quadrature(self.quad))
    }

    fn integrate_over_age<F>(&self, f: &F, breaks: Vec<f64>) -> Result<Vec<f64>>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let rate = match self.backward {
            DelayDistribution::Exponential { rate } => rate,
            _ => unreachable!("discrete ages are summed exactly"),
        };
        // Mass beyond the cut-off is below 1e-13.
        let upper = 13.0 * std::f64::consts::LN_10 / rate;
        let weighted = |d: f64| {
            let dens = rate * (-rate * d).exp();
            f(d).into_iter().map(|x| x * dens).collect::<Vec<f64>>()
        };
        let mut acc = adaptive_simpson(&weighted, 0.0, upper, &breaks, &self.quad)?;
        // Return the truncated mass to the next-state distribution so rows
        // stay stochastic.
        let mass: f64 = acc[2..].iter().sum();
        if mass > 0.0 {
            acc[2..].iter_mut().for_each(|x| *x /= mass);
        }
        Ok(acc)
    }

    /// `P̃` and its stationary vector `φ`.
    pub fn sampled_chain(&self, policy: &WaitingPolicy) -> Result<SampledChain> {
        let terms = self.cycle_terms(policy)?;
        let phi = stationary_of(&terms.p_tilde)?;
        Ok(SampledChain {
            p_tilde: terms.p_tilde,
            phi,
        })
    }

    /// `E[g^W(i)]`.
    pub fn expected_g(&self, i: usize, policy: &WaitingPolicy) -> Result<f64> {
        if i >= self.states() {
            return Err(FreshnessError::StateOutOfRange(i));
        }
        Ok(self.cycle_terms(policy)?.g[i])
    }

    /// Analytic MBF with `φ` solved from `P̃`.
    pub fn evaluate(&self, policy: &WaitingPolicy) -> Result<FreshnessReport> {
        let terms = self.cycle_terms(policy)?;
        let phi = stationary_of(&terms.p_tilde)?;
        self.assemble(terms, phi)
    }

    /// Analytic MBF of the zero-wait policy, with `φ = π`.
    pub fn zero_wait(&self, w_max: f64) -> Result<FreshnessReport> {
        let terms = self.cycle_terms(&WaitingPolicy::zero_wait(w_max))?;
        self.assemble(terms, self.pi().to_vec())
    }

    /// Report for a state-independent policy using `φ = π` directly.
    pub(crate) fn evaluate_with_pi(&self, policy: &WaitingPolicy) -> Result<FreshnessReport> {
        let terms = self.cycle_terms(policy)?;
        self.assemble(terms, self.pi().to_vec())
    }

    fn assemble(&self, terms: CycleTerms, phi: Vec<f64>) -> Result<FreshnessReport> {
        let mean_z = self.mean_z();
        let numerator: f64 = phi.iter().zip(&terms.g).map(|(p, g)| p * g).sum();
        let denominator =
            mean_z + phi.iter().zip(&terms.mean_wait).map(|(p, w)| p * w).sum::<f64>();
        if !(denominator > 0.0) {
            return Err(FreshnessError::DegenerateCycle(denominator));
        }
        Ok(FreshnessReport {
            mbf: numerator / denominator,
            numerator,
            denominator,
            phi,
            g: terms.g,
            mean_wait: terms.mean_wait,
            mean_z,
        })
    }

    /// Whether the reply age is a finite set of atoms.
    pub fn backward_atoms(&self) -> Option<Vec<crate::delay::Atom>> {
        self.backward.atom_list()
    }
}

/// `E[P(V)]` for a delay `V` given as a shifted mixture.
fn expected_transition(kernel: &MatchKernel, v: &CombinedDelay) -> DMatrix<f64> {
    let tf = kernel.transition();
    let n = tf.size();
    let mut out = DMatrix::zeros(n, n);
    for term in v.terms() {
        let shifted = tf.at(term.shift);
        let m = match term.kernel {
            Kernel::Point => shifted,
            k => {
                let dens = k.density_shape().unwrap();
                shifted * tf.weighted_integral(0.0, f64::INFINITY, &dens)
            }
        };
        out += m * term.weight;
    }
    out
}

/// Stationary vector of a stochastic matrix: direct solve, falling back to
/// power iteration on the lazy chain when the solve is ill-conditioned.
pub(crate) fn stationary_of(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    let a = p.transpose() - DMatrix::identity(n, n);
    if let Ok(phi) = solve_left_null_vector(&a) {
        let residual = (0..n)
            .map(|j| ((0..n).map(|i| phi[i] * p[(i, j)]).sum::<f64>() - phi[j]).abs())
            .fold(0.0, f64::max);
        if residual < 1e-10 {
            return Ok(phi);
        }
    }
    let mut phi = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..n)
            .map(|j| 0.5 * (phi[j] + (0..n).map(|i| phi[i] * p[(i, j)]).sum::<f64>()))
            .collect();
        let delta = next
            .iter()
            .zip(&phi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        phi = next;
        if delta < 1e-15 {
            return Ok(phi);
        }
    }
    Err(CtmcError::SingularSystem.into())
}

/// `P̃` and `φ` for a policy (the estimator does not enter).
pub fn sampled_chain(
    g: &GeneratorMatrix,
    y: &DelayDistribution,
    d: &DelayDistribution,
    w: &WaitingPolicy,
) -> Result<SampledChain> {
    FreshnessModel::new(g, EstimatorKind::Martingale, y, d)?.sampled_chain(w)
}

/// `E[g^W(i)]`.
pub fn expected_g(
    g: &GeneratorMatrix,
    kind: EstimatorKind,
    i: usize,
    y: &DelayDistribution,
    d: &DelayDistribution,
    w: &WaitingPolicy,
) -> Result<f64> {
    FreshnessModel::new(g, kind, y, d)?.expected_g(i, w)
}

/// Analytic MBF of a policy.
pub fn mbf_analytic(
    g: &GeneratorMatrix,
    kind: EstimatorKind,
    y: &DelayDistribution,
    d: &DelayDistribution,
    w: &WaitingPolicy,
) -> Result<FreshnessReport> {
    FreshnessModel::new(g, kind, y, d)?.evaluate(w)
}

/// Analytic MBF of the zero-wait policy.
pub fn zero_wait_mbf(
    g: &GeneratorMatrix,
    kind: EstimatorKind,
    y: &DelayDistribution,
    d: &DelayDistribution,
) -> Result<FreshnessReport> {
    FreshnessModel::new(g, kind, y, d)?.zero_wait(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::transition_probabilities;
    use crate::waiting::{DelayRule, PolicyForm};

    fn det(v: f64) -> DelayDistribution {
        DelayDistribution::Deterministic(v)
    }

    fn sym() -> GeneratorMatrix {
        GeneratorMatrix::binary(1.0, 1.0).unwrap()
    }

    /// ∫_1^2 (0.5 + 0.5 e^{-2t}) dt.
    fn sym_zero_wait_unit_delay() -> f64 {
        0.5 + 0.25 * ((-2.0f64).exp() - (-4.0f64).exp())
    }

    #[test]
    fn zero_wait_single_atom_chain_is_p_of_d() {
        let g = GeneratorMatrix::binary(1.0, 0.1).unwrap();
        let chain = sampled_chain(&g, &det(0.0), &det(0.8), &WaitingPolicy::zero_wait(1.5)).unwrap();
        let p = transition_probabilities(&g, 0.8).unwrap();
        assert!((chain.p_tilde - p.probs).amax() < 1e-10);
    }

    #[test]
    fn delay_independent_chain_expands_atoms() {
        let g = GeneratorMatrix::binary(1.0, 0.1).unwrap();
        let d = DelayDistribution::atoms(&[(0.0, 0.5), (2.0, 0.5)]).unwrap();
        let w = WaitingPolicy::new(PolicyForm::DelayIndependent(vec![0.0, 1.5]), 1.5);
        let chain = sampled_chain(&g, &det(0.0), &d, &w).unwrap();
        for (i, wi) in [(0usize, 0.0), (1, 1.5)] {
            let a = transition_probabilities(&g, wi).unwrap();
            let b = transition_probabilities(&g, 2.0 + wi).unwrap();
            for j in 0..2 {
                let expected = 0.5 * a.get(i, j) + 0.5 * b.get(i, j);
                assert!((chain.p_tilde[(i, j)] - expected).abs() < 1e-10);
            }
        }
        let phi = &chain.phi;
        for j in 0..2 {
            let lhs: f64 = (0..2).map(|i| phi[i] * chain.p_tilde[(i, j)]).sum();
            assert!((lhs - phi[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn state_independent_phi_is_pi() {
        let g = GeneratorMatrix::binary(1.0, 0.1).unwrap();
        let d = DelayDistribution::atoms(&[(0.0, 0.5), (0.7, 0.5)]).unwrap();
        let w = WaitingPolicy::new(
            PolicyForm::StateIndependent(DelayRule::Table(vec![(0.0, 1.2), (0.7, 0.3)])),
            1.5,
        );
        let chain = sampled_chain(&g, &det(0.4), &d, &w).unwrap();
        assert!((chain.phi[0] - 1.0 / 11.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_zero_wait_unit_delay() {
        let expected = sym_zero_wait_unit_delay();
        assert!((expected - 0.529255).abs() < 1e-6);
        let zw = WaitingPolicy::zero_wait(1.5);
        for i in 0..2 {
            let g = expected_g(&sym(), EstimatorKind::Martingale, i, &det(0.0), &det(1.0), &zw).unwrap();
            assert!((g - expected).abs() < 1e-10);
        }
        let r = mbf_analytic(&sym(), EstimatorKind::Martingale, &det(0.0), &det(1.0), &zw).unwrap();
        assert!((r.mbf - expected).abs() < 1e-10);
        let z = zero_wait_mbf(&sym(), EstimatorKind::Martingale, &det(0.0), &det(1.0)).unwrap();
        assert!((z.mbf - r.mbf).abs() < 1e-12);
    }

    #[test]
    fn full_wait_with_no_delay_integrates_match_probability() {
        let w_max = 1.5;
        let w = WaitingPolicy::constant(w_max, w_max);
        let g = GeneratorMatrix::binary(1.0, 0.1).unwrap();
        for i in 0..2 {
            let got = expected_g(&g, EstimatorKind::Martingale, i, &det(0.0), &det(0.0), &w).unwrap();
            let (a, b) = if i == 0 { (1.0, 0.1) } else { (0.1, 1.0) };
            let s: f64 = a + b;
            let exact = b / s * w_max + a / (s * s) * (1.0 - (-s * w_max).exp());
            assert!((got - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn near_instant_replies_are_almost_always_fresh() {
        let r = zero_wait_mbf(&sym(), EstimatorKind::Martingale, &det(1e-3), &det(0.0)).unwrap();
        assert!(r.mbf >= 0.999);
        let exact = 1e-3 * 0.5 + 0.25 * (1.0 - (-2e-3f64).exp());
        assert!((r.mbf - exact / 1e-3).abs() < 1e-10);
    }

    #[test]
    fn degenerate_cycle() {
        let err = zero_wait_mbf(&sym(), EstimatorKind::Martingale, &det(0.0), &det(0.0)).unwrap_err();
        assert!(matches!(err, FreshnessError::DegenerateCycle(_)));
    }

    #[test]
    fn zero_wait_phi_equals_pi() {
        let g = GeneratorMatrix::binary(1.0, 0.1).unwrap();
        let d = DelayDistribution::atoms(&[(0.0, 0.5), (0.2, 0.5)]).unwrap();
        let z = zero_wait_mbf(&g, EstimatorKind::Martingale, &det(0.0), &d).unwrap();
        let r = mbf_analytic(&g, EstimatorKind::Martingale, &det(0.0), &d, &WaitingPolicy::zero_wait(1.5))
            .unwrap();
        assert!((z.phi[0] - 1.0 / 11.0).abs() < 1e-9);
        assert!((r.phi[0] - 1.0 / 11.0).abs() < 1e-9);
        assert!((z.mbf - r.mbf).abs() < 1e-12);
    }

    #[test]
    fn freshness_degrades_with_staleness() {
        let mut prev = 1.0;
        for k in 1..=30 {
            let z = k as f64 * 0.1;
            let r = zero_wait_mbf(&sym(), EstimatorKind::Martingale, &det(0.0), &det(z)).unwrap();
            assert!(r.mbf <= prev + 1e-12);
            assert!((0.0..=1.0).contains(&r.mbf));
            prev = r.mbf;
        }
    }

    #[test]
    fn exponential_forward_delay_matches_quadrature() {
        use crate::numeric::{integrate, QuadratureConfig};
        // Y ~ Exp(1), D = 0.3: E[g(i)] = ∫_0^∞ m_i(t + 0.3) (1 − F^Z(t − w)) dt.
        let g = GeneratorMatrix::binary(1.0, 0.1).unwrap();
        let y = DelayDistribution::exponential(1.0).unwrap();
        let d = det(0.3);
        let w = 0.4;
        let policy = WaitingPolicy::constant(w, 1.5);
        let model = FreshnessModel::new(&g, EstimatorKind::Martingale, &y, &d).unwrap();
        let cfg = QuadratureConfig::default();
        for i in 0..2 {
            let oracle = integrate(
                |t| {
                    let m = transition_probabilities(&g, t + 0.3).unwrap().get(i, i);
                    m * model.combined().tail_cdf_shifted(t, w)
                },
                0.0,
                45.0,
                &[w, w + 0.3],
                &cfg,
            )
            .unwrap();
            assert!((model.expected_g(i, &policy).unwrap() - oracle).abs() < 1e-8);
        }
    }

    #[test]
    fn exponential_reply_delay_matches_discretized_limit() {
        // Integrating over an exponential age agrees with a fine atomic
        // approximation of the same law.
        let g = GeneratorMatrix::binary(0.6, 0.4).unwrap();
        let d = DelayDistribution::exponential(2.0).unwrap();
        let policy = WaitingPolicy::new(PolicyForm::StateIndependent(DelayRule::Threshold(0.8)), 1.5);
        let exact = mbf_analytic(&g, EstimatorKind::Martingale, &det(0.1), &d, &policy).unwrap();
        let fine = d.discretize(200);
        let approx = mbf_analytic(&g, EstimatorKind::Martingale, &det(0.1), &fine, &policy).unwrap();
        assert!((exact.mbf - approx.mbf).abs() < 1e-4);
        assert!((exact.phi[0] - 0.4).abs() < 1e-9);
    }

    #[test]
    fn report_record_layout() {
        let r = zero_wait_mbf(&sym(), EstimatorKind::Martingale, &det(0.0), &det(1.0)).unwrap();
        let header = FreshnessReport::csv_header(2);
        assert_eq!(header, ["mbf", "numerator", "denominator", "phi_1", "phi_2", "g_1", "g_2"]);
        let rec = r.csv_record();
        assert_eq!(rec.len(), header.len());
        assert_eq!(rec[0], "0.529254911");
        assert_eq!(rec[3], "0.5");
    }
}
