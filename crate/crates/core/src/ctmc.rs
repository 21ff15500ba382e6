//! Finite-state continuous-time Markov chains.
//!
//! A [`GeneratorMatrix`] is validated once at construction (sign pattern,
//! zero row sums, irreducibility). Transition matrices `P(t) = exp(Qt)` are
//! computed by uniformization: with `Λ = max_i |Q_ii|` and `U = I + Q/Λ`,
//!
//! ```text
//! P(t)          = Σ_k  Pois(k; Λt) · U^k
//! ∫_0^t P(s) ds = Σ_k  P(N_Λt > k) / Λ · U^k
//! ```
//!
//! Both series have non-negative terms only, which keeps the result
//! row-stochastic up to rounding for any `t`.
//!
//! [`TransitionFunction`] caches the powers `U^k` up to the ergodic horizon
//! of the chain and is the evaluator every downstream module uses.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors raised while validating or evaluating a chain.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtmcError {
    #[error("generator is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("generator needs at least 2 states, got {0}")]
    TooSmall(usize),

    #[error("generator contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("negative off-diagonal rate {value} at ({row}, {col})")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {sum}, expected 0")]
    RowSumNonzero { row: usize, sum: f64 },

    #[error("generator is reducible: state {0} cannot reach every other state")]
    Reducible(usize),

    #[error("uniformization budget exceeded: Λt = {rate_time} > {budget}")]
    NumericalOverflow { rate_time: f64, budget: f64 },

    #[error("invalid time {0}: must be finite and non-negative")]
    InvalidTime(f64),

    #[error("linear system for the stationary vector is singular")]
    SingularSystem,
}

pub type Result<T> = std::result::Result<T, CtmcError>;

/// Numerical tolerances for chain construction and evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtmcTolerances {
    /// Absolute tolerance on generator row sums.
    pub row_sum: f64,
    /// Poisson tail mass dropped by the uniformization series.
    pub series_tail: f64,
    /// Largest admissible `Λt` for a single series evaluation.
    pub series_budget: f64,
    /// Total-variation distance between `P(T*)` rows and `π` that defines
    /// the ergodic horizon `T*`.
    pub ergodic_tv: f64,
}

impl Default for CtmcTolerances {
    fn default() -> Self {
        Self {
            row_sum: 1e-12,
            series_tail: 1e-12,
            series_budget: 1e5,
            ergodic_tv: 1e-10,
        }
    }
}

/// A validated, irreducible generator matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    rates: DMatrix<f64>,
    uniform_rate: f64,
}

/// `P(t)` for a fixed `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub t: f64,
    pub probs: DMatrix<f64>,
}

/// Stationary distribution `π` with `πQ = 0`, `Σπ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pi: Vec<f64>,
}

/// Validate a row-major rate matrix with default tolerances.
pub fn validate_generator(rows: &[Vec<f64>]) -> Result<GeneratorMatrix> {
    GeneratorMatrix::with_tolerances(rows, &CtmcTolerances::default())
}

/// `exp(Qt)` with default tolerances.
pub fn transition_probabilities(g: &GeneratorMatrix, t: f64) -> Result<TransitionMatrix> {
    g.transition_probabilities(t, &CtmcTolerances::default())
}

pub fn stationary_distribution(g: &GeneratorMatrix) -> Result<StationaryDistribution> {
    g.stationary_distribution()
}

impl GeneratorMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        Self::with_tolerances(rows, &CtmcTolerances::default())
    }

    /// Two-state chain with rate `alpha` for 1→2 and `beta` for 2→1.
    pub fn binary(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(&[vec![-alpha, alpha], vec![beta, -beta]])
    }

    pub fn with_tolerances(rows: &[Vec<f64>], tol: &CtmcTolerances) -> Result<Self> {
        let n = rows.len();
        for row in rows {
            if row.len() != n {
                return Err(CtmcError::NonSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
        }
        if n < 2 {
            return Err(CtmcError::TooSmall(n));
        }
        let rates = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::from_matrix(rates, tol)
    }

    pub fn from_matrix(rates: DMatrix<f64>, tol: &CtmcTolerances) -> Result<Self> {
        let (n, m) = rates.shape();
        if n != m {
            return Err(CtmcError::NonSquare { rows: n, cols: m });
        }
        if n < 2 {
            return Err(CtmcError::TooSmall(n));
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let v = rates[(i, j)];
                if !v.is_finite() {
                    return Err(CtmcError::NonFinite { row: i, col: j });
                }
                if i != j && v < 0.0 {
                    return Err(CtmcError::NegativeOffDiagonal {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                sum += v;
            }
            if sum.abs() > tol.row_sum {
                return Err(CtmcError::RowSumNonzero { row: i, sum });
            }
        }
        check_irreducible(&rates)?;
        let uniform_rate = (0..n).map(|i| rates[(i, i)].abs()).fold(0.0, f64::max);
        Ok(Self {
            rates,
            uniform_rate,
        })
    }

    pub fn size(&self) -> usize {
        self.rates.nrows()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[(i, j)]
    }

    /// Uniformization rate `Λ = max_i |Q_ii|`.
    pub fn uniform_rate(&self) -> f64 {
        self.uniform_rate
    }

    /// Row-major copy of the rates.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.size())
            .map(|i| self.rates.row(i).iter().copied().collect())
            .collect()
    }

    /// The jump chain `U = I + Q/Λ`.
    pub fn uniformized(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::identity(n, n) + &self.rates / self.uniform_rate
    }

    pub fn transition_probabilities(
        &self,
        t: f64,
        tol: &CtmcTolerances,
    ) -> Result<TransitionMatrix> {
        if !t.is_finite() || t < 0.0 {
            return Err(CtmcError::InvalidTime(t));
        }
        let x = self.uniform_rate * t;
        if x > tol.series_budget {
            return Err(CtmcError::NumericalOverflow {
                rate_time: x,
                budget: tol.series_budget,
            });
        }
        let n = self.size();
        let weights = poisson_weights(x, tol.series_tail);
        let u = self.uniformized();
        let mut power = DMatrix::identity(n, n);
        let mut probs = DMatrix::zeros(n, n);
        for (k, w) in weights.iter().enumerate() {
            if k > 0 {
                power = &power * &u;
            }
            probs += &power * *w;
        }
        Ok(TransitionMatrix { t, probs })
    }

    /// Solves `πQ = 0, Σπ = 1` with the last balance equation replaced by
    /// the normalization row.
    pub fn stationary_distribution(&self) -> Result<StationaryDistribution> {
        let pi = solve_left_null_vector(&self.rates.transpose())?;
        let residual = DVector::from_vec(pi.clone()).transpose() * &self.rates;
        if residual.iter().any(|r| r.abs() > 1e-10) {
            return Err(CtmcError::SingularSystem);
        }
        Ok(StationaryDistribution { pi })
    }

    /// `(μI − Q)^{-1}` for `μ > 0`.
    pub fn resolvent(&self, mu: f64) -> DMatrix<f64> {
        let n = self.size();
        let m = DMatrix::identity(n, n) * mu - &self.rates;
        m.try_inverse()
            .expect("μI − Q is non-singular for μ > 0 and a generator Q")
    }
}

/// Solves `A x = 0` with the last equation replaced by `Σx = 1`, clamping
/// round-off negatives. `A` is `Qᵀ` for a generator or `P̃ᵀ − I` for a
/// stochastic matrix.
pub(crate) fn solve_left_null_vector(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    let mut sys = a.clone();
    for j in 0..n {
        sys[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let x = sys.lu().solve(&rhs).ok_or(CtmcError::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return Err(CtmcError::SingularSystem);
    }
    let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    if total <= 0.0 {
        return Err(CtmcError::SingularSystem);
    }
    for p in &mut pi {
        *p /= total;
    }
    Ok(pi)
}

fn check_irreducible(rates: &DMatrix<f64>) -> Result<()> {
    let n = rates.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let r = if forward { rates[(i, j)] } else { rates[(j, i)] };
                if i != j && r > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    if let Some(j) = fwd.iter().position(|s| !s) {
        return Err(CtmcError::Reducible(j));
    }
    let bwd = reach(false);
    if let Some(j) = bwd.iter().position(|s| !s) {
        return Err(CtmcError::Reducible(j));
    }
    Ok(())
}

/// Poisson(x) probabilities `w_0..w_R`, with `R` chosen so the dropped tail
/// mass is below `tail`. Computed in log space so large `x` does not
/// underflow the leading weights into a wrong normalization.
pub(crate) fn poisson_weights(x: f64, tail: f64) -> Vec<f64> {
    if x <= 0.0 {
        return vec![1.0];
    }
    let ln_x = x.ln();
    let mut weights = Vec::with_capacity((x + 10.0 * x.sqrt() + 20.0) as usize);
    let mut log_w = -x;
    let mut k = 0usize;
    loop {
        let w = log_w.exp();
        weights.push(w);
        let next = (k + 1) as f64;
        if next > x {
            // Past the mode the ratio w_{j+1}/w_j = x/(j+1) is at most r,
            // so the remaining mass is bounded by a geometric series.
            let r = x / next;
            if r < 1.0 && w * r / (1.0 - r) < tail {
                break;
            }
        }
        k += 1;
        log_w += ln_x - (k as f64).ln();
    }
    // The running log-sum drifts by O(k·ε) for large x; renormalizing the
    // truncated weights removes the drift at the cost of at most `tail`.
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    weights
}

/// `P(N_x > k)` for `k = 0..weights.len()`, summed from the right so tiny
/// tails keep full relative precision.
pub(crate) fn poisson_survival(weights: &[f64]) -> Vec<f64> {
    let mut surv = vec![0.0; weights.len()];
    let mut acc = 0.0;
    for k in (0..weights.len()).rev() {
        surv[k] = acc;
        acc += weights[k];
    }
    surv
}

impl TransitionMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[(i, j)]
    }
}

impl StationaryDistribution {
    pub fn new(pi: Vec<f64>) -> Self {
        Self { pi }
    }

    pub fn probs(&self) -> &[f64] {
        &self.pi
    }

    pub fn get(&self, i: usize) -> f64 {
        self.pi[i]
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

/// Cached transition function of a chain.
///
/// Holds `U^k` for every `k` needed up to the ergodic horizon `T*`, the
/// first doubling of `1/Λ` at which every row of `P(T*)` is within
/// `ergodic_tv` of `π` in total variation. Beyond `T*` the function returns
/// the limit `1π` and integrals grow linearly with slope `1π`.
#[derive(Debug, Clone)]
pub struct TransitionFunction {
    generator: GeneratorMatrix,
    stationary: StationaryDistribution,
    limit: DMatrix<f64>,
    horizon: f64,
    powers: Vec<DMatrix<f64>>,
    horizon_integral: DMatrix<f64>,
    tol: CtmcTolerances,
}

impl TransitionFunction {
    pub fn new(generator: &GeneratorMatrix) -> Result<Self> {
        Self::with_tolerances(generator, CtmcTolerances::default())
    }

    pub fn with_tolerances(generator: &GeneratorMatrix, tol: CtmcTolerances) -> Result<Self> {
        let n = generator.size();
        let stationary = generator.stationary_distribution()?;
        let limit = DMatrix::from_fn(n, n, |_, j| stationary.get(j));
        let rate = generator.uniform_rate();

        let mut horizon = 1.0 / rate;
        loop {
            let p = generator.transition_probabilities(horizon, &tol)?;
            if max_row_tv(&p.probs, &limit) < tol.ergodic_tv {
                break;
            }
            horizon *= 2.0;
        }

        let weights = poisson_weights(rate * horizon, tol.series_tail);
        let u = generator.uniformized();
        let mut powers = Vec::with_capacity(weights.len() + 1);
        powers.push(DMatrix::identity(n, n));
        for k in 1..=weights.len() {
            let next = &powers[k - 1] * &u;
            powers.push(next);
        }

        let mut tf = Self {
            generator: generator.clone(),
            stationary,
            limit,
            horizon,
            powers,
            horizon_integral: DMatrix::zeros(n, n),
            tol,
        };
        tf.horizon_integral = tf.series_integral(horizon);
        Ok(tf)
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }

    pub fn stationary(&self) -> &StationaryDistribution {
        &self.stationary
    }

    pub fn size(&self) -> usize {
        self.generator.size()
    }

    /// Ergodic horizon `T*`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `lim_{t→∞} P(t) = 1π`.
    pub fn limit(&self) -> &DMatrix<f64> {
        &self.limit
    }

    /// `P(t)`; `t` is clamped at 0.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let t = t.max(0.0);
        if t >= self.horizon {
            return self.limit.clone();
        }
        let weights = poisson_weights(self.generator.uniform_rate() * t, self.tol.series_tail);
        self.combine(&weights)
    }

    /// Single entry `P_ij(t)`.
    pub fn entry(&self, i: usize, j: usize, t: f64) -> f64 {
        let t = t.max(0.0);
        if t >= self.horizon {
            return self.limit[(i, j)];
        }
        let weights = poisson_weights(self.generator.uniform_rate() * t, self.tol.series_tail);
        weights
            .iter()
            .zip(&self.powers)
            .map(|(w, p)| w * p[(i, j)])
            .sum()
    }

    /// `∫_0^t P(s) ds`; `t` is clamped at 0.
    pub fn integral(&self, t: f64) -> DMatrix<f64> {
        let t = t.max(0.0);
        if t >= self.horizon {
            return &self.horizon_integral + &self.limit * (t - self.horizon);
        }
        self.series_integral(t)
    }

    /// Single entry of `∫_0^t P(s) ds`.
    pub fn integral_entry(&self, i: usize, j: usize, t: f64) -> f64 {
        let t = t.max(0.0);
        if t >= self.horizon {
            return self.horizon_integral[(i, j)] + self.limit[(i, j)] * (t - self.horizon);
        }
        let rate = self.generator.uniform_rate();
        let surv = poisson_survival(&poisson_weights(rate * t, self.tol.series_tail));
        surv.iter()
            .zip(&self.powers)
            .map(|(s, p)| s * p[(i, j)])
            .sum::<f64>()
            / rate
    }

    /// `(μI − Q)^{-1}`.
    pub fn resolvent(&self, mu: f64) -> DMatrix<f64> {
        self.generator.resolvent(mu)
    }

    fn combine(&self, weights: &[f64]) -> DMatrix<f64> {
        let n = self.size();
        let mut out = DMatrix::zeros(n, n);
        for (w, p) in weights.iter().zip(&self.powers) {
            out += p * *w;
        }
        out
    }

    fn series_integral(&self, t: f64) -> DMatrix<f64> {
        let rate = self.generator.uniform_rate();
        let surv = poisson_survival(&poisson_weights(rate * t, self.tol.series_tail));
        self.combine(&surv) / rate
    }
}

/// Weight `k(u) = Σ_r c_r · u^{n_r} · e^{-μ_r u}` with `n_r ∈ {0, 1}` and
/// `μ_r > 0`. Survival functions and densities of the continuous delay
/// kernels all have this shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExpPoly {
    pub terms: Vec<ExpPolyTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpPolyTerm {
    pub coef: f64,
    /// Multiplies the term by `u` when set.
    pub linear: bool,
    pub rate: f64,
}

impl ExpPoly {
    pub fn eval(&self, u: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let base = t.coef * (-t.rate * u).exp();
                if t.linear {
                    base * u
                } else {
                    base
                }
            })
            .sum()
    }
}

impl TransitionFunction {
    /// `∫_a^b P(u) k(u) du` for `0 ≤ a ≤ b ≤ ∞`, in closed form.
    ///
    /// With `E(u) = P(u) e^{-μu}` and `R = (μI − Q)^{-1}`, `E' = −E R^{-1}`,
    /// so `∫_a^b E = (E(a) − E(b)) R` and
    /// `∫_a^b u E = (a E(a) − b E(b)) R + (E(a) − E(b)) R²`.
    pub fn weighted_integral(&self, a: f64, b: f64, k: &ExpPoly) -> DMatrix<f64> {
        let n = self.size();
        let mut out = DMatrix::zeros(n, n);
        if b <= a {
            return out;
        }
        let pa = self.at(a);
        let pb = if b.is_finite() { Some(self.at(b)) } else { None };
        for term in &k.terms {
            let r = self.resolvent(term.rate);
            let ea = &pa * (-term.rate * a).exp();
            let eb = match &pb {
                Some(p) => p * (-term.rate * b).exp(),
                None => DMatrix::zeros(n, n),
            };
            let diff = &ea - &eb;
            let j = if term.linear {
                let b_eb = if b.is_finite() { &eb * b } else { DMatrix::zeros(n, n) };
                (&ea * a - b_eb) * &r + &diff * &r * &r
            } else {
                &diff * &r
            };
            out += j * term.coef;
        }
        out
    }
}

fn max_row_tv(p: &DMatrix<f64>, limit: &DMatrix<f64>) -> f64 {
    (0..p.nrows())
        .map(|i| {
            0.5 * (0..p.ncols())
                .map(|j| (p[(i, j)] - limit[(i, j)]).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}
