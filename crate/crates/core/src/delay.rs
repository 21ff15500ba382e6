//! Forward (query) and backward (reply) delay distributions and their sum.
//!
//! A single delay is deterministic, a finite set of atoms, or exponential.
//! The combined delay `Z = Y + D` is kept as a finite mixture of shifted
//! kernels, `Z = Σ_k w_k · (s_k + U_k)`, where each `U_k` is a point mass
//! at 0, an exponential, an Erlang-2 or a two-rate hypoexponential. Every
//! pairwise convolution of the base families lands in that class, so CDFs,
//! densities and survival integrals stay exact.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::ctmc::{ExpPoly, ExpPolyTerm};

/// Atoms closer than this are merged into one.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("delay value {0} must be finite and non-negative")]
    InvalidValue(f64),

    #[error("atom probability {0} must be finite and strictly positive")]
    InvalidProbability(f64),

    #[error("atom probabilities sum to {0}, expected 1")]
    NotNormalized(f64),

    #[error("no atoms given")]
    Empty,

    #[error("exponential rate {0} must be finite and positive")]
    InvalidRate(f64),

    #[error("convolution of {left} with {right} has no closed form; discretize first")]
    UnsupportedPair { left: String, right: String },
}

pub type Result<T> = std::result::Result<T, DelayError>;

/// One support point of a discrete delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

/// Law of a single non-negative delay (`Y` or `D`).
#[derive(Debug, Clone, PartialEq)]
pub enum DelayDistribution {
    Deterministic(f64),
    /// Sorted by value, distinct, probabilities summing to one.
    DiscreteAtoms(Vec<Atom>),
    Exponential { rate: f64 },
}

impl DelayDistribution {
    pub fn deterministic(value: f64) -> Result<Self> {
        check_value(value)?;
        Ok(Self::Deterministic(value))
    }

    /// Atoms from `(value, probability)` pairs. Values within
    /// [`ATOM_MERGE_TOL`] are merged; a single surviving atom becomes
    /// [`DelayDistribution::Deterministic`].
    pub fn atoms(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(DelayError::Empty);
        }
        let mut atoms = Vec::with_capacity(pairs.len());
        for &(value, prob) in pairs {
            check_value(value)?;
            if !prob.is_finite() || prob <= 0.0 {
                return Err(DelayError::InvalidProbability(prob));
            }
            atoms.push(Atom { value, prob });
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DelayError::NotNormalized(total));
        }
        let atoms = merge_atoms(atoms);
        if atoms.len() == 1 {
            return Ok(Self::Deterministic(atoms[0].value));
        }
        Ok(Self::DiscreteAtoms(atoms))
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !rate.is_finite() || rate <= 0.0 {
            return Err(DelayError::InvalidRate(rate));
        }
        Ok(Self::Exponential { rate })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            Self::Deterministic(v) => {
                if x >= *v {
                    1.0
                } else {
                    0.0
                }
            }
            Self::DiscreteAtoms(atoms) => atoms
                .iter()
                .filter(|a| a.value <= x)
                .map(|a| a.prob)
                .sum::<f64>()
                .min(1.0),
            Self::Exponential { rate } => -(-rate * x).exp_m1(),
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Deterministic(v) => *v,
            Self::DiscreteAtoms(atoms) => atoms.iter().map(|a| a.value * a.prob).sum(),
            Self::Exponential { rate } => 1.0 / rate,
        }
    }

    /// `sup` of the support; infinite for the exponential.
    pub fn support_max(&self) -> f64 {
        match self {
            Self::Deterministic(v) => *v,
            Self::DiscreteAtoms(atoms) => atoms.last().map_or(0.0, |a| a.value),
            Self::Exponential { .. } => f64::INFINITY,
        }
    }

    /// The atoms of a discrete law, `None` for the exponential.
    pub fn atom_list(&self) -> Option<Vec<Atom>> {
        match self {
            Self::Deterministic(v) => Some(vec![Atom {
                value: *v,
                prob: 1.0,
            }]),
            Self::DiscreteAtoms(atoms) => Some(atoms.clone()),
            Self::Exponential { .. } => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, Self::Exponential { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Deterministic(v) => *v,
            Self::DiscreteAtoms(atoms) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.prob;
                    if u < acc {
                        return a.value;
                    }
                }
                atoms[atoms.len() - 1].value
            }
            Self::Exponential { rate } => Exp::new(*rate)
                .expect("rate validated at construction")
                .sample(rng),
        }
    }

    /// Quantile-bin discretization into `bins` equally likely atoms placed at
    /// the conditional mean of each bin, which preserves the mean. Discrete
    /// laws are returned unchanged.
    pub fn discretize(&self, bins: usize) -> DelayDistribution {
        let rate = match self {
            Self::Exponential { rate } => *rate,
            _ => return self.clone(),
        };
        let bins = bins.max(1);
        let prob = 1.0 / bins as f64;
        let mut pairs = Vec::with_capacity(bins);
        for k in 0..bins {
            // Bin edges are the k/n and (k+1)/n quantiles.
            let lo = -(1.0 - k as f64 * prob).ln() / rate;
            let value = if k + 1 == bins {
                lo + 1.0 / rate
            } else {
                let hi = -(1.0 - (k + 1) as f64 * prob).ln() / rate;
                let (ea, eb) = ((-rate * lo).exp(), (-rate * hi).exp());
                (lo * ea - hi * eb) / (ea - eb) + 1.0 / rate
            };
            pairs.push((value, prob));
        }
        let atoms = merge_atoms(
            pairs
                .into_iter()
                .map(|(value, prob)| Atom { value, prob })
                .collect(),
        );
        Self::DiscreteAtoms(atoms)
    }

    fn label(&self) -> String {
        match self {
            Self::Deterministic(v) => format!("deterministic({v})"),
            Self::DiscreteAtoms(a) => format!("atoms[{}]", a.len()),
            Self::Exponential { rate } => format!("exponential({rate})"),
        }
    }
}

fn check_value(v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(DelayError::InvalidValue(v));
    }
    Ok(())
}

fn merge_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if (a.value - last.value).abs() < ATOM_MERGE_TOL => last.prob += a.prob,
            _ => out.push(a),
        }
    }
    out
}

/// Shape of one mixture component of the combined delay, before shifting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// Point mass at 0.
    Point,
    Exponential(f64),
    /// Sum of two exponentials with the same rate.
    Erlang2(f64),
    /// Sum of two exponentials with distinct rates.
    HypoExponential(f64, f64),
}

/// Relative rate gap below which a hypoexponential is represented as an
/// Erlang-2 with the same mean; the two-rate formulas cancel badly there.
const RATE_COINCIDENCE: f64 = 1e-6;

impl Kernel {
    pub fn cdf(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        match *self {
            Kernel::Point => 1.0,
            _ => 1.0 - self.survival(u),
        }
    }

    pub fn survival(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 1.0;
        }
        match *self {
            Kernel::Point => 0.0,
            _ => self.survival_shape().unwrap().eval(u).clamp(0.0, 1.0),
        }
    }

    /// Density for continuous kernels.
    pub fn density(&self, u: f64) -> Option<f64> {
        if matches!(self, Kernel::Point) {
            return None;
        }
        if u < 0.0 {
            return Some(0.0);
        }
        Some(self.density_shape().unwrap().eval(u).max(0.0))
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Kernel::Point => 0.0,
            Kernel::Exponential(l) => 1.0 / l,
            Kernel::Erlang2(l) => 2.0 / l,
            Kernel::HypoExponential(a, b) => 1.0 / a + 1.0 / b,
        }
    }

    /// `∫_a^∞ S(u) du` for `a ≥ 0`.
    pub fn survival_tail_integral(&self, a: f64) -> f64 {
        let a = a.max(0.0);
        match *self {
            Kernel::Point => 0.0,
            Kernel::Exponential(l) => (-l * a).exp() / l,
            Kernel::Erlang2(l) => (-l * a).exp() * (2.0 + l * a) / l,
            Kernel::HypoExponential(l1, l2) => {
                (l2 * (-l1 * a).exp() / l1 - l1 * (-l2 * a).exp() / l2) / (l2 - l1)
            }
        }
    }

    /// `S(u)` as an exponential polynomial (continuous kernels only).
    pub fn survival_shape(&self) -> Option<ExpPoly> {
        let term = |coef, linear, rate| ExpPolyTerm { coef, linear, rate };
        let terms = match *self {
            Kernel::Point => return None,
            Kernel::Exponential(l) => vec![term(1.0, false, l)],
            Kernel::Erlang2(l) => vec![term(1.0, false, l), term(l, true, l)],
            Kernel::HypoExponential(l1, l2) => vec![
                term(l2 / (l2 - l1), false, l1),
                term(-l1 / (l2 - l1), false, l2),
            ],
        };
        Some(ExpPoly { terms })
    }

    /// `f(u)` as an exponential polynomial (continuous kernels only).
    pub fn density_shape(&self) -> Option<ExpPoly> {
        let term = |coef, linear, rate| ExpPolyTerm { coef, linear, rate };
        let terms = match *self {
            Kernel::Point => return None,
            Kernel::Exponential(l) => vec![term(l, false, l)],
            Kernel::Erlang2(l) => vec![term(l * l, true, l)],
            Kernel::HypoExponential(l1, l2) => {
                let c = l1 * l2 / (l2 - l1);
                vec![term(c, false, l1), term(-c, false, l2)]
            }
        };
        Some(ExpPoly { terms })
    }

    fn rank(&self) -> (u8, f64, f64) {
        match *self {
            Kernel::Point => (0, 0.0, 0.0),
            Kernel::Exponential(l) => (1, l, 0.0),
            Kernel::Erlang2(l) => (2, l, 0.0),
            Kernel::HypoExponential(a, b) => (3, a, b),
        }
    }

    fn add_exponential(&self, rate: f64) -> Option<Kernel> {
        match *self {
            Kernel::Point => Some(Kernel::Exponential(rate)),
            Kernel::Exponential(l) => {
                let (a, b) = if l <= rate { (l, rate) } else { (rate, l) };
                if (b - a) <= RATE_COINCIDENCE * b {
                    Some(Kernel::Erlang2(2.0 / (1.0 / a + 1.0 / b)))
                } else {
                    Some(Kernel::HypoExponential(a, b))
                }
            }
            _ => None,
        }
    }
}

/// One shifted, weighted component of the combined delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureTerm {
    pub weight: f64,
    pub shift: f64,
    pub kernel: Kernel,
}

/// Law of `Z = Y + D` as a finite mixture of shifted kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedDelay {
    terms: Vec<MixtureTerm>,
}

impl From<&DelayDistribution> for CombinedDelay {
    fn from(d: &DelayDistribution) -> Self {
        let terms = match d {
            DelayDistribution::Exponential { rate } => vec![MixtureTerm {
                weight: 1.0,
                shift: 0.0,
                kernel: Kernel::Exponential(*rate),
            }],
            _ => d
                .atom_list()
                .unwrap()
                .into_iter()
                .map(|a| MixtureTerm {
                    weight: a.prob,
                    shift: a.value,
                    kernel: Kernel::Point,
                })
                .collect(),
        };
        CombinedDelay { terms }
    }
}

/// Distribution of `Y + D` for independent `Y` and `D`.
pub fn convolve(y: &DelayDistribution, d: &DelayDistribution) -> Result<CombinedDelay> {
    CombinedDelay::from(y).convolve_with(d)
}

impl CombinedDelay {
    pub fn terms(&self) -> &[MixtureTerm] {
        &self.terms
    }

    /// Adds an independent delay to this one.
    pub fn convolve_with(&self, d: &DelayDistribution) -> Result<CombinedDelay> {
        let mut out = Vec::new();
        match d {
            DelayDistribution::Exponential { rate } => {
                for t in &self.terms {
                    let kernel =
                        t.kernel
                            .add_exponential(*rate)
                            .ok_or_else(|| DelayError::UnsupportedPair {
                                left: format!("{:?}", t.kernel),
                                right: d.label(),
                            })?;
                    out.push(MixtureTerm { kernel, ..*t });
                }
            }
            _ => {
                for atom in d.atom_list().unwrap() {
                    for t in &self.terms {
                        out.push(MixtureTerm {
                            weight: t.weight * atom.prob,
                            shift: t.shift + atom.value,
                            kernel: t.kernel,
                        });
                    }
                }
            }
        }
        Ok(CombinedDelay {
            terms: merge_terms(out),
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.terms
            .iter()
            .map(|t| t.weight * t.kernel.cdf(x - t.shift))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        self.terms
            .iter()
            .map(|t| t.weight * t.kernel.survival(x - t.shift))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Density, when the law has no atoms.
    pub fn density(&self, x: f64) -> Option<f64> {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.weight * t.kernel.density(x - t.shift)?;
        }
        Some(acc)
    }

    pub fn mean(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight * (t.shift + t.kernel.mean()))
            .sum()
    }

    pub fn is_absolutely_continuous(&self) -> bool {
        self.terms.iter().all(|t| t.kernel != Kernel::Point)
    }

    pub fn is_discrete(&self) -> bool {
        self.terms.iter().all(|t| t.kernel == Kernel::Point)
    }

    /// Point masses `(value, probability)` of the law.
    pub fn atoms(&self) -> Vec<Atom> {
        self.terms
            .iter()
            .filter(|t| t.kernel == Kernel::Point)
            .map(|t| Atom {
                value: t.shift,
                prob: t.weight,
            })
            .collect()
    }

    /// Largest point of the support; infinite with any continuous part.
    pub fn support_max(&self) -> f64 {
        if self.is_discrete() {
            self.terms.iter().map(|t| t.shift).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        }
    }

    /// `1 − F^Z(t − w)`, the survival term inside fresh-time integrals.
    pub fn tail_cdf_shifted(&self, t: f64, w: f64) -> f64 {
        if t <= w {
            return 1.0;
        }
        self.survival(t - w)
    }
}

fn merge_terms(mut terms: Vec<MixtureTerm>) -> Vec<MixtureTerm> {
    terms.sort_by(|a, b| {
        let (ra, rb) = (a.kernel.rank(), b.kernel.rank());
        ra.0.cmp(&rb.0)
            .then(ra.1.total_cmp(&rb.1))
            .then(ra.2.total_cmp(&rb.2))
            .then(a.shift.total_cmp(&b.shift))
    });
    let mut out: Vec<MixtureTerm> = Vec::with_capacity(terms.len());
    for t in terms {
        match out.last_mut() {
            Some(last)
                if last.kernel == t.kernel && (t.shift - last.shift).abs() < ATOM_MERGE_TOL =>
            {
                last.weight += t.weight
            }
            _ => out.push(t),
        }
    }
    out
}

/// `1 − F^Z(t − w)`.
pub fn tail_cdf_shifted(z: &CombinedDelay, t: f64, w: f64) -> f64 {
    z.tail_cdf_shifted(t, w)
}
