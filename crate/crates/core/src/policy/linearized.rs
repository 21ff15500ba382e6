//! The Dinkelbach-linearized per-age objective
//! `L_d(w; θ) = E_Z[∫_d^{d+w+Z} p(t) dt] − θ (w + E[Z])`
//! and its maximizers.
//!
//! `p` is a weighted mix of the per-state match probabilities: `π` for the
//! state-independent family and a unit vector for the greedy one. Since
//! `∂L/∂w = l(d + w) − θ` with `l(γ) = E[p(γ + Z)]`, a decreasing `p` with
//! an absolutely continuous `Z` gives the threshold rule
//! `W(d) = min{W_max, (Γ − d)^+}`, `Γ = sup{γ : l(γ) ≥ θ}`.

use crate::ctmc::ExpPoly;
use crate::estimator::is_monotone_decreasing;
use crate::freshness::FreshnessModel;
use crate::numeric::{bisect, grid_polish_max};

use super::{PolicyConfig, PolicyError, Result};

/// Grid size of the monotonicity check on `[0, T*]`.
const MONOTONE_GRID: usize = 2001;

pub struct LinearizedObjective<'a> {
    model: &'a FreshnessModel,
    weights: Vec<f64>,
    monotone: bool,
    /// `(weight, shift, density)` per component of `Z`, when every
    /// component has a density.
    densities: Option<Vec<(f64, f64, ExpPoly)>>,
}

impl<'a> LinearizedObjective<'a> {
    /// `p(t) = Σ_i π_i m_i(t)`.
    pub fn aggregate(model: &'a FreshnessModel) -> Self {
        Self::with_weights(model, model.pi().to_vec())
    }

    /// `p(t) = m_i(t)`.
    pub fn single(model: &'a FreshnessModel, i: usize) -> Self {
        let mut w = vec![0.0; model.states()];
        w[i] = 1.0;
        Self::with_weights(model, w)
    }

    pub fn with_weights(model: &'a FreshnessModel, weights: Vec<f64>) -> Self {
        let horizon = model.kernel().transition().horizon();
        let monotone = {
            let profile = model.kernel().profile(weights.clone());
            is_monotone_decreasing(|t| profile.value(t), horizon, MONOTONE_GRID)
        };
        let densities = model
            .combined()
            .terms()
            .iter()
            .map(|t| t.kernel.density_shape().map(|k| (t.weight, t.shift, k)))
            .collect();
        Self {
            model,
            weights,
            monotone,
            densities,
        }
    }

    pub fn model(&self) -> &FreshnessModel {
        self.model
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Whether `p` is non-increasing on `[0, T*]` (and constant beyond).
    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Whether the closed threshold rule applies.
    pub fn threshold_applies(&self) -> bool {
        self.monotone && self.densities.is_some()
    }

    pub fn p(&self, t: f64) -> f64 {
        self.fold(|i| self.model.kernel().value(i, t))
    }

    /// `p(∞)`.
    pub fn p_limit(&self) -> f64 {
        self.fold(|i| self.model.kernel().limit(i))
    }

    /// `L_d(w; θ)`.
    pub fn value(&self, d: f64, w: f64, theta: f64) -> f64 {
        self.model.profile_fresh_time(&self.weights, d, w) - theta * (w + self.model.mean_z())
    }

    /// `l(γ) = ∫_0^∞ p(γ + t) f^Z(t) dt`.
    pub fn l(&self, gamma: f64) -> Result<f64> {
        let dens = self.densities.as_ref().ok_or(PolicyError::DensityUnavailable)?;
        if gamma.is_infinite() {
            return Ok(self.p_limit());
        }
        Ok(dens
            .iter()
            .map(|(w, s, k)| w * self.fold(|i| self.model.kernel().weighted(i, gamma + s, k)))
            .sum())
    }

    /// `Γ = sup{γ ≥ 0 : l(γ) ≥ θ}`, with `0` when `l(0) ≤ θ` and `∞` when
    /// `l(d_max + w_max) ≥ θ`.
    pub fn threshold_gamma(&self, theta: f64, w_max: f64, d_max: f64, tol: f64) -> Result<f64> {
        if self.l(0.0)? <= theta {
            return Ok(0.0);
        }
        let top = d_max + w_max;
        if self.l(top)? >= theta {
            return Ok(f64::INFINITY);
        }
        let mut hi = if top.is_finite() { top } else { 1.0 };
        while self.l(hi)? >= theta {
            hi *= 2.0;
        }
        // `l` is continuous and non-increasing, so the bracket holds.
        let (lo, _) = bisect(0.0, hi, tol, |g| self.l(g).is_ok_and(|v| v >= theta));
        Ok(lo)
    }

    /// `argmax_{w ∈ [0, W_max]} L_d(w; θ)` with ties to the smallest `w`.
    ///
    /// For a decreasing `p`: `W_max` when `p(∞) ≥ θ`, zero when `p(d) ≤ θ`,
    /// the threshold rule when `Z` has a density, and a grid search with a
    /// golden-section polish otherwise.
    pub fn optimal_wait(&self, d: f64, theta: f64, cfg: &PolicyConfig) -> Result<f64> {
        let w_max = cfg.w_max;
        if self.monotone {
            if self.p_limit() >= theta {
                return Ok(w_max);
            }
            if self.p(d) <= theta {
                return Ok(0.0);
            }
            if self.densities.is_some() {
                let d_max = self.model.backward().support_max();
                let gamma = self.threshold_gamma(theta, w_max, d_max, cfg.gamma_tol)?;
                return Ok(threshold_wait(gamma, d, w_max));
            }
        }
        Ok(self.grid_argmax(d, theta, cfg).0)
    }

    /// Grid-and-polish maximizer of `L_d(·; θ)` and its value.
    pub fn grid_argmax(&self, d: f64, theta: f64, cfg: &PolicyConfig) -> (f64, f64) {
        grid_polish_max(
            |w| self.value(d, w, theta),
            cfg.w_max,
            cfg.grid_points,
            cfg.polish_tol,
        )
    }

    fn fold<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| w * f(i))
            .sum()
    }
}

/// `min{w_max, (Γ − d)^+}`.
pub fn threshold_wait(gamma: f64, d: f64, w_max: f64) -> f64 {
    if gamma.is_infinite() {
        w_max
    } else {
        (gamma - d).max(0.0).min(w_max)
    }
}
