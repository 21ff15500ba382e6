use crate::freshness::FreshnessModel;
use crate::waiting::{DelayRule, PolicyForm, WaitingPolicy};

use super::linearized::LinearizedObjective;
use super::{
    tabulation_model, DinkelbachState, PolicyConfig, PolicyFamily, PolicyOutcome, PolicyWarning,
    Result,
};

/// `J(θ) = Σ_i π_i E[g^W(i)] − θ (E[Z] + E[W(D)])` for a state-independent
/// policy, using `φ = π`.
pub fn linearized_value_state_ind(
    model: &FreshnessModel,
    theta: f64,
    policy: &WaitingPolicy,
) -> Result<f64> {
    let r = model.evaluate_with_pi(policy)?;
    Ok(r.numerator - theta * r.denominator)
}

/// Dinkelbach bisection on `θ ∈ [0, 1]` with the age-wise maximizer of
/// `L_d(·; θ)` for the aggregate match probability `p = Σ π_i m_i`.
pub fn state_independent_policy(
    model: &FreshnessModel,
    cfg: &PolicyConfig,
) -> Result<PolicyOutcome> {
    let threshold = LinearizedObjective::aggregate(model).threshold_applies();
    let (work, warnings) = working_model(model, threshold, cfg)?;
    let lin = LinearizedObjective::aggregate(&work);
    let (rule, state) = bisect_theta(|theta| solve_inner(&lin, threshold, theta, cfg), cfg.theta_tol)?;
    let policy = WaitingPolicy::new(PolicyForm::StateIndependent(rule), cfg.w_max);
    let report = model.evaluate(&policy)?;
    log::debug!(
        "state_ind: theta {} j_star {:e} mbf {}",
        state.theta,
        state.j_star,
        report.mbf
    );
    Ok(PolicyOutcome {
        family: PolicyFamily::StateIndependent,
        policy,
        report,
        lower_bound: None,
        dinkelbach: vec![state],
        gain: None,
        warnings,
    })
}

/// Independent Dinkelbach loops on each per-state ratio
/// `E[g^W(i)] / (E[Z] + E[W(i, D)])`, i.e. the maximizer of
/// `min_i` of those ratios, a lower bound on the MBF.
pub fn greedy_policy(model: &FreshnessModel, cfg: &PolicyConfig) -> Result<PolicyOutcome> {
    let n = model.states();
    let threshold: Vec<bool> = (0..n)
        .map(|i| LinearizedObjective::single(model, i).threshold_applies())
        .collect();
    let (work, warnings) = working_model(model, threshold.iter().all(|t| *t), cfg)?;
    let mut rules = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for (i, thr) in threshold.iter().enumerate() {
        let lin = LinearizedObjective::single(&work, i);
        let thr = *thr && lin.threshold_applies();
        let (rule, state) = bisect_theta(|theta| solve_inner(&lin, thr, theta, cfg), cfg.theta_tol)?;
        rules.push(rule);
        states.push(state);
    }
    let policy = WaitingPolicy::new(PolicyForm::Full(rules), cfg.w_max);
    let report = model.evaluate(&policy)?;
    let lower_bound = report
        .g
        .iter()
        .zip(&report.mean_wait)
        .map(|(g, w)| g / (report.mean_z + w))
        .fold(f64::INFINITY, f64::min);
    Ok(PolicyOutcome {
        family: PolicyFamily::Greedy,
        policy,
        report,
        lower_bound: Some(lower_bound),
        dinkelbach: states,
        gain: None,
        warnings,
    })
}

fn working_model(
    model: &FreshnessModel,
    threshold: bool,
    cfg: &PolicyConfig,
) -> Result<(FreshnessModel, Vec<PolicyWarning>)> {
    if threshold {
        Ok((model.clone(), Vec::new()))
    } else {
        tabulation_model(model, cfg)
    }
}

/// The maximizing rule for `θ` and `J*(θ)`.
fn solve_inner(
    lin: &LinearizedObjective<'_>,
    threshold: bool,
    theta: f64,
    cfg: &PolicyConfig,
) -> Result<(DelayRule, f64)> {
    let model = lin.model();
    if threshold {
        let d_max = model.backward().support_max();
        let gamma = lin.threshold_gamma(theta, cfg.w_max, d_max, cfg.gamma_tol)?;
        let rule = DelayRule::Threshold(gamma);
        let j = rule_value(lin, &rule, theta, cfg.w_max)?;
        return Ok((rule, j));
    }
    let atoms = model
        .backward_atoms()
        .expect("tabulated policies use an atomic reply delay");
    let mut rows = Vec::with_capacity(atoms.len());
    let mut j = 0.0;
    for a in atoms {
        let w = lin.optimal_wait(a.value, theta, cfg)?;
        j += a.prob * lin.value(a.value, w, theta);
        rows.push((a.value, w));
    }
    Ok((DelayRule::Table(rows), j))
}

/// `Σ_i ω_i (E[g(i)] − θ (E[Z] + E[W(D)]))` for an age rule.
fn rule_value(lin: &LinearizedObjective<'_>, rule: &DelayRule, theta: f64, w_max: f64) -> Result<f64> {
    let model = lin.model();
    let mut j = 0.0;
    for (i, omega) in lin.weights().iter().enumerate() {
        if *omega == 0.0 {
            continue;
        }
        let t = model.state_terms(i, |d| rule.wait(d, w_max), rule.breakpoints(w_max))?;
        j += omega * (t.fresh - theta * (model.mean_z() + t.wait));
    }
    Ok(j)
}

/// Bisection on the sign of `J*(θ)`; the returned rule is the maximizer at
/// the lower end of the final bracket, where `J* ≥ 0`.
fn bisect_theta<F>(solve: F, tol: f64) -> Result<(DelayRule, DinkelbachState)>
where
    F: Fn(f64) -> Result<(DelayRule, f64)>,
{
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut trace = Vec::new();
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let (_, j) = solve(mid)?;
        trace.push((mid, j));
        if j >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rule, j_star) = solve(lo)?;
    Ok((
        rule,
        DinkelbachState {
            theta: lo,
            bracket: (lo, hi),
            j_star,
            trace,
        },
    ))
}
