use crate::freshness::FreshnessModel;
use crate::numeric::golden_section_max;
use crate::smdp::{Action, SmdpModel, SmdpSolution};
use crate::waiting::{DelayRule, PolicyForm, WaitingPolicy};

use super::{tabulation_model, ErrorSlot, PolicyConfig, PolicyError, PolicyFamily, PolicyOutcome, Result};

/// SMDP on the reply state with one wait per state.
pub fn delay_independent_policy(
    model: &FreshnessModel,
    cfg: &PolicyConfig,
) -> Result<PolicyOutcome> {
    let n = model.states();
    let mean_z = model.mean_z();
    let eval = |s: usize, w: f64| -> Result<Action> {
        let t = model.state_terms(s, |_| w, Vec::new())?;
        Ok(Action {
            wait: w,
            transition: t.next,
            reward: t.fresh,
            sojourn: w + mean_z,
        })
    };
    let (smdp, sol) = solve_refined(n, eval, cfg)?;
    let waits = (0..n).map(|s| smdp.action(s, sol.policy[s]).wait).collect();
    let policy = WaitingPolicy::new(PolicyForm::DelayIndependent(waits), cfg.w_max);
    let report = model.evaluate(&policy)?;
    Ok(PolicyOutcome {
        gain: Some(sol.gain),
        ..PolicyOutcome::plain(PolicyFamily::DelayIndependent, policy, report)
    })
}

/// SMDP on `(reply state, reply age)` with the age restricted to the atoms
/// of the (possibly discretized) reply delay.
pub fn optimal_policy(model: &FreshnessModel, cfg: &PolicyConfig) -> Result<PolicyOutcome> {
    let (work, warnings) = tabulation_model(model, cfg)?;
    let atoms = work.backward_atoms().expect("tabulation yields atoms");
    let n = work.states();
    let m = atoms.len();
    let mean_z = work.mean_z();
    let eval = |s: usize, w: f64| -> Result<Action> {
        let (i, k) = (s / m, s % m);
        let d = atoms[k].value;
        let row = work.next_state_row(i, d, w);
        let transition = row
            .iter()
            .flat_map(|pj| atoms.iter().map(move |a| pj * a.prob))
            .collect();
        Ok(Action {
            wait: w,
            transition,
            reward: work.cycle_fresh_time(i, d, w),
            sojourn: w + mean_z,
        })
    };
    let (smdp, sol) = solve_refined(n * m, eval, cfg)?;
    let rules = (0..n)
        .map(|i| {
            DelayRule::Table(
                atoms
                    .iter()
                    .enumerate()
                    .map(|(k, a)| (a.value, smdp.action(i * m + k, sol.policy[i * m + k]).wait))
                    .collect(),
            )
        })
        .collect();
    let policy = WaitingPolicy::new(PolicyForm::Full(rules), cfg.w_max);
    let report = model.evaluate(&policy)?;
    Ok(PolicyOutcome {
        gain: Some(sol.gain),
        warnings,
        ..PolicyOutcome::plain(PolicyFamily::OptWait, policy, report)
    })
}

/// Policy iteration on the wait grid, then rounds that add, per state, the
/// golden-section maximizer of the improvement test around the chosen wait
/// until no state gains from a new action.
fn solve_refined<F>(states: usize, eval: F, cfg: &PolicyConfig) -> Result<(SmdpModel, SmdpSolution)>
where
    F: Fn(usize, f64) -> Result<Action>,
{
    let grid = cfg.wait_grid();
    let step = cfg.w_max / (grid.len() - 1) as f64;
    let mut actions = (0..states)
        .map(|s| grid.iter().map(|&w| eval(s, w)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut smdp = SmdpModel::new(actions.clone())?;
    let mut sol = smdp.policy_iteration()?;
    for round in 0..cfg.polish_rounds {
        let mut added = false;
        for s in 0..states {
            let current = smdp.action(s, sol.policy[s]);
            let base = smdp.test_value(s, sol.policy[s], sol.gain, &sol.bias);
            let errors = ErrorSlot::<PolicyError>::new();
            let test = |w: f64| {
                errors.score(|| {
                    let a = eval(s, w)?;
                    Ok(a.reward - sol.gain * a.sojourn
                        + a.transition.iter().zip(&sol.bias).map(|(p, h)| p * h).sum::<f64>())
                })
            };
            let lo = (current.wait - step).max(0.0);
            let hi = (current.wait + step).min(cfg.w_max);
            let (w, v) = golden_section_max(test, lo, hi, cfg.polish_tol);
            errors.finish()?;
            if v > base + 1e-13 && actions[s].iter().all(|a| a.wait != w) {
                actions[s].push(eval(s, w)?);
                added = true;
            }
        }
        if !added {
            break;
        }
        smdp = SmdpModel::new(actions.clone())?;
        let next = smdp.policy_iteration()?;
        log::debug!("action refinement round {}: gain {} -> {}", round + 1, sol.gain, next.gain);
        sol = next;
    }
    Ok((smdp, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::GeneratorMatrix;
    use crate::delay::DelayDistribution;
    use crate::estimator::EstimatorKind;
    use crate::policy::state_independent_policy;

    fn exp1(d1: f64) -> FreshnessModel {
        FreshnessModel::new(
            &GeneratorMatrix::binary(1.0, 0.1).unwrap(),
            EstimatorKind::Martingale,
            &DelayDistribution::Deterministic(0.0),
            &DelayDistribution::atoms(&[(0.0, 0.5), (d1, 0.5)]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn delay_ind_gain_matches_evaluation() {
        let cfg = PolicyConfig::default();
        for d1 in [0.5, 2.0, 3.0] {
            let out = delay_independent_policy(&exp1(d1), &cfg).unwrap();
            assert!((out.gain.unwrap() - out.mbf()).abs() < 1e-9, "d1 = {d1}");
        }
        let out = delay_independent_policy(&exp1(3.0), &cfg).unwrap();
        let (w1, w2) = (out.policy.wait(0, 0.0), out.policy.wait(1, 0.0));
        assert_eq!(w2, cfg.w_max);
        assert!(w1 < w2);
    }

    #[test]
    fn symmetric_delay_ind() {
        let model = FreshnessModel::new(
            &GeneratorMatrix::binary(1.0, 1.0).unwrap(),
            EstimatorKind::Martingale,
            &DelayDistribution::Deterministic(0.0),
            &DelayDistribution::atoms(&[(0.0, 0.5), (0.6, 0.5)]).unwrap(),
        )
        .unwrap();
        let out = delay_independent_policy(&model, &PolicyConfig::default()).unwrap();
        assert!((out.policy.wait(0, 0.0) - out.policy.wait(1, 0.0)).abs() < 1e-6);
    }

    #[test]
    fn opt_dominates_and_has_expected_shape() {
        let cfg = PolicyConfig::default();
        let model = exp1(2.0);
        let opt = optimal_policy(&model, &cfg).unwrap();
        assert!((opt.gain.unwrap() - opt.mbf()).abs() < 1e-9);
        let si = state_independent_policy(&model, &cfg).unwrap();
        let di = delay_independent_policy(&model, &cfg).unwrap();
        assert!(opt.mbf() >= si.mbf() - 1e-6);
        assert!(opt.mbf() >= di.mbf() - 1e-6);
        let w = |i, d| opt.policy.wait(i, d);
        assert!(w(0, 0.0) > 0.0);
        assert_eq!(w(1, 2.0), cfg.w_max);
        assert_eq!(w(0, 2.0), 0.0);
        assert_eq!(w(1, 0.0), 0.0);
    }
}
