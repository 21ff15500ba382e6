//! Optimizer properties: SMDP optimality, Dinkelbach behaviour, policy
//! bounds and dominance over sampled policies.

use freshquery::ctmc::GeneratorMatrix;
use freshquery::delay::DelayDistribution;
use freshquery::estimator::EstimatorKind;
use freshquery::freshness::FreshnessModel;
use freshquery::policy::{synthesize, PolicyConfig, PolicyFamily};
use freshquery::smdp::{Action, SmdpModel, SolverConfig};
use freshquery::waiting::{DelayRule, PolicyForm, WaitingPolicy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W_MAX: f64 = 1.5;

fn action() -> impl Strategy<Value = (f64, f64, Vec<f64>)> {
    (0.0f64..1.0, 0.2f64..2.0, prop::collection::vec(0.05f64..1.0, 4))
}

fn smdp() -> impl Strategy<Value = SmdpModel> {
    (2usize..=4)
        .prop_flat_map(|n| prop::collection::vec(prop::collection::vec(action(), 1..=4), n))
        .prop_map(|states| {
            let n = states.len();
            let actions = states
                .into_iter()
                .map(|acts| {
                    acts.into_iter()
                        .enumerate()
                        .map(|(k, (frac, sojourn, t))| {
                            let t = &t[..n];
                            let total: f64 = t.iter().sum();
                            Action {
                                wait: k as f64 * 0.1,
                                transition: t.iter().map(|x| x / total).collect(),
                                reward: frac * sojourn,
                                sojourn,
                            }
                        })
                        .collect()
                })
                .collect();
            SmdpModel::new(actions).unwrap()
        })
}

fn all_policies(m: &SmdpModel) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for s in 0..m.states() {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..m.actions(s).len()).map(move |a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policy_iteration_is_optimal(m in smdp()) {
        let sol = m.policy_iteration().unwrap();
        for p in all_policies(&m) {
            let (gain, _) = m.evaluate(&p, 0).unwrap();
            prop_assert!(gain <= sol.gain + 1e-9, "{p:?}: {gain} > {}", sol.gain);
        }
        for s in 0..m.states() {
            for a in 0..m.actions(s).len() {
                prop_assert!(m.test_value(s, a, sol.gain, &sol.bias) <= sol.bias[s] + 1e-9);
            }
        }
        prop_assert!((0.0..=1.0).contains(&sol.gain));
        prop_assert!(m.is_irreducible(&sol.policy));
    }

    #[test]
    fn gain_ignores_anchor(m in smdp()) {
        let base = m.policy_iteration().unwrap().gain;
        for anchor in 1..m.states() {
            let cfg = SolverConfig { anchor, ..SolverConfig::default() };
            let sol = m.policy_iteration_with(&cfg).unwrap();
            prop_assert!((sol.gain - base).abs() < 1e-9);
            prop_assert!(sol.bias[anchor].abs() < 1e-12);
        }
    }
}

fn exp1_model(d1: f64, kind: EstimatorKind) -> FreshnessModel {
    FreshnessModel::new(
        &GeneratorMatrix::binary(1.0, 0.1).unwrap(),
        kind,
        &DelayDistribution::deterministic(0.0).unwrap(),
        &DelayDistribution::atoms(&[(0.0, 0.5), (d1, 0.5)]).unwrap(),
    )
    .unwrap()
}

/// Three states with a MAP estimator: the match probability of state 0
/// drops and then recovers, so the threshold shortcut does not apply.
fn map_model() -> FreshnessModel {
    let rows = vec![
        vec![-2.0, 2.0, 0.0],
        vec![0.0, -0.5, 0.5],
        vec![1.5, 0.0, -1.5],
    ];
    FreshnessModel::new(
        &GeneratorMatrix::new(&rows).unwrap(),
        EstimatorKind::Map,
        &DelayDistribution::atoms(&[(0.1, 0.5), (0.4, 0.5)]).unwrap(),
        &DelayDistribution::atoms(&[(0.0, 0.6), (1.2, 0.4)]).unwrap(),
    )
    .unwrap()
}

fn grid_wait(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0..=150) as f64 * 0.01
}

#[test]
fn optimal_policy_beats_sampled_policies() {
    let cfg = PolicyConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for model in [exp1_model(2.0, EstimatorKind::Martingale), map_model()] {
        let n = model.states();
        let atoms: Vec<f64> = model.backward_atoms().unwrap().iter().map(|a| a.value).collect();
        let opt = synthesize(&model, PolicyFamily::OptWait, &cfg).unwrap().mbf();
        let di = synthesize(&model, PolicyFamily::DelayIndependent, &cfg).unwrap().mbf();
        for _ in 0..100 {
            let rules = (0..n)
                .map(|_| DelayRule::Table(atoms.iter().map(|&a| (a, grid_wait(&mut rng))).collect()))
                .collect();
            let full = WaitingPolicy::new(PolicyForm::Full(rules), W_MAX);
            assert!(model.evaluate(&full).unwrap().mbf <= opt + 1e-9);
            let waits = (0..n).map(|_| grid_wait(&mut rng)).collect();
            let flat = WaitingPolicy::new(PolicyForm::DelayIndependent(waits), W_MAX);
            assert!(model.evaluate(&flat).unwrap().mbf <= di + 1e-9);
        }
    }
}

#[test]
fn waits_stay_in_bounds_and_chain_holds() {
    let cfg = PolicyConfig::default();
    let models = [
        exp1_model(0.3, EstimatorKind::Martingale),
        exp1_model(2.5, EstimatorKind::Map),
        map_model(),
    ];
    for model in &models {
        let out: Vec<_> = PolicyFamily::ALL
            .iter()
            .map(|&f| synthesize(model, f, &cfg).unwrap())
            .collect();
        let atoms: Vec<f64> = model.backward_atoms().unwrap().iter().map(|a| a.value).collect();
        for o in &out {
            for i in 0..model.states() {
                for &d in atoms.iter().chain(&[0.05, 0.9, 3.0]) {
                    let w = o.policy.wait(i, d);
                    assert!((0.0..=W_MAX).contains(&w), "{}: W({i},{d}) = {w}", o.family);
                }
            }
        }
        let m = |f: PolicyFamily| out.iter().find(|o| o.family == f).unwrap().mbf();
        use PolicyFamily::*;
        for f in PolicyFamily::ALL {
            assert!(m(OptWait) >= m(f) - 1e-6, "opt_wait < {f}");
        }
        assert!(m(StateIndependent) >= m(ConstantWait) - 1e-6);
        assert!(m(ConstantWait) >= m(ZeroWait) - 1e-6);
    }
}

#[test]
fn constant_wait_matches_fine_scan() {
    let model = FreshnessModel::new(
        &GeneratorMatrix::binary(1.0, 1.0).unwrap(),
        EstimatorKind::Martingale,
        &DelayDistribution::deterministic(1.0).unwrap(),
        &DelayDistribution::deterministic(0.0).unwrap(),
    )
    .unwrap();
    let cw = synthesize(&model, PolicyFamily::ConstantWait, &PolicyConfig::default()).unwrap();
    let (mut best_w, mut best) = (0.0, f64::NEG_INFINITY);
    for k in 0..=15_000 {
        let w = k as f64 * 1e-4;
        let v = model.evaluate(&WaitingPolicy::constant(w, W_MAX)).unwrap().mbf;
        if v > best {
            (best_w, best) = (w, v);
        }
    }
    let PolicyForm::ConstantWait(w) = cw.policy.form else {
        panic!("unexpected form {:?}", cw.policy.form)
    };
    assert!((w - best_w).abs() <= 0.01, "cw wait {w}, scan {best_w}");
    assert!(cw.mbf() >= best - 1e-9, "cw {} < scan {best}", cw.mbf());
}

#[test]
fn dinkelbach_trace_decreases() {
    for model in [exp1_model(1.0, EstimatorKind::Martingale), map_model()] {
        let out = synthesize(&model, PolicyFamily::StateIndependent, &PolicyConfig::default()).unwrap();
        let st = &out.dinkelbach[0];
        let mut trace = st.trace.clone();
        trace.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in trace.windows(2) {
            assert!(w[1].1 < w[0].1, "J* not decreasing: {w:?}");
        }
        assert!(st.bracket.1 - st.bracket.0 <= 1e-8);
        assert!(st.j_star.abs() < 1e-7);
        assert!((st.theta - out.mbf()).abs() < 1e-6);
    }
}

#[test]
fn greedy_reports_its_bound() {
    for model in [exp1_model(1.0, EstimatorKind::Martingale), map_model()] {
        let out = synthesize(&model, PolicyFamily::Greedy, &PolicyConfig::default()).unwrap();
        let lb = out.lower_bound.unwrap();
        assert!(lb <= out.mbf() + 1e-9);
        assert_eq!(out.dinkelbach.len(), model.states());
    }
}

#[test]
fn map_model_is_not_monotone() {
    use freshquery::policy::LinearizedObjective;
    let model = map_model();
    assert!(!LinearizedObjective::single(&model, 0).is_monotone());
}
