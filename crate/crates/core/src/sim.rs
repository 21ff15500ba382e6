//! Monte Carlo replay of the query/reply cycle on an exactly simulated
//! CTMC path.
//!
//! Cycle `k` starts when a reply arrives at `T_k` carrying the state
//! sampled at `s_k = T_k − D_k`. The monitor estimates from that sample
//! until the next reply, waits `W(X_k, D_k)`, and queries; the query
//! reaches the source after `Y` and the reply returns `D'` later. The
//! fresh time of the cycle is the overlap of the true path with the
//! estimate on `[T_k, T_{k+1})`, computed exactly from the jump times.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ctmc::GeneratorMatrix;
use crate::delay::DelayDistribution;
use crate::estimator::{MatchKernel, Segment};
use crate::numeric::fmt_sig;
use crate::waiting::WaitingPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    /// Cycles recorded after the burn-in.
    pub cycles: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub batches: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            cycles: 1_000_000,
            seed: 1,
            burn_in: 1000,
            batches: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub mbf_hat: f64,
    /// Batch-means standard error of `mbf_hat`.
    pub stderr: f64,
    /// Mean fresh time per cycle.
    pub numerator: f64,
    /// Mean cycle length `E[W + Z]`.
    pub mean_cycle: f64,
    /// Frequencies of the reply states.
    pub phi_hat: Vec<f64>,
    /// Mean fresh time of cycles opened by a reply from each state.
    pub g_hat: Vec<f64>,
    /// Counts of consecutive reply-state pairs.
    #[serde(skip)]
    pub transitions: DMatrix<u64>,
    pub seed: u64,
    pub cycles: usize,
}

impl SimResult {
    pub fn csv_header(states: usize) -> Vec<String> {
        let mut h = crate::freshness::FreshnessReport::csv_header(states);
        h.extend(["stderr", "seed", "cycles"].map(String::from));
        h
    }

    /// Same layout as the analytic report, plus `stderr`, `seed`, `cycles`.
    pub fn csv_record(&self) -> Vec<String> {
        let f = |x: f64| fmt_sig(x, 9);
        let mut r = vec![f(self.mbf_hat), f(self.numerator), f(self.mean_cycle)];
        r.extend(self.phi_hat.iter().map(|x| f(*x)));
        r.extend(self.g_hat.iter().map(|x| f(*x)));
        r.push(f(self.stderr));
        r.push(self.seed.to_string());
        r.push(self.cycles.to_string());
        r
    }

    /// Row-normalized transition counts.
    pub fn empirical_p_tilde(&self) -> DMatrix<f64> {
        let n = self.transitions.nrows();
        DMatrix::from_fn(n, n, |i, j| {
            let row: u64 = self.transitions.row(i).iter().sum();
            if row == 0 {
                0.0
            } else {
                self.transitions[(i, j)] as f64 / row as f64
            }
        })
    }
}

/// A CTMC trajectory generated lazily from exponential holding times.
pub struct JumpPath<'a> {
    rates: &'a DMatrix<f64>,
    state: usize,
    /// Time of the next jump out of `state`.
    next_jump: f64,
}

impl<'a> JumpPath<'a> {
    pub fn new<R: Rng + ?Sized>(rates: &'a DMatrix<f64>, state: usize, time: f64, rng: &mut R) -> Self {
        let mut p = Self {
            rates,
            state,
            next_jump: time,
        };
        p.next_jump = time + p.holding(rng);
        p
    }

    /// State at time `t`, which must not precede earlier queries.
    pub fn state_at<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> usize {
        while self.next_jump <= t {
            self.jump(rng);
        }
        self.state
    }

    /// Advances to `b` and returns the time in `[a, b]` the path agrees
    /// with the estimate; `estimate` holds `(start age, state)` segments
    /// and the age at time `t` is `t − origin`.
    pub fn fresh_time<R: Rng + ?Sized>(
        &mut self,
        a: f64,
        b: f64,
        origin: f64,
        estimate: &[Segment],
        rng: &mut R,
    ) -> f64 {
        let mut fresh = 0.0;
        let mut t = a;
        while t < b {
            let end = self.next_jump.min(b);
            fresh += overlap(estimate, self.state, t - origin, end - origin);
            t = end;
            if self.next_jump <= b {
                self.jump(rng);
            }
        }
        fresh
    }

    fn holding<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let q = -self.rates[(self.state, self.state)];
        let u: f64 = rng.random();
        -(1.0 - u).ln() / q
    }

    fn jump<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.rates.nrows();
        let q = -self.rates[(self.state, self.state)];
        let mut u = rng.random::<f64>() * q;
        let mut next = self.state;
        for j in 0..n {
            if j == self.state {
                continue;
            }
            next = j;
            u -= self.rates[(self.state, j)];
            if u < 0.0 {
                break;
            }
        }
        // Rounding can leave `u` marginally non-negative; `next` is then the
        // last reachable state, which is where that mass belongs.
        if self.rates[(self.state, next)] <= 0.0 {
            next = (0..n)
                .rev()
                .find(|&j| j != self.state && self.rates[(self.state, j)] > 0.0)
                .unwrap();
        }
        self.state = next;
        self.next_jump += self.holding(rng);
    }
}

/// Length of `[lo, hi]` on which the estimate equals `state`.
fn overlap(estimate: &[Segment], state: usize, lo: f64, hi: f64) -> f64 {
    let mut total = 0.0;
    for (k, seg) in estimate.iter().enumerate() {
        let end = estimate.get(k + 1).map_or(f64::INFINITY, |s| s.start);
        if seg.state != state || end <= lo || seg.start >= hi {
            continue;
        }
        total += hi.min(end) - lo.max(seg.start);
    }
    total
}

/// Fresh time on `[0, span]` of one path started in `start`, against an
/// estimate given as `(start age, state)` segments.
pub fn jump_path_fresh_time<R: Rng + ?Sized>(
    g: &GeneratorMatrix,
    start: usize,
    estimate: &[Segment],
    span: f64,
    rng: &mut R,
) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let rates = g.rates();
    let mut path = JumpPath::new(rates, start, 0.0, rng);
    path.fresh_time(0.0, span, 0.0, estimate, rng)
}

/// Replays `cfg.burn_in + cfg.cycles` cycles.
///
/// The first reply carries a state drawn from `π` with age zero.
pub fn simulate(
    kernel: &MatchKernel,
    y: &DelayDistribution,
    d: &DelayDistribution,
    w: &WaitingPolicy,
    cfg: &SimConfig,
) -> SimResult {
    let n = kernel.size();
    let rates = kernel.transition().generator().rates();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pi = kernel.stationary().probs();

    let mut u: f64 = rng.random();
    let mut state = n - 1;
    for (i, p) in pi.iter().enumerate() {
        if u < *p {
            state = i;
            break;
        }
        u -= p;
    }
    let mut path = JumpPath::new(rates, state, 0.0, &mut rng);
    let (mut now, mut age) = (0.0, 0.0);

    let batches = cfg.batches.clamp(1, cfg.cycles.max(1));
    let per_batch = cfg.cycles.div_ceil(batches);
    let mut batch_ratios = Vec::with_capacity(batches);
    let (mut batch_fresh, mut batch_time) = (0.0, 0.0);
    let (mut fresh_sum, mut time_sum) = (0.0, 0.0);
    let mut visits = vec![0u64; n];
    let mut fresh_by_state = vec![0.0; n];
    let mut transitions = DMatrix::<u64>::zeros(n, n);

    for k in 0..cfg.burn_in + cfg.cycles {
        let wait = w.wait(state, age);
        let sample_at = now + wait + y.sample(&mut rng);
        let next_age = d.sample(&mut rng);
        let arrive = sample_at + next_age;
        let origin = now - age;
        let segs = kernel.segments(state);
        let mut fresh = path.fresh_time(now, sample_at, origin, segs, &mut rng);
        let next_state = path.state_at(sample_at, &mut rng);
        fresh += path.fresh_time(sample_at, arrive, origin, segs, &mut rng);

        if k >= cfg.burn_in {
            let len = arrive - now;
            fresh_sum += fresh;
            time_sum += len;
            batch_fresh += fresh;
            batch_time += len;
            visits[state] += 1;
            fresh_by_state[state] += fresh;
            transitions[(state, next_state)] += 1;
            let idx = k - cfg.burn_in + 1;
            if idx % per_batch == 0 || idx == cfg.cycles {
                batch_ratios.push(batch_fresh / batch_time);
                batch_fresh = 0.0;
                batch_time = 0.0;
            }
        }
        now = arrive;
        age = next_age;
        state = next_state;
    }

    let mbf_hat = fresh_sum / time_sum;
    let b = batch_ratios.len() as f64;
    let mean_ratio = batch_ratios.iter().sum::<f64>() / b;
    let var = batch_ratios
        .iter()
        .map(|r| (r - mean_ratio).powi(2))
        .sum::<f64>()
        / (b - 1.0).max(1.0);
    let cycles = cfg.cycles as f64;
    SimResult {
        mbf_hat,
        stderr: (var / b).sqrt(),
        numerator: fresh_sum / cycles,
        mean_cycle: time_sum / cycles,
        phi_hat: visits.iter().map(|v| *v as f64 / cycles).collect(),
        g_hat: visits
            .iter()
            .zip(&fresh_by_state)
            .map(|(v, f)| if *v == 0 { 0.0 } else { f / *v as f64 })
            .collect(),
        transitions,
        seed: cfg.seed,
        cycles: cfg.cycles,
    }
}
