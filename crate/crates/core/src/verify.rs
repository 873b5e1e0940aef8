//! Sample-path checkers and brute-force oracles.
//!
//! The incremental checkers are fed one slot at a time by the simulator; the
//! free functions replay them over stored traces.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::env::{EnvError, RatePair, ReferencePolicy};
use crate::mab::{sample_action, LearnerState, MabError, MixedAction, StepParams};
use crate::rng::{CounterRng, Purpose, UniformSource};

/// Absolute slack for every sample-path check (jobs^2 scale).
pub const DRIFT_TOLERANCE: f64 = 1e-9;

/// Outcome of one checker over one trace.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// Smallest `rhs - lhs` seen; negative beyond the tolerance means failure.
    pub worst_slack: f64,
    /// Slot of the worst slack (1-based).
    pub slot: Option<usize>,
    pub queue: Option<usize>,
    pub tolerance: f64,
}

impl CheckReport {
    fn new(name: &str, tolerance: f64) -> Self {
        Self { name: String::from(name), passed: true, worst_slack: f64::INFINITY, slot: None, queue: None, tolerance }
    }

    fn record(&mut self, slack: f64, slot: usize, queue: Option<usize>) {
        if slack < self.worst_slack || slack.is_nan() {
            self.worst_slack = slack;
            self.slot = Some(slot);
            self.queue = queue;
        }
        if !(slack >= -self.tolerance) {
            self.passed = false;
        }
    }

    /// Combines reports of the same check from several runs.
    pub fn merge(&mut self, other: &CheckReport) {
        if other.worst_slack < self.worst_slack {
            self.worst_slack = other.worst_slack;
            self.slot = other.slot;
            self.queue = other.queue;
        }
        self.passed &= other.passed;
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} (worst slack {:e}", self.name, if self.passed { "pass" } else { "FAIL" }, self.worst_slack)?;
        if let Some(t) = self.slot {
            write!(f, " at slot {t}")?;
        }
        if let Some(q) = self.queue {
            write!(f, " queue {}", q + 1)?;
        }
        write!(f, ")")
    }
}

/// `1/2 |Q_t|^2 - 1/2 |Q_{t-1}|^2 <= (K+1) M^2 / 2 + <Q_{t-1}, A_t - S_t 1_{a_t}>`.
#[derive(Clone, Debug)]
pub struct DriftChecker {
    constant: f64,
    report: CheckReport,
}

impl DriftChecker {
    pub fn new(queues: usize, bound: f64) -> Self {
        Self { constant: (queues as f64 + 1.0) * bound * bound / 2.0, report: CheckReport::new("drift", DRIFT_TOLERANCE) }
    }

    pub fn observe(&mut self, t: usize, q_prev: &[f64], arrivals: &[f64], action: usize, service: f64, q_new: &[f64]) {
        let mut lhs = 0.0;
        let mut rhs = self.constant;
        for i in 0..q_prev.len() {
            // (b^2 - a^2)/2 as (b - a)(b + a)/2 stays exact for integer lengths
            lhs += 0.5 * (q_new[i] - q_prev[i]) * (q_new[i] + q_prev[i]);
            let departure = if i == action { service } else { 0.0 };
            rhs += q_prev[i] * (arrivals[i] - departure);
        }
        self.report.record(rhs - lhs, t, None);
    }

    pub fn report(&self) -> &CheckReport {
        &self.report
    }
}

/// `<Q_t, U_t> = 0` with `U_t = max(S_t 1_{a_t} - Q_{t-1} - A_t, 0)`.
#[derive(Clone, Debug)]
pub struct OrthogonalityChecker {
    report: CheckReport,
}

impl Default for OrthogonalityChecker {
    fn default() -> Self {
        Self { report: CheckReport::new("unused-service orthogonality", DRIFT_TOLERANCE) }
    }
}

impl OrthogonalityChecker {
    pub fn observe(&mut self, t: usize, q_prev: &[f64], arrivals: &[f64], action: usize, service: f64, q_new: &[f64]) {
        let mut inner = 0.0;
        for i in 0..q_prev.len() {
            let departure = if i == action { service } else { 0.0 };
            let unused = (departure - q_prev[i] - arrivals[i]).max(0.0);
            inner += q_new[i] * unused;
        }
        self.report.record(0.0 - inner.abs(), t, None);
    }

    pub fn report(&self) -> &CheckReport {
        &self.report
    }
}

/// Per-queue prefix sums of `x = Q / M` for the bounded-difference lemma
/// `sum x^2 <= 4 (sum x)^(3/2)` and its reverse `sum x^2 >= x_n^3 / 3`.
#[derive(Clone, Debug)]
pub struct BoundedDiffChecker {
    scale: f64,
    sums: Vec<f64>,
    sums_sq: Vec<f64>,
    upper: CheckReport,
    lower: CheckReport,
}

impl BoundedDiffChecker {
    pub fn new(queues: usize, bound: f64) -> Self {
        Self {
            scale: 1.0 / bound,
            sums: vec![0.0; queues],
            sums_sq: vec![0.0; queues],
            upper: CheckReport::new("bounded-difference sum", DRIFT_TOLERANCE),
            lower: CheckReport::new("bounded-difference floor", DRIFT_TOLERANCE),
        }
    }

    pub fn observe(&mut self, t: usize, q_new: &[f64]) {
        for (i, &q) in q_new.iter().enumerate() {
            let x = q * self.scale;
            self.sums[i] += x;
            self.sums_sq[i] += x * x;
            let upper = 4.0 * libm::pow(self.sums[i], 1.5);
            self.upper.record(upper - self.sums_sq[i], t, Some(i));
            self.lower.record(self.sums_sq[i] - x * x * x / 3.0, t, Some(i));
        }
    }

    pub fn reports(&self) -> [&CheckReport; 2] {
        [&self.upper, &self.lower]
    }
}

/// A stored per-slot trace (as read back from a record file).
#[derive(Clone, Debug, PartialEq)]
pub struct SlotTrace {
    pub queues: usize,
    pub bound: f64,
    pub actions: Vec<usize>,
    pub services: Vec<f64>,
    /// Row-major `[t][i]`, one row per slot.
    pub arrivals: Vec<f64>,
    /// Row-major `[t][i]`: `Q_1 .. Q_T`.
    pub queue_lengths: Vec<f64>,
}

impl SlotTrace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn row<'a>(&self, data: &'a [f64], t: usize) -> &'a [f64] {
        &data[(t - 1) * self.queues..t * self.queues]
    }

    fn replay(&self, mut visit: impl FnMut(usize, &[f64], &[f64], usize, f64, &[f64])) {
        let zero = vec![0.0; self.queues];
        for t in 1..=self.len() {
            let prev = if t == 1 { &zero[..] } else { self.row(&self.queue_lengths, t - 1) };
            visit(t, prev, self.row(&self.arrivals, t), self.actions[t - 1], self.services[t - 1], self.row(&self.queue_lengths, t));
        }
    }

    /// First slot whose stored `Q_t` differs from the recursion applied to
    /// the stored `(Q_{t-1}, A_t, S_t, a_t)`.
    pub fn check_recursion(&self) -> CheckReport {
        let mut report = CheckReport::new("queue recursion", 0.0);
        self.replay(|t, prev, arrivals, action, service, next| {
            for i in 0..prev.len() {
                let departure = if i == action { service } else { 0.0 };
                let expected = (prev[i] + arrivals[i] - departure).max(0.0);
                report.record(0.0 - (expected - next[i]).abs(), t, Some(i));
            }
        });
        report
    }
}

pub fn check_drift_inequality(trace: &SlotTrace) -> CheckReport {
    let mut checker = DriftChecker::new(trace.queues, trace.bound);
    trace.replay(|t, prev, a, action, s, next| checker.observe(t, prev, a, action, s, next));
    checker.report
}

pub fn check_orthogonality(trace: &SlotTrace) -> CheckReport {
    let mut checker = OrthogonalityChecker::default();
    trace.replay(|t, prev, a, action, s, next| checker.observe(t, prev, a, action, s, next));
    checker.report
}

/// Lemma check on one queue's trace `Q_1, Q_2, ...` (with `Q_0 = 0` implied).
pub fn check_bounded_diff_sum(series: &[f64], bound: f64) -> CheckReport {
    let mut checker = BoundedDiffChecker::new(1, bound);
    for (t, &q) in series.iter().enumerate() {
        checker.observe(t + 1, &[q]);
    }
    checker.upper
}

/// `sum x^2 >= x_n^3 / 3` at every prefix of one queue's trace.
pub fn check_reverse_floor(series: &[f64], bound: f64) -> CheckReport {
    let mut checker = BoundedDiffChecker::new(1, bound);
    for (t, &q) in series.iter().enumerate() {
        checker.observe(t + 1, &[q]);
    }
    checker.lower
}

/// Every replayable check over a stored trace.
pub fn check_trace(trace: &SlotTrace) -> Vec<CheckReport> {
    let mut out = vec![trace.check_recursion(), check_drift_inequality(trace), check_orthogonality(trace)];
    let mut bd = BoundedDiffChecker::new(trace.queues, trace.bound);
    for t in 1..=trace.len() {
        bd.observe(t, trace.row(&trace.queue_lengths, t));
    }
    out.extend(bd.reports().into_iter().cloned());
    out
}

fn projection_objective(y: &[f64], scaled: &[f64]) -> f64 {
    y.iter()
        .zip(scaled)
        .map(|(&yi, &si)| if yi > 0.0 { yi * (libm::log(yi) - libm::log(si)) } else { 0.0 })
        .sum()
}

/// Brute-force minimizer of `sum y ln(y / scaled)` over simplex grid points
/// with every coordinate at least `beta`.
///
/// The grid has spacing `resolution`. Coarse grids are scanned first and the
/// search is refined in a window around the best coarse point, which is
/// sound because the objective is convex. Returns the uniform point if no
/// grid point clears the floor.
pub fn grid_projection_oracle(scaled: &[f64], beta: f64, resolution: f64) -> MixedAction {
    let k = scaled.len();
    assert!((1..=4).contains(&k), "grid oracle supports 1 to 4 arms");
    if k == 1 {
        return MixedAction::uniform(1);
    }
    let fine = libm::round(1.0 / resolution) as i64;
    let mut levels = vec![fine];
    while *levels.last().unwrap() > 64 {
        let n = *levels.last().unwrap();
        levels.push((n + 3) / 4);
    }
    levels.reverse();

    let mut center: Option<Vec<f64>> = None;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &n in &levels {
        let window = center.as_ref().map(|_| 10);
        best = grid_scan(scaled, beta, n, center.as_deref(), window);
        if let Some((_, y)) = &best {
            center = Some(y.clone());
        }
    }
    match best {
        Some((_, y)) => MixedAction::new(y).unwrap_or_else(|_| MixedAction::uniform(k)),
        None => MixedAction::uniform(k),
    }
}

fn grid_scan(scaled: &[f64], beta: f64, n: i64, center: Option<&[f64]>, window: Option<i64>) -> Option<(f64, Vec<f64>)> {
    let k = scaled.len();
    let nf = n as f64;
    let floor_units = libm::ceil(beta * nf - 1e-9).max(0.0) as i64;
    let ranges: Vec<(i64, i64)> = (0..k - 1)
        .map(|i| match (center, window) {
            (Some(c), Some(w)) => {
                let mid = libm::round(c[i] * nf) as i64;
                ((mid - w).max(floor_units), (mid + w).min(n))
            }
            _ => (floor_units, n),
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut units = vec![0i64; k - 1];
    let mut y = vec![0.0; k];
    scan_rec(0, &ranges, n, &mut units, &mut |units: &[i64]| {
        let used: i64 = units.iter().sum();
        let last = n - used;
        if last < floor_units {
            return;
        }
        for (yi, &u) in y.iter_mut().zip(units) {
            *yi = u as f64 / nf;
        }
        y[k - 1] = last as f64 / nf;
        let value = projection_objective(&y, scaled);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, y.clone()));
        }
    });
    best
}

fn scan_rec(depth: usize, ranges: &[(i64, i64)], n: i64, units: &mut [i64], visit: &mut dyn FnMut(&[i64])) {
    if depth == ranges.len() {
        visit(units);
        return;
    }
    let used: i64 = units[..depth].iter().sum();
    let (lo, hi) = ranges[depth];
    for u in lo..=hi.min(n - used) {
        units[depth] = u;
        scan_rec(depth + 1, ranges, n, units, visit);
    }
}

/// Capacity LP by bisection on `eps`: the largest `eps` with
/// `sum_i (lambda_i + eps)^+ / sigma_i <= 1`.
pub fn lp_bisection_oracle(rates: &RatePair) -> Result<ReferencePolicy, EnvError> {
    let k = rates.queues();
    if k == 0 {
        return Err(EnvError::NoQueues);
    }
    if rates.sigma.len() != k {
        return Err(EnvError::DimensionMismatch { expected: k, found: rates.sigma.len() });
    }
    for (queue, &s) in rates.sigma.iter().enumerate() {
        if !(s > 0.0) {
            return Err(EnvError::ZeroServiceRate { queue });
        }
    }
    let usage = |eps: f64| -> f64 { rates.lambda.iter().zip(&rates.sigma).map(|(&l, &s)| (l + eps).max(0.0) / s).sum() };
    let lambda_max = rates.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sigma_max = rates.sigma.iter().copied().fold(0.0, f64::max);
    let (mut lo, mut hi) = (-lambda_max, sigma_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if usage(mid) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eps = lo;
    let mut theta: Vec<f64> = rates.lambda.iter().zip(&rates.sigma).map(|(&l, &s)| (l + eps).max(0.0) / s).collect();
    let total: f64 = theta.iter().sum();
    if total > 0.0 {
        theta.iter_mut().for_each(|w| *w /= total);
    } else {
        theta = vec![1.0 / k as f64; k];
    }
    Ok(ReferencePolicy {
        theta: MixedAction::new(theta).expect("normalized"),
        eps,
        feasible: eps >= 0.0,
    })
}

/// Constant learner schedule for the stationary bandit probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeParams {
    pub gamma: f64,
    pub eta: f64,
    /// `None` means `1 / (K T)`.
    pub beta: Option<f64>,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self { gamma: 0.05, eta: 0.01, beta: None }
    }
}

/// Runs EXP3.S+ with constant parameters and uniform exploration on
/// Bernoulli arms with the given means; returns per-arm play frequencies.
///
/// Rewards lie in `{0, 1}`, so condition (ii) needs `gamma / (K eta) >= 1`;
/// `eta` is lowered to `gamma / K` when necessary.
pub fn exp3s_regret_probe(means: &[f64], horizon: usize, seed: u64, params: ProbeParams) -> Result<Vec<f64>, MabError> {
    let k = means.len();
    if k == 0 {
        return Err(MabError::EmptyAction);
    }
    let mut counts = vec![0usize; k];
    if horizon == 0 {
        return Ok(vec![0.0; k]);
    }
    let eta = params.eta.min(params.gamma / k as f64);
    let beta = params.beta.unwrap_or(1.0 / (k as f64 * horizon as f64));
    let step = StepParams::new(eta, beta, params.gamma, MixedAction::uniform(k))?;
    let mut learner = LearnerState::uniform(k);
    let mut decisions = CounterRng::new(seed, Purpose::Probe);
    let mut rewards = CounterRng::keyed(&[seed, Purpose::Probe as u64, 1]);
    for _ in 0..horizon {
        let p = learner.sampling_distribution(&step)?;
        let arm = sample_action(&p, &mut decisions);
        counts[arm] += 1;
        let reward = if rewards.next_f64() < means[arm] { 1.0 } else { 0.0 };
        learner.feed_reward(&step, arm, reward)?;
    }
    Ok(counts.iter().map(|&c| c as f64 / horizon as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::solve_reference_lp;
    use crate::mab::project_floored_simplex;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn drift_hand_fixture() {
        let mut c = DriftChecker::new(1, 3.0);
        c.observe(1, &[5.0], &[2.0], 0, 3.0, &[4.0]);
        assert!(c.report().passed);
        assert_eq!(c.report().worst_slack, 4.0 - -4.5);
    }

    #[test]
    fn drift_flags_violation() {
        let mut c = DriftChecker::new(1, 1.0);
        // an impossible jump from 0 to 10 with no arrivals
        c.observe(3, &[0.0], &[0.0], 0, 0.0, &[10.0]);
        assert!(!c.report().passed);
        assert_eq!(c.report().slot, Some(3));
    }

    #[test]
    fn orthogonality_examples() {
        let mut c = OrthogonalityChecker::default();
        c.observe(1, &[1.0, 2.0], &[0.0, 1.0], 0, 3.0, &[0.0, 3.0]);
        assert!(c.report().passed);
        // claims a positive queue after wasted service
        c.observe(2, &[1.0], &[0.0], 0, 3.0, &[1.0]);
        assert!(!c.report().passed);
    }

    #[test]
    fn bounded_diff_examples() {
        assert!(check_bounded_diff_sum(&[0.0; 20], 1.0).passed);
        for n in 1..=1000usize {
            let ramp: Vec<f64> = (1..=n).map(|v| v as f64).collect();
            // sum over 0..n of s^2 vs 4 (n(n+1)/2)^1.5
            let lhs = (n * (n + 1) * (2 * n + 1)) as f64 / 6.0;
            let rhs = 4.0 * ((n * (n + 1)) as f64 / 2.0).powf(1.5);
            assert!(lhs <= rhs);
            if n % 97 == 0 {
                assert!(check_bounded_diff_sum(&ramp, 1.0).passed);
                assert!(check_reverse_floor(&ramp, 1.0).passed);
            }
        }
        // a jump of 20 at once breaks the unit-increment premise
        assert!(!check_reverse_floor(&[20.0], 1.0).passed);
    }

    #[test]
    fn grid_oracle_examples() {
        let y = grid_projection_oracle(&[1.0, 1.0], 0.0, 0.01);
        assert!(close(y.as_slice(), &[0.5, 0.5], 1e-12));
        let y = grid_projection_oracle(&[1.5, 0.5], 0.0, 0.01);
        assert!(close(y.as_slice(), &[0.75, 0.25], 0.01));
        let y = grid_projection_oracle(&[100.0, 1.0], 0.1, 0.01);
        assert!(close(y.as_slice(), &[0.9, 0.1], 0.01));
        // refinement converges
        let fine = grid_projection_oracle(&[1.5, 0.5], 0.0, 0.001);
        assert!(close(fine.as_slice(), &[0.75, 0.25], 0.001));
    }

    #[test]
    fn grid_oracle_agrees_three_arms() {
        let scaled = [3.0, 0.2, 1.1];
        let closed = project_floored_simplex(&scaled, 0.1).unwrap();
        let grid = grid_projection_oracle(&scaled, 0.1, 0.001);
        assert!(close(closed.as_slice(), grid.as_slice(), 2e-3), "{closed:?} {grid:?}");
    }

    #[test]
    fn bisection_matches_closed_form() {
        let cases = [
            RatePair::new(vec![0.25, 0.2, 0.15, 0.1, 0.05], vec![0.9, 0.85, 0.8, 0.59, 0.39]).unwrap(),
            RatePair::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            RatePair::new(vec![0.9, 0.05], vec![0.5, 1.0]).unwrap(),
        ];
        for rates in &cases {
            let a = solve_reference_lp(rates).unwrap();
            let b = lp_bisection_oracle(rates).unwrap();
            assert!((a.eps - b.eps).abs() < 1e-8);
            assert!(close(a.theta.as_slice(), b.theta.as_slice(), 1e-8));
        }
    }

    #[test]
    fn probe_single_arm() {
        let f = exp3s_regret_probe(&[0.3], 100, 1, ProbeParams::default()).unwrap();
        assert_eq!(f, vec![1.0]);
    }
}
