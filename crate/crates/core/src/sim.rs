//! Slot-by-slot simulation, run records and replication aggregates.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::env::{Environment, StepSample};
use crate::rng::{label_id, CounterRng, Purpose};
use crate::sched::{Policy, PolicyDescriptor, QueueVector, SchedError, SlotView};
use crate::verify::{BoundedDiffChecker, CheckReport, DriftChecker, OrthogonalityChecker, SlotTrace};

/// `Q_{t,i} = max(Q_{t-1,i} + A_{t,i} - S_{t,i} 1[i = a_t], 0)`.
pub fn advance_queue(q_prev: &QueueVector, sample: &StepSample, action: usize) -> QueueVector {
    let mut out = q_prev.clone();
    advance_queue_into(q_prev.as_slice(), &sample.arrivals, sample.services[action], action, out.as_mut_slice());
    out
}

pub fn advance_queue_into(q_prev: &[f64], arrivals: &[f64], service: f64, action: usize, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let departure = if i == action { service } else { 0.0 };
        *o = (q_prev[i] + arrivals[i] - departure).max(0.0);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordOptions {
    /// Run the sample-path checkers online.
    pub check: bool,
    /// Keep per-slot actions, services, gammas and fed rewards.
    pub per_slot: bool,
    /// Keep `Q_t` and `A_t` every `queue_stride` slots (0 disables).
    pub queue_stride: usize,
    /// Arrival and service draws shared by all policies of a replication.
    pub common_random_numbers: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self { check: true, per_slot: true, queue_stride: 1, common_random_numbers: false }
    }
}

impl RecordOptions {
    /// Totals and checks only: what replication needs at large `T`.
    pub fn summary() -> Self {
        Self { per_slot: false, queue_stride: 0, ..Self::default() }
    }
}

/// Trace of one run. Slot `t` lives at index `t - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub queues: usize,
    pub bound: f64,
    pub horizon: usize,
    /// `|Q_t|_1` for every slot.
    pub totals: Vec<f64>,
    pub actions: Vec<usize>,
    /// Observed `S_{t, a_t}`.
    pub services: Vec<f64>,
    /// `gamma_t`; empty for non-bandit policies.
    pub gammas: Vec<f64>,
    /// Reward handed to the learner; empty for non-bandit policies.
    pub fed: Vec<f64>,
    /// Slots at which an SSMW epoch began.
    pub epoch_starts: Vec<usize>,
    pub queue_stride: usize,
    /// `Q_t` rows for `t = stride, 2 stride, ...`, row-major.
    pub queue_samples: Vec<f64>,
    /// `A_t` rows on the same slots.
    pub arrival_samples: Vec<f64>,
    pub checks: Vec<CheckReport>,
}

impl RunRecord {
    pub fn final_queues(&self) -> Option<&[f64]> {
        let k = self.queues;
        let n = self.queue_samples.len() / k.max(1);
        (n > 0 && self.queue_stride > 0 && n * self.queue_stride == self.horizon)
            .then(|| &self.queue_samples[(n - 1) * k..n * k])
    }

    pub fn checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// The stored per-slot trace, when everything was kept at stride 1.
    pub fn slot_trace(&self) -> Option<SlotTrace> {
        (self.per_slot_complete() && self.queue_stride == 1).then(|| SlotTrace {
            queues: self.queues,
            bound: self.bound,
            actions: self.actions.clone(),
            services: self.services.clone(),
            arrivals: self.arrival_samples.clone(),
            queue_lengths: self.queue_samples.clone(),
        })
    }

    fn per_slot_complete(&self) -> bool {
        self.actions.len() == self.horizon && self.services.len() == self.horizon
    }

    pub fn final_window_mean(&self) -> f64 {
        final_window_mean(&self.totals)
    }

    pub fn time_average(&self) -> f64 {
        window_mean(&self.totals, 0, self.totals.len())
    }
}

/// A run aborted by a failed runtime assertion.
#[derive(Clone, Debug, PartialEq)]
pub struct SimError {
    pub label: String,
    pub seed: u64,
    pub slot: usize,
    pub source: SchedError,
    pub state: String,
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (seed {}) aborted at slot {}: {}; state: {}", self.label, self.seed, self.slot, self.source, self.state)
    }
}

impl core::error::Error for SimError {}

/// Runs the policy described by `descriptor` for the environment's horizon.
pub fn run_once(env: &Environment, descriptor: &PolicyDescriptor, seed: u64, options: &RecordOptions) -> Result<RunRecord, SimError> {
    let mut policy = descriptor.build(env.spec()).map_err(|source| SimError {
        label: descriptor.label.clone(),
        seed,
        slot: 0,
        source,
        state: String::from("not built"),
    })?;
    run_policy(env, policy.as_mut(), &descriptor.label, seed, options)
}

/// Simulation loop over an already constructed policy.
///
/// Each slot: the policy decides from `Q_{t-1}`, the environment draws
/// `A_t, S_t`, the queues advance, and the policy observes `S_{t, a_t}`.
pub fn run_policy(
    env: &Environment,
    policy: &mut dyn Policy,
    label: &str,
    seed: u64,
    options: &RecordOptions,
) -> Result<RunRecord, SimError> {
    let k = env.queues();
    let horizon = env.spec().horizon;
    let bound = env.spec().bound;
    let policy_id = label_id(label);
    let draw_id = if options.common_random_numbers { 0 } else { policy_id };
    let bandit = policy.kind().is_bandit();
    let stride = options.queue_stride;

    let mut record = RunRecord {
        label: String::from(label),
        seed,
        queues: k,
        bound,
        horizon,
        totals: Vec::with_capacity(horizon),
        actions: Vec::new(),
        services: Vec::new(),
        gammas: Vec::new(),
        fed: Vec::new(),
        epoch_starts: Vec::new(),
        queue_stride: stride,
        queue_samples: Vec::new(),
        arrival_samples: Vec::new(),
        checks: Vec::new(),
    };
    if options.per_slot {
        record.actions.reserve(horizon);
        record.services.reserve(horizon);
        if bandit {
            record.gammas.reserve(horizon);
            record.fed.reserve(horizon);
        }
    }

    let bounded = env.spec().is_bounded();
    let mut drift = (options.check && bounded).then(|| DriftChecker::new(k, bound));
    let mut orth = options.check.then(OrthogonalityChecker::default);
    let mut diffs = (options.check && bounded).then(|| BoundedDiffChecker::new(k, bound));

    let mut q_prev = vec![0.0; k];
    let mut q_new = vec![0.0; k];
    let mut sample = StepSample::zeros(k);
    for t in 1..=horizon {
        let slot = t as u64;
        let fail = |source: SchedError, policy: &dyn Policy| SimError {
            label: String::from(label),
            seed,
            slot: t,
            source,
            state: policy.describe_state(),
        };
        env.rates_at(t, &mut sample.rates);
        let mut decision_rng = CounterRng::keyed(&[seed, policy_id, slot, Purpose::Decision as u64]);
        let view = SlotView { t, queues: &q_prev, true_service_rates: &sample.rates.sigma };
        let decision = match policy.decide(view, &mut decision_rng) {
            Ok(d) => d,
            Err(e) => return Err(fail(e, policy)),
        };
        let action = decision.arm;

        let mut arrivals_rng = CounterRng::keyed(&[seed, draw_id, slot, Purpose::Arrivals as u64]);
        let mut services_rng = CounterRng::keyed(&[seed, draw_id, slot, Purpose::Services as u64]);
        env.sample_step(t, &mut arrivals_rng, &mut services_rng, &mut sample);
        let service = sample.services[action];
        advance_queue_into(&q_prev, &sample.arrivals, service, action, &mut q_new);

        let fed = match policy.observe(action, service, &q_new) {
            Ok(f) => f,
            Err(e) => return Err(fail(e, policy)),
        };

        if let Some(c) = drift.as_mut() {
            c.observe(t, &q_prev, &sample.arrivals, action, service, &q_new);
        }
        if let Some(c) = orth.as_mut() {
            c.observe(t, &q_prev, &sample.arrivals, action, service, &q_new);
        }
        if let Some(c) = diffs.as_mut() {
            c.observe(t, &q_new);
        }

        record.totals.push(q_new.iter().sum());
        if decision.epoch_start {
            record.epoch_starts.push(t);
        }
        if options.per_slot {
            record.actions.push(action);
            record.services.push(service);
            if bandit {
                record.gammas.push(decision.gamma.unwrap_or(0.0));
                record.fed.push(fed.unwrap_or(0.0));
            }
        }
        if stride > 0 && t % stride == 0 {
            record.queue_samples.extend_from_slice(&q_new);
            record.arrival_samples.extend_from_slice(&sample.arrivals);
        }
        core::mem::swap(&mut q_prev, &mut q_new);
    }

    if let Some(c) = drift {
        record.checks.push(c.report().clone());
    }
    if let Some(c) = orth {
        record.checks.push(c.report().clone());
    }
    if let Some(c) = diffs {
        record.checks.extend(c.reports().into_iter().cloned());
    }
    Ok(record)
}

/// Mean of `series` over 0-based indices `[from, to)`.
pub fn window_mean(series: &[f64], from: usize, to: usize) -> f64 {
    let to = to.min(series.len());
    if from >= to {
        return 0.0;
    }
    series[from..to].iter().sum::<f64>() / (to - from) as f64
}

/// Mean over slots `t` in `(lo * T, hi * T]`.
pub fn fraction_window_mean(series: &[f64], lo: f64, hi: f64) -> f64 {
    let n = series.len() as f64;
    window_mean(series, libm::floor(lo * n) as usize, libm::floor(hi * n) as usize)
}

/// Mean of `|Q_t|_1` over the last 10% of slots.
pub fn final_window_mean(series: &[f64]) -> f64 {
    fraction_window_mean(series, 0.9, 1.0)
}

/// Per-policy aggregate over replications.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyResult {
    pub label: String,
    pub horizon: usize,
    /// Stride of `rep_series`; slots `stride, 2 stride, ...`.
    pub stride: usize,
    /// Down-sampled `|Q_t|_1` per replication.
    pub rep_series: Vec<Vec<f64>>,
    /// Pointwise mean of the full-resolution replication series.
    pub mean_series: Vec<f64>,
    pub rep_final_window: Vec<f64>,
    pub rep_time_average: Vec<f64>,
    pub checks: Vec<CheckReport>,
}

impl PolicyResult {
    pub fn reps(&self) -> usize {
        self.rep_series.len()
    }

    pub fn final_window_mean(&self) -> f64 {
        final_window_mean(&self.mean_series)
    }

    pub fn time_average(&self) -> f64 {
        window_mean(&self.mean_series, 0, self.mean_series.len())
    }

    pub fn window_mean(&self, lo: f64, hi: f64) -> f64 {
        fraction_window_mean(&self.mean_series, lo, hi)
    }

    /// Down-sampled mean series on the same slots as `rep_series`.
    pub fn sampled_mean(&self) -> Vec<f64> {
        sample_series(&self.mean_series, self.stride)
    }

    pub fn checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Values at slots `stride, 2 stride, ...`.
pub fn sample_series(series: &[f64], stride: usize) -> Vec<f64> {
    let stride = stride.max(1);
    series.iter().skip(stride - 1).step_by(stride).copied().collect()
}

/// Folds replication records, in replication order, into a [`PolicyResult`].
#[derive(Clone, Debug)]
pub struct PolicyAccumulator {
    result: PolicyResult,
    sums: Vec<f64>,
}

impl PolicyAccumulator {
    pub fn new(label: &str, horizon: usize, stride: usize) -> Self {
        Self {
            result: PolicyResult {
                label: String::from(label),
                horizon,
                stride: stride.max(1),
                rep_series: Vec::new(),
                mean_series: Vec::new(),
                rep_final_window: Vec::new(),
                rep_time_average: Vec::new(),
                checks: Vec::new(),
            },
            sums: vec![0.0; horizon],
        }
    }

    pub fn push(&mut self, record: &RunRecord) {
        for (s, v) in self.sums.iter_mut().zip(&record.totals) {
            *s += v;
        }
        let r = &mut self.result;
        r.rep_series.push(sample_series(&record.totals, r.stride));
        r.rep_final_window.push(record.final_window_mean());
        r.rep_time_average.push(record.time_average());
        for check in &record.checks {
            match r.checks.iter_mut().find(|c| c.name == check.name) {
                Some(c) => c.merge(check),
                None => r.checks.push(check.clone()),
            }
        }
    }

    pub fn finish(mut self) -> PolicyResult {
        let n = self.result.rep_series.len().max(1) as f64;
        self.result.mean_series = self.sums.into_iter().map(|s| s / n).collect();
        self.result
    }
}

/// Sequential replication: replication `r` uses seed `base_seed + r`.
pub fn replicate(
    env: &Environment,
    descriptors: &[PolicyDescriptor],
    reps: usize,
    base_seed: u64,
    stride: usize,
    options: &RecordOptions,
) -> Result<Vec<PolicyResult>, SimError> {
    let mut out = Vec::with_capacity(descriptors.len());
    for d in descriptors {
        let mut acc = PolicyAccumulator::new(&d.label, env.spec().horizon, stride);
        for r in 0..reps as u64 {
            acc.push(&run_once(env, d, base_seed + r, options)?);
        }
        out.push(acc.finish());
    }
    Ok(out)
}

/// Boxed policies are `Send`, so runs can be moved to worker threads.
pub type BoxedPolicy = Box<dyn Policy>;
