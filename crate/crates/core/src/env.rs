//! Arrival and service processes, the AR(1) service-rate noise, and the
//! capacity LP that yields the reference randomized policy.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::mab::MixedAction;
use crate::rng::{CounterRng, GaussianStream, Purpose, UniformSource};

#[derive(Clone, Debug, PartialEq)]
pub enum EnvError {
    NoQueues,
    InvalidBound(f64),
    ZeroServiceRate { queue: usize },
    RateOutOfRange { queue: usize, rate: f64 },
    DimensionMismatch { expected: usize, found: usize },
    /// Heavy-tailed processes need moment order at least 2.
    MomentOrder(f64),
    /// The mean cannot be reached under the moment bound.
    HeavyTailedRate { queue: usize, rate: f64, max: f64 },
    EmptyTrace,
    InvalidNoise { phi: f64, sd: f64 },
}

impl fmt::Display for EnvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvError::NoQueues => write!(f, "environment needs at least one queue"),
            EnvError::InvalidBound(m) => write!(f, "bound M must be positive and finite, got {m}"),
            EnvError::ZeroServiceRate { queue } => write!(f, "service rate of queue {queue} is zero"),
            EnvError::RateOutOfRange { queue, rate } => {
                write!(f, "rate {rate} of queue {queue} is outside [0, 1]")
            }
            EnvError::DimensionMismatch { expected, found } => {
                write!(f, "expected {expected} queues, found {found}")
            }
            EnvError::MomentOrder(a) => write!(f, "moment order must be at least 2, got {a}"),
            EnvError::HeavyTailedRate { queue, rate, max } => {
                write!(f, "heavy-tailed mean {rate} of queue {queue} exceeds {max}")
            }
            EnvError::EmptyTrace => write!(f, "fixed trace has no rows"),
            EnvError::InvalidNoise { phi, sd } => write!(f, "invalid AR(1) noise (phi {phi}, sd {sd})"),
        }
    }
}

impl core::error::Error for EnvError {}

/// Mean arrivals and mean potential services for one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct RatePair {
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl RatePair {
    pub fn new(lambda: Vec<f64>, sigma: Vec<f64>) -> Result<Self, EnvError> {
        if lambda.len() != sigma.len() {
            return Err(EnvError::DimensionMismatch { expected: lambda.len(), found: sigma.len() });
        }
        Ok(Self { lambda, sigma })
    }

    pub fn queues(&self) -> usize {
        self.lambda.len()
    }
}

/// AR(1) perturbation `zeta <- phi * zeta + N(0, sd^2)`, one coordinate per queue.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseState {
    pub zeta: Vec<f64>,
    pub phi: f64,
    pub sd: f64,
}

impl NoiseState {
    pub fn zero(queues: usize, phi: f64, sd: f64) -> Self {
        Self { zeta: vec![0.0; queues], phi, sd }
    }

    /// One step with caller-supplied standard normal innovations.
    pub fn advance_with(&mut self, mut innovation: impl FnMut() -> f64) {
        for z in &mut self.zeta {
            *z = self.phi * *z + self.sd * innovation();
        }
    }

    pub fn advance<R: UniformSource>(&mut self, normals: &mut GaussianStream<R>) {
        self.advance_with(|| normals.next_standard());
    }
}

/// `sigma = clamp(sigma0 + zeta, 0, 1)`; lambda is passed through.
pub fn effective_rates(base: &RatePair, noise: &[f64]) -> RatePair {
    RatePair {
        lambda: base.lambda.clone(),
        sigma: base
            .sigma
            .iter()
            .zip(noise)
            .map(|(&s, &z)| (s + z).clamp(0.0, 1.0))
            .collect(),
    }
}

/// A pre-generated noise path, stored row-major as `[t][queue]` for
/// `t = 1..=T`. Generated once per scenario and shared by every replication.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTrajectory {
    queues: usize,
    values: Vec<f64>,
}

impl NoiseTrajectory {
    pub fn generate(queues: usize, horizon: usize, phi: f64, sd: f64, seed: u64, stream: u64) -> Self {
        let mut normals = GaussianStream::new(CounterRng::keyed(&[seed, Purpose::Noise as u64, stream]));
        let mut state = NoiseState::zero(queues, phi, sd);
        let mut values = Vec::with_capacity(queues * horizon);
        for _ in 0..horizon {
            state.advance(&mut normals);
            values.extend_from_slice(&state.zeta);
        }
        Self { queues, values }
    }

    pub fn from_values(queues: usize, values: Vec<f64>) -> Option<Self> {
        if queues == 0 || !values.len().is_multiple_of(queues) {
            return None;
        }
        Some(Self { queues, values })
    }

    pub fn queues(&self) -> usize {
        self.queues
    }

    pub fn len(&self) -> usize {
        self.values.len().checked_div(self.queues).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Noise in force during slot `t` (1-based).
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[(t - 1) * self.queues..t * self.queues]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// How one side (arrivals or services) of the system is generated.
#[derive(Clone, Debug, PartialEq)]
pub enum Process {
    /// Outcomes in `{0, M}` with probability `rates[i]` of `M`.
    Bernoulli { rates: Vec<f64> },
    /// Bernoulli with success probability `clamp(rates + zeta_t, 0, 1)`.
    Ar1Bernoulli { rates: Vec<f64>, phi: f64, sd: f64 },
    /// Zero with probability `1 - q_i`, otherwise Lomax with shape `alpha + 1`
    /// and scale `0.9 M`; `q_i` is set so that the mean equals `rates[i]`.
    HeavyTailed { rates: Vec<f64>, alpha: f64 },
    /// Fixed per-slot outcomes, repeated cyclically.
    Trace { rows: Vec<Vec<f64>> },
}

impl Process {
    /// Mean rates of the process before any noise.
    pub fn base_rates(&self) -> Vec<f64> {
        match self {
            Process::Bernoulli { rates } | Process::Ar1Bernoulli { rates, .. } | Process::HeavyTailed { rates, .. } => {
                rates.clone()
            }
            Process::Trace { rows } => {
                let k = rows.first().map_or(0, Vec::len);
                let mut mean = vec![0.0; k];
                for row in rows {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
                mean
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Process::HeavyTailed { .. })
    }

    fn validate(&self, queues: usize, bound: f64) -> Result<(), EnvError> {
        let check_len = |n: usize| {
            if n == queues { Ok(()) } else { Err(EnvError::DimensionMismatch { expected: queues, found: n }) }
        };
        let check_probs = |rates: &[f64]| -> Result<(), EnvError> {
            for (queue, &rate) in rates.iter().enumerate() {
                if !(0.0..=1.0).contains(&rate) {
                    return Err(EnvError::RateOutOfRange { queue, rate });
                }
            }
            Ok(())
        };
        match self {
            Process::Bernoulli { rates } => {
                check_len(rates.len())?;
                check_probs(rates)
            }
            Process::Ar1Bernoulli { rates, phi, sd } => {
                check_len(rates.len())?;
                check_probs(rates)?;
                if !phi.is_finite() || !(*sd >= 0.0) || !sd.is_finite() {
                    return Err(EnvError::InvalidNoise { phi: *phi, sd: *sd });
                }
                Ok(())
            }
            Process::HeavyTailed { rates, alpha } => {
                check_len(rates.len())?;
                if !(*alpha >= 2.0) {
                    return Err(EnvError::MomentOrder(*alpha));
                }
                let max = heavy_tail_scale(bound) / alpha;
                for (queue, &rate) in rates.iter().enumerate() {
                    if !(0.0..=max).contains(&rate) {
                        return Err(EnvError::HeavyTailedRate { queue, rate, max });
                    }
                }
                Ok(())
            }
            Process::Trace { rows } => {
                if rows.is_empty() {
                    return Err(EnvError::EmptyTrace);
                }
                for row in rows {
                    check_len(row.len())?;
                    for (queue, &v) in row.iter().enumerate() {
                        if !(0.0..=bound).contains(&v) {
                            return Err(EnvError::RateOutOfRange { queue, rate: v });
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

fn heavy_tail_scale(bound: f64) -> f64 {
    0.9 * bound
}

/// Lomax(shape `alpha + 1`, scale `s`) by inversion. Its `alpha`-th moment is `s^alpha`.
fn lomax(u: f64, alpha: f64, scale: f64) -> f64 {
    // 1 - u lies in (0, 1]
    scale * (libm::pow(1.0 - u, -1.0 / (alpha + 1.0)) - 1.0)
}

/// Everything needed to generate a run's arrivals and services.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentSpec {
    pub queues: usize,
    /// One-step bound `M` (or moment bound for heavy-tailed processes).
    pub bound: f64,
    pub horizon: usize,
    pub arrivals: Process,
    pub services: Process,
    pub noise_seed: u64,
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.queues == 0 {
            return Err(EnvError::NoQueues);
        }
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(EnvError::InvalidBound(self.bound));
        }
        self.arrivals.validate(self.queues, self.bound)?;
        self.services.validate(self.queues, self.bound)
    }

    pub fn base_rates(&self) -> RatePair {
        RatePair { lambda: self.arrivals.base_rates(), sigma: self.services.base_rates() }
    }

    /// Whether every arrival and service is bounded by `M`.
    pub fn is_bounded(&self) -> bool {
        self.arrivals.is_bounded() && self.services.is_bounded()
    }

    /// Builds the run-invariant noise paths. Call once and share.
    pub fn prepare(&self) -> Result<Environment, EnvError> {
        self.validate()?;
        let noise_for = |p: &Process, stream: u64| match p {
            Process::Ar1Bernoulli { phi, sd, .. } => Some(generate_noise_trajectory(self, *phi, *sd, stream)),
            _ => None,
        };
        Ok(Environment {
            arrival_noise: noise_for(&self.arrivals, Purpose::Arrivals as u64),
            service_noise: noise_for(&self.services, Purpose::Services as u64),
            spec: self.clone(),
        })
    }
}

/// Noise path of length `T` for one AR(1)-modulated process.
pub fn generate_noise_trajectory(spec: &EnvironmentSpec, phi: f64, sd: f64, stream: u64) -> NoiseTrajectory {
    NoiseTrajectory::generate(spec.queues, spec.horizon, phi, sd, spec.noise_seed, stream)
}

/// One slot's draws.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSample {
    pub arrivals: Vec<f64>,
    pub services: Vec<f64>,
    pub rates: RatePair,
}

impl StepSample {
    pub fn zeros(queues: usize) -> Self {
        Self {
            arrivals: vec![0.0; queues],
            services: vec![0.0; queues],
            rates: RatePair { lambda: vec![0.0; queues], sigma: vec![0.0; queues] },
        }
    }
}

/// A validated spec plus its shared noise paths.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    spec: EnvironmentSpec,
    arrival_noise: Option<NoiseTrajectory>,
    service_noise: Option<NoiseTrajectory>,
}

impl Environment {
    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn queues(&self) -> usize {
        self.spec.queues
    }

    pub fn service_noise(&self) -> Option<&NoiseTrajectory> {
        self.service_noise.as_ref()
    }

    pub fn arrival_noise(&self) -> Option<&NoiseTrajectory> {
        self.arrival_noise.as_ref()
    }

    /// Overrides the horizon, regenerating noise paths.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self, EnvError> {
        let mut spec = self.spec.clone();
        spec.horizon = horizon;
        spec.prepare()
    }

    fn rates_into(&self, process: &Process, noise: Option<&NoiseTrajectory>, t: usize, out: &mut [f64]) {
        match process {
            Process::Bernoulli { rates } | Process::HeavyTailed { rates, .. } => out.copy_from_slice(rates),
            Process::Ar1Bernoulli { rates, .. } => {
                let row = noise.expect("noise path prepared").row(t);
                for ((o, &r), &z) in out.iter_mut().zip(rates).zip(row) {
                    *o = (r + z).clamp(0.0, 1.0);
                }
            }
            Process::Trace { rows } => out.copy_from_slice(&rows[(t - 1) % rows.len()]),
        }
    }

    fn draw_into(&self, process: &Process, rates: &[f64], t: usize, rng: &mut CounterRng, out: &mut [f64]) {
        let bound = self.spec.bound;
        match process {
            Process::Bernoulli { .. } | Process::Ar1Bernoulli { .. } => {
                for (o, &r) in out.iter_mut().zip(rates) {
                    *o = if rng.next_f64() < r { bound } else { 0.0 };
                }
            }
            Process::HeavyTailed { alpha, .. } => {
                let scale = heavy_tail_scale(bound);
                let mean_if_on = scale / alpha;
                for (o, &r) in out.iter_mut().zip(rates) {
                    let gate = rng.next_f64();
                    let u = rng.next_f64();
                    *o = if gate < r / mean_if_on { lomax(u, *alpha, scale) } else { 0.0 };
                }
            }
            Process::Trace { rows } => out.copy_from_slice(&rows[(t - 1) % rows.len()]),
        }
    }

    /// Mean rates in force at slot `t` (1-based).
    pub fn rates_at(&self, t: usize, out: &mut RatePair) {
        self.rates_into(&self.spec.arrivals, self.arrival_noise.as_ref(), t, &mut out.lambda);
        self.rates_into(&self.spec.services, self.service_noise.as_ref(), t, &mut out.sigma);
    }

    /// Fills `sample` with slot `t`'s rates and independent draws.
    pub fn sample_step(&self, t: usize, arrivals_rng: &mut CounterRng, services_rng: &mut CounterRng, sample: &mut StepSample) {
        self.rates_at(t, &mut sample.rates);
        self.draw_into(&self.spec.arrivals, &sample.rates.lambda, t, arrivals_rng, &mut sample.arrivals);
        self.draw_into(&self.spec.services, &sample.rates.sigma, t, services_rng, &mut sample.services);
    }
}

/// The five-queue heavy-traffic benchmark: `lambda = (0.25, 0.2, 0.15, 0.1, 0.05)`,
/// `sigma = (0.9, 0.85, 0.8, 0.59, 0.39)`.
pub fn benchmark_rates() -> RatePair {
    RatePair { lambda: vec![0.25, 0.2, 0.15, 0.1, 0.05], sigma: vec![0.9, 0.85, 0.8, 0.59, 0.39] }
}

/// Benchmark with unit Bernoulli outcomes; with `noisy` the service rates
/// carry AR(1) noise with `phi = 0.999`, innovation sd `0.005`.
pub fn benchmark_spec(horizon: usize, noisy: bool, noise_seed: u64) -> EnvironmentSpec {
    let rates = benchmark_rates();
    let services = if noisy {
        Process::Ar1Bernoulli { rates: rates.sigma, phi: 0.999, sd: 0.005 }
    } else {
        Process::Bernoulli { rates: rates.sigma }
    };
    EnvironmentSpec {
        queues: 5,
        bound: 1.0,
        horizon,
        arrivals: Process::Bernoulli { rates: rates.lambda },
        services,
        noise_seed,
    }
}

/// Solution of `max eps s.t. theta in simplex, eps + lambda_i <= theta_i sigma_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePolicy {
    pub theta: MixedAction,
    pub eps: f64,
    /// `eps >= 0`: the rates lie in the capacity region.
    pub feasible: bool,
}

/// Exact optimum of the capacity LP.
///
/// At the optimum `theta_i = (lambda_i + eps)^+ / sigma_i` with the
/// `theta` summing to one, so `eps` solves
/// `sum_i (lambda_i + eps)^+ / sigma_i = 1`. Queues are added to the active
/// set in decreasing order of `lambda`; when `eps >= 0` every queue is
/// active and `eps = (1 - sum lambda_i / sigma_i) / sum 1 / sigma_i`.
pub fn solve_reference_lp(rates: &RatePair) -> Result<ReferencePolicy, EnvError> {
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
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| rates.lambda[b].total_cmp(&rates.lambda[a]));

    let (mut load, mut inv) = (0.0, 0.0);
    let mut eps = 0.0;
    for (j, &i) in order.iter().enumerate() {
        load += rates.lambda[i] / rates.sigma[i];
        inv += 1.0 / rates.sigma[i];
        eps = (1.0 - load) / inv;
        // Stop once the next queue would stay inactive at this eps.
        match order.get(j + 1) {
            Some(&next) if rates.lambda[next] + eps > 0.0 => continue,
            _ => break,
        }
    }
    let mut theta: Vec<f64> = rates
        .lambda
        .iter()
        .zip(&rates.sigma)
        .map(|(&l, &s)| (l + eps).max(0.0) / s)
        .collect();
    let total: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|w| *w /= total);
    Ok(ReferencePolicy {
        theta: MixedAction::new(theta).expect("LP solution is a distribution"),
        eps,
        feasible: eps >= 0.0,
    })
}
