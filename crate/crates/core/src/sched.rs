//! Scheduling policies behind one interface.
//!
//! Bandit policies drive an EXP3.S+ [`LearnerState`] with
//! `Q_{t-1,a} * S_{t,a}` (or a clipped variant) as the reward of the served
//! queue. Baselines are MaxWeight on nominal or true rates and the
//! LP-randomized policy.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::env::{solve_reference_lp, EnvError, EnvironmentSpec};
use crate::mab::{sample_action, LearnerState, MabError, MixedAction, StepParams};
use crate::rng::UniformSource;

#[derive(Clone, Debug, PartialEq)]
pub enum SchedError {
    Learner(MabError),
    Env(EnvError),
    InvalidConfig(String),
    /// `observe` without a matching `decide`.
    NoPendingDecision,
}

impl fmt::Display for SchedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedError::Learner(e) => write!(f, "learner: {e}"),
            SchedError::Env(e) => write!(f, "environment: {e}"),
            SchedError::InvalidConfig(msg) => write!(f, "invalid policy configuration: {msg}"),
            SchedError::NoPendingDecision => write!(f, "observe called before decide"),
        }
    }
}

impl core::error::Error for SchedError {}

impl From<MabError> for SchedError {
    fn from(e: MabError) -> Self {
        SchedError::Learner(e)
    }
}

impl From<EnvError> for SchedError {
    fn from(e: EnvError) -> Self {
        SchedError::Env(e)
    }
}

/// Queue lengths `Q_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueVector(Vec<f64>);

impl QueueVector {
    pub fn zeros(queues: usize) -> Self {
        Self(vec![0.0; queues])
    }

    pub fn from_vec(q: Vec<f64>) -> Option<Self> {
        q.iter().all(|v| v.is_finite() && *v >= 0.0).then_some(Self(q))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn l1(&self) -> f64 {
        l1(&self.0)
    }
}

pub fn l1(q: &[f64]) -> f64 {
    q.iter().sum()
}

pub fn l2_squared(q: &[f64]) -> f64 {
    q.iter().map(|v| v * v).sum()
}

pub fn linf(q: &[f64]) -> f64 {
    q.iter().copied().fold(0.0, f64::max)
}

/// Policy roster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    MaxWeight,
    MaxWeightGt,
    LpRandomized,
    SoftMw,
    Ssmw,
    SoftMwPlus,
    SsmwPlus,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::MaxWeight,
        PolicyKind::MaxWeightGt,
        PolicyKind::LpRandomized,
        PolicyKind::SoftMw,
        PolicyKind::Ssmw,
        PolicyKind::SoftMwPlus,
        PolicyKind::SsmwPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::MaxWeight => "maxweight",
            PolicyKind::MaxWeightGt => "maxweight-gt",
            PolicyKind::LpRandomized => "lp-randomized",
            PolicyKind::SoftMw => "softmw",
            PolicyKind::Ssmw => "ssmw",
            PolicyKind::SoftMwPlus => "softmw-plus",
            PolicyKind::SsmwPlus => "ssmw-plus",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn is_bandit(self) -> bool {
        matches!(self, PolicyKind::SoftMw | PolicyKind::Ssmw | PolicyKind::SoftMwPlus | PolicyKind::SsmwPlus)
    }

    fn display_name(self) -> &'static str {
        match self {
            PolicyKind::MaxWeight => "MaxWeight",
            PolicyKind::MaxWeightGt => "MaxWeightGT",
            PolicyKind::LpRandomized => "Randomized",
            PolicyKind::SoftMw => "SoftMW",
            PolicyKind::Ssmw => "SSMW",
            PolicyKind::SoftMwPlus => "SoftMW+",
            PolicyKind::SsmwPlus => "SSMW+",
        }
    }
}

/// Parameters shared by the bandit policies.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyConfig {
    pub bound: f64,
    pub queues: usize,
    pub delta: f64,
    pub alpha: Option<f64>,
}

/// A named policy entry of a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyDescriptor {
    pub kind: PolicyKind,
    pub label: String,
    /// Overrides the environment's `M` when set.
    pub bound: Option<f64>,
    pub delta: f64,
    pub alpha: Option<f64>,
}

impl PolicyDescriptor {
    pub fn new(kind: PolicyKind) -> Self {
        Self { kind, label: String::from(kind.display_name()), bound: None, delta: 0.0, alpha: None }
    }

    /// Bandit policy with smoothness `delta`; labelled like `SoftMW-0.1`.
    pub fn bandit(kind: PolicyKind, delta: f64) -> Self {
        Self { label: format!("{}-{}", kind.display_name(), delta), delta, ..Self::new(kind) }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = String::from(label);
        self
    }

    pub fn config(&self, env: &EnvironmentSpec) -> PolicyConfig {
        PolicyConfig { bound: self.bound.unwrap_or(env.bound), queues: env.queues, delta: self.delta, alpha: self.alpha }
    }

    pub fn validate(&self) -> Result<(), SchedError> {
        let bad = |msg: String| Err(SchedError::InvalidConfig(msg));
        if let Some(m) = self.bound {
            if !(m > 0.0) || !m.is_finite() {
                return bad(format!("{}: M must be positive, got {m}", self.label));
            }
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return bad(format!("{}: delta must be nonnegative, got {}", self.label, self.delta));
        }
        if self.kind == PolicyKind::SoftMwPlus {
            match self.alpha {
                Some(a) if a > 14.0 => {}
                other => return bad(format!("{}: softmw-plus needs alpha > 14, got {other:?}", self.label)),
            }
            if !(self.delta > 0.0 && self.delta <= 0.5) {
                return bad(format!("{}: softmw-plus needs 0 < delta <= 1/2, got {}", self.label, self.delta));
            }
        }
        Ok(())
    }

    /// Instantiates the policy for one run.
    pub fn build(&self, env: &EnvironmentSpec) -> Result<Box<dyn Policy>, SchedError> {
        self.validate()?;
        let cfg = self.config(env);
        let base = env.base_rates();
        Ok(match self.kind {
            PolicyKind::MaxWeight => Box::new(MaxWeight::nominal(base.sigma)),
            PolicyKind::MaxWeightGt => Box::new(MaxWeight::ground_truth(env.queues)),
            PolicyKind::LpRandomized => Box::new(LpRandomized::new(solve_reference_lp(&base)?.theta)),
            PolicyKind::SoftMw => Box::new(SoftMw::new(cfg, SoftMwVariant::Bounded)),
            PolicyKind::SoftMwPlus => Box::new(SoftMw::new(cfg, SoftMwVariant::Moments)),
            PolicyKind::Ssmw => Box::new(Ssmw::new(cfg, SsmwVariant::Bounded)),
            PolicyKind::SsmwPlus => Box::new(Ssmw::new(cfg, SsmwVariant::Moments)),
        })
    }
}

/// What the simulator shows a policy at the start of slot `t`.
#[derive(Clone, Copy, Debug)]
pub struct SlotView<'a> {
    pub t: usize,
    pub queues: &'a [f64],
    /// True service rates `sigma_t`; only MaxWeightGT looks at these.
    pub true_service_rates: &'a [f64],
}

/// Per-decision diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Decision {
    pub arm: usize,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub beta: Option<f64>,
    /// A new SSMW epoch began with this slot.
    pub epoch_start: bool,
}

pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    fn decide(&mut self, view: SlotView<'_>, rng: &mut dyn UniformSource) -> Result<Decision, SchedError>;

    /// Bandit feedback for the slot just decided. Returns the reward fed to
    /// the learner, if any.
    fn observe(&mut self, action: usize, service: f64, queues_new: &[f64]) -> Result<Option<f64>, SchedError>;

    /// Human-readable dump for failure reports.
    fn describe_state(&self) -> String;
}

/// `argmax_i Q_i * weight_i`, lowest index on ties.
pub fn maxweight_decide(queues: &[f64], weights: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, (&q, &w)) in queues.iter().zip(weights).enumerate() {
        let score = q * w;
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

pub fn lp_randomized_decide(theta: &MixedAction, rng: &mut dyn UniformSource) -> usize {
    sample_action(theta, rng)
}

pub struct MaxWeight {
    /// `None` means use the true per-slot rates.
    nominal: Option<Vec<f64>>,
    queues: usize,
}

impl MaxWeight {
    pub fn nominal(sigma: Vec<f64>) -> Self {
        let queues = sigma.len();
        Self { nominal: Some(sigma), queues }
    }

    pub fn ground_truth(queues: usize) -> Self {
        Self { nominal: None, queues }
    }
}

impl Policy for MaxWeight {
    fn kind(&self) -> PolicyKind {
        if self.nominal.is_some() { PolicyKind::MaxWeight } else { PolicyKind::MaxWeightGt }
    }

    fn decide(&mut self, view: SlotView<'_>, _rng: &mut dyn UniformSource) -> Result<Decision, SchedError> {
        let weights = self.nominal.as_deref().unwrap_or(view.true_service_rates);
        Ok(Decision { arm: maxweight_decide(view.queues, weights), ..Decision::default() })
    }

    fn observe(&mut self, _action: usize, _service: f64, _queues_new: &[f64]) -> Result<Option<f64>, SchedError> {
        Ok(None)
    }

    fn describe_state(&self) -> String {
        format!("{:?} over {} queues, nominal rates {:?}", self.kind(), self.queues, self.nominal)
    }
}

pub struct LpRandomized {
    theta: MixedAction,
}

impl LpRandomized {
    pub fn new(theta: MixedAction) -> Self {
        Self { theta }
    }
}

impl Policy for LpRandomized {
    fn kind(&self) -> PolicyKind {
        PolicyKind::LpRandomized
    }

    fn decide(&mut self, _view: SlotView<'_>, rng: &mut dyn UniformSource) -> Result<Decision, SchedError> {
        Ok(Decision { arm: lp_randomized_decide(&self.theta, rng), ..Decision::default() })
    }

    fn observe(&mut self, _action: usize, _service: f64, _queues_new: &[f64]) -> Result<Option<f64>, SchedError> {
        Ok(None)
    }

    fn describe_state(&self) -> String {
        format!("LP-randomized theta {:?}", self.theta.as_slice())
    }
}

/// `e = Q / |Q|_1`, or uniform when all queues are empty.
fn queue_direction(queues: &[f64]) -> (MixedAction, f64) {
    let total = l1(queues);
    if total > 0.0 {
        let w = queues.iter().map(|q| q / total).collect();
        (MixedAction::new(w).unwrap_or_else(|_| MixedAction::uniform(queues.len())), total)
    } else {
        (MixedAction::uniform(queues.len()), 0.0)
    }
}

/// Schedule for SoftMW at slot `t`, given `sum_{s<t} |Q_s|_2^2`.
///
/// `beta = t^-3 / K`,
/// `eta = 1 / (t^-(1/4 - delta/2) M sqrt(86 M^2 K^6 t^1.5 + sum))`,
/// `e = Q_{t-1} / |Q_{t-1}|_1`, `gamma = M eta |Q_{t-1}|_1`.
pub fn softmw_params(cfg: &PolicyConfig, sum_sq: f64, queues: &[f64], t: usize) -> Result<StepParams, MabError> {
    let tf = t as f64;
    let k = cfg.queues as f64;
    let m = cfg.bound;
    let beta = libm::pow(tf, -3.0) / k;
    let eta = softmw_eta(m, m, k, cfg.delta, tf, sum_sq);
    let (e, total) = queue_direction(queues);
    let gamma = if total > 0.0 { m * eta * total } else { 0.0 };
    StepParams::new(eta, beta, gamma, e)
}

fn softmw_eta(outer: f64, inner: f64, k: f64, delta: f64, t: f64, sum_sq: f64) -> f64 {
    let radicand = 86.0 * inner * inner * libm::pow(k, 6.0) * libm::pow(t, 1.5) + sum_sq;
    1.0 / (libm::pow(t, -(0.25 - delta / 2.0)) * outer * libm::sqrt(radicand))
}

/// Schedule for SoftMW+ at slot `t`, with running increment bound `L_{t-1}`.
///
/// Like [`softmw_params`] with `M` replaced by `L_{t-1}` inside `eta`,
/// `beta = t^-4 / K`, and `gamma = M t^(delta/4) eta |Q_{t-1}|_1`.
pub fn softmw_plus_params(
    cfg: &PolicyConfig,
    sum_sq: f64,
    increment_bound: f64,
    queues: &[f64],
    t: usize,
) -> Result<StepParams, MabError> {
    let tf = t as f64;
    let k = cfg.queues as f64;
    let beta = libm::pow(tf, -4.0) / k;
    let eta = softmw_eta(increment_bound, increment_bound, k, cfg.delta, tf, sum_sq);
    let (e, total) = queue_direction(queues);
    let gamma = if total > 0.0 { cfg.bound * libm::pow(tf, cfg.delta / 4.0) * eta * total } else { 0.0 };
    StepParams::new(eta, beta, gamma, e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SoftMwVariant {
    Bounded,
    /// SoftMW+: increment tracking and service clipping.
    Moments,
}

#[derive(Clone, Debug)]
struct Pending {
    params: StepParams,
    queue_served: f64,
    t: usize,
    queues_prev: Vec<f64>,
}

/// SoftMW and SoftMW+.
pub struct SoftMw {
    cfg: PolicyConfig,
    variant: SoftMwVariant,
    learner: LearnerState,
    sum_sq: f64,
    increment_bound: f64,
    pending: Option<Pending>,
}

impl SoftMw {
    pub fn new(cfg: PolicyConfig, variant: SoftMwVariant) -> Self {
        let learner = LearnerState::uniform(cfg.queues);
        let increment_bound = cfg.bound;
        Self { cfg, variant, learner, sum_sq: 0.0, increment_bound, pending: None }
    }

    pub fn learner(&self) -> &LearnerState {
        &self.learner
    }

    /// `L_t`, the largest queue increment seen so far (floored at `M`).
    pub fn increment_bound(&self) -> f64 {
        self.increment_bound
    }

    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    /// `S'` for SoftMW+: the service if at most `M t^(delta/4)`, else 0.
    pub fn clip_service(&self, service: f64, t: usize) -> f64 {
        clip_service(service, self.cfg.bound, self.cfg.delta, t)
    }
}

pub fn clip_service(service: f64, bound: f64, delta: f64, t: usize) -> f64 {
    if service <= bound * libm::pow(t as f64, delta / 4.0) { service } else { 0.0 }
}

impl Policy for SoftMw {
    fn kind(&self) -> PolicyKind {
        match self.variant {
            SoftMwVariant::Bounded => PolicyKind::SoftMw,
            SoftMwVariant::Moments => PolicyKind::SoftMwPlus,
        }
    }

    fn decide(&mut self, view: SlotView<'_>, rng: &mut dyn UniformSource) -> Result<Decision, SchedError> {
        self.sum_sq += l2_squared(view.queues);
        let params = match self.variant {
            SoftMwVariant::Bounded => softmw_params(&self.cfg, self.sum_sq, view.queues, view.t)?,
            SoftMwVariant::Moments => {
                softmw_plus_params(&self.cfg, self.sum_sq, self.increment_bound, view.queues, view.t)?
            }
        };
        let p = self.learner.sampling_distribution(&params)?;
        let arm = sample_action(&p, rng);
        let decision = Decision {
            arm,
            gamma: Some(params.gamma),
            eta: Some(params.eta),
            beta: Some(params.beta),
            epoch_start: false,
        };
        self.pending = Some(Pending {
            params,
            queue_served: view.queues[arm],
            t: view.t,
            queues_prev: view.queues.to_vec(),
        });
        Ok(decision)
    }

    fn observe(&mut self, action: usize, service: f64, queues_new: &[f64]) -> Result<Option<f64>, SchedError> {
        let pending = self.pending.take().ok_or(SchedError::NoPendingDecision)?;
        let effective = match self.variant {
            SoftMwVariant::Bounded => service,
            SoftMwVariant::Moments => self.clip_service(service, pending.t),
        };
        let reward = pending.queue_served * effective;
        self.learner.feed_reward(&pending.params, action, reward)?;
        if self.variant == SoftMwVariant::Moments {
            let step = queues_new
                .iter()
                .zip(&pending.queues_prev)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            self.increment_bound = self.increment_bound.max(step);
        }
        Ok(Some(reward))
    }

    fn describe_state(&self) -> String {
        format!(
            "{:?} round {} x {:?} sum|Q|^2 {} L {} last params {:?}",
            self.kind(),
            self.learner.round(),
            self.learner.x().as_slice(),
            self.sum_sq,
            self.increment_bound,
            self.learner.last_params()
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsmwVariant {
    Bounded,
    /// SSMW+: uniform exploration and per-epoch feedback clipping.
    Moments,
}

/// One EXP3.S+ run inside SSMW.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmwEpoch {
    /// Slot index `T0` after which the epoch started.
    pub start: usize,
    pub length: usize,
    /// 1-based position of the next decision within the epoch.
    pub tau: usize,
    pub beta: f64,
    pub eta: f64,
    pub snapshot: Vec<f64>,
    pub learner: LearnerState,
}

/// `m = max(ceil(|Q|_inf / 2M), 1)`.
pub fn epoch_length(queues: &[f64], bound: f64) -> usize {
    let m = libm::ceil(linf(queues) / (2.0 * bound));
    if m < 1.0 { 1 } else { m as usize }
}

/// Opens a new epoch at slot `t` from `Q_{t-1}`.
///
/// SSMW uses `beta = m^-2 / K`, `eta = 1 / (6 M^2 K m^(1 + delta/2))`;
/// SSMW+ uses `beta = m^-3 / K`, `eta = 1 / (4 M^3 K m^(1 + 2 delta/3))`.
/// The learner starts from `previous` re-projected onto the new floor, or
/// uniform when there is no previous epoch.
pub fn ssmw_start_epoch(
    cfg: &PolicyConfig,
    variant: SsmwVariant,
    previous: Option<&MixedAction>,
    queues: &[f64],
    t: usize,
) -> Result<SsmwEpoch, MabError> {
    let m = epoch_length(queues, cfg.bound);
    let (mf, k, bound) = (m as f64, cfg.queues as f64, cfg.bound);
    let (beta, eta) = match variant {
        SsmwVariant::Bounded => (
            1.0 / (mf * mf * k),
            1.0 / (6.0 * bound * bound * k * libm::pow(mf, 1.0 + cfg.delta / 2.0)),
        ),
        SsmwVariant::Moments => (
            1.0 / (mf * mf * mf * k),
            1.0 / (4.0 * bound * bound * bound * k * libm::pow(mf, 1.0 + 2.0 * cfg.delta / 3.0)),
        ),
    };
    let x1 = match previous {
        Some(x) => crate::mab::project_floored_simplex(x.as_slice(), beta)?,
        None => MixedAction::uniform(cfg.queues),
    };
    Ok(SsmwEpoch {
        start: t - 1,
        length: m,
        tau: 1,
        beta,
        eta,
        snapshot: queues.to_vec(),
        learner: LearnerState::new(x1),
    })
}

/// Per-slot parameters inside an epoch.
///
/// SSMW: `e = Q_{T0+tau-1} / |.|_1`, `gamma = M eta |Q_{T0+tau-1}|_1`.
/// SSMW+: `e` uniform, `gamma = m^-(1 + delta/3) |Q_{T0}|_inf / (4 M^2)`.
pub fn ssmw_params(
    cfg: &PolicyConfig,
    variant: SsmwVariant,
    epoch: &SsmwEpoch,
    queues: &[f64],
) -> Result<StepParams, MabError> {
    match variant {
        SsmwVariant::Bounded => {
            let (e, total) = queue_direction(queues);
            let gamma = if total > 0.0 { cfg.bound * epoch.eta * total } else { 0.0 };
            StepParams::new(epoch.eta, epoch.beta, gamma, e)
        }
        SsmwVariant::Moments => {
            let mf = epoch.length as f64;
            let gamma = 0.25 / (cfg.bound * cfg.bound)
                * libm::pow(mf, -1.0 - cfg.delta / 3.0)
                * linf(&epoch.snapshot);
            StepParams::new(epoch.eta, epoch.beta, gamma, MixedAction::uniform(cfg.queues))
        }
    }
}

/// SSMW+ reward: `Q_{t-1,a} S` if at most `m^(delta/3) M Q_{T0,a}`, else 0.
pub fn ssmw_plus_feedback(raw: f64, epoch_length: usize, delta: f64, bound: f64, snapshot_queue: f64) -> f64 {
    let threshold = libm::pow(epoch_length as f64, delta / 3.0) * bound * snapshot_queue;
    if raw <= threshold { raw } else { 0.0 }
}

/// SSMW and SSMW+.
pub struct Ssmw {
    cfg: PolicyConfig,
    variant: SsmwVariant,
    epoch: Option<SsmwEpoch>,
    last_x: Option<MixedAction>,
    pending: Option<(StepParams, f64)>,
    epochs_started: usize,
}

impl Ssmw {
    pub fn new(cfg: PolicyConfig, variant: SsmwVariant) -> Self {
        Self { cfg, variant, epoch: None, last_x: None, pending: None, epochs_started: 0 }
    }

    pub fn epoch(&self) -> Option<&SsmwEpoch> {
        self.epoch.as_ref()
    }

    pub fn epochs_started(&self) -> usize {
        self.epochs_started
    }
}

impl Policy for Ssmw {
    fn kind(&self) -> PolicyKind {
        match self.variant {
            SsmwVariant::Bounded => PolicyKind::Ssmw,
            SsmwVariant::Moments => PolicyKind::SsmwPlus,
        }
    }

    fn decide(&mut self, view: SlotView<'_>, rng: &mut dyn UniformSource) -> Result<Decision, SchedError> {
        let mut epoch_start = false;
        if self.epoch.is_none() {
            self.epoch = Some(ssmw_start_epoch(&self.cfg, self.variant, self.last_x.as_ref(), view.queues, view.t)?);
            self.epochs_started += 1;
            epoch_start = true;
        }
        let epoch = self.epoch.as_ref().expect("epoch active");
        let params = ssmw_params(&self.cfg, self.variant, epoch, view.queues)?;
        let p = epoch.learner.sampling_distribution(&params)?;
        let arm = sample_action(&p, rng);
        let decision = Decision {
            arm,
            gamma: Some(params.gamma),
            eta: Some(params.eta),
            beta: Some(params.beta),
            epoch_start,
        };
        self.pending = Some((params, view.queues[arm]));
        Ok(decision)
    }

    fn observe(&mut self, action: usize, service: f64, _queues_new: &[f64]) -> Result<Option<f64>, SchedError> {
        let (params, queue_served) = self.pending.take().ok_or(SchedError::NoPendingDecision)?;
        let epoch = self.epoch.as_mut().ok_or(SchedError::NoPendingDecision)?;
        let raw = queue_served * service;
        let reward = match self.variant {
            SsmwVariant::Bounded => raw,
            SsmwVariant::Moments => {
                ssmw_plus_feedback(raw, epoch.length, self.cfg.delta, self.cfg.bound, epoch.snapshot[action])
            }
        };
        epoch.learner.feed_reward(&params, action, reward)?;
        epoch.tau += 1;
        if epoch.tau > epoch.length {
            let finished = self.epoch.take().expect("epoch active");
            self.last_x = Some(finished.learner.x().clone());
        }
        Ok(Some(reward))
    }

    fn describe_state(&self) -> String {
        match &self.epoch {
            Some(e) => format!(
                "{:?} epoch #{} T0 {} m {} tau {} beta {} eta {} x {:?} snapshot {:?}",
                self.kind(),
                self.epochs_started,
                e.start,
                e.length,
                e.tau,
                e.beta,
                e.eta,
                e.learner.x().as_slice(),
                e.snapshot
            ),
            None => format!("{:?} between epochs, last x {:?}", self.kind(), self.last_x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{CounterRng, Purpose};

    fn cfg(k: usize, m: f64, delta: f64) -> PolicyConfig {
        PolicyConfig { bound: m, queues: k, delta, alpha: None }
    }

    #[test]
    fn maxweight_examples() {
        assert_eq!(maxweight_decide(&[0.0; 5], &[0.9, 0.85, 0.8, 0.59, 0.39]), 0);
        assert_eq!(maxweight_decide(&[10.0, 2.0], &[0.5, 0.9]), 0);
        assert_eq!(maxweight_decide(&[1.0, 1.0], &[0.3, 0.7]), 1);
    }

    #[test]
    fn lp_randomized_degenerate() {
        let mut rng = CounterRng::new(3, Purpose::Decision);
        for _ in 0..50 {
            assert_eq!(lp_randomized_decide(&MixedAction::vertex(2, 0), &mut rng), 0);
            assert_eq!(lp_randomized_decide(&MixedAction::vertex(3, 2), &mut rng), 2);
        }
    }

    #[test]
    fn softmw_first_slot() {
        let p = softmw_params(&cfg(5, 1.0, 0.1), 0.0, &[0.0; 5], 1).unwrap();
        assert_eq!(p.beta, 0.2);
        assert_eq!(p.gamma, 0.0);
        let expected = 1.0 / (86.0f64 * 5f64.powi(6)).sqrt();
        assert!((p.eta - expected).abs() < 1e-15 * expected.max(1.0));
        assert_eq!(p.explore_dir, MixedAction::uniform(5));
    }

    #[test]
    fn softmw_gamma_and_direction() {
        let c = cfg(2, 1.0, 0.5);
        let q = [3.0, 1.0];
        let p = softmw_params(&c, 10.0, &q, 4).unwrap();
        let eta = 1.0 / (1.0 * (86.0 * 64.0 * 8.0 + 10.0f64).sqrt());
        assert!((p.eta - eta).abs() < 1e-15);
        assert!((p.gamma - eta * 4.0).abs() < 1e-15);
        assert_eq!(p.explore_dir.as_slice(), &[0.75, 0.25]);
        // reward bound on arm i is exactly M Q_i
        assert!((p.reward_bound(0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmw_plus_first_slot() {
        let p = softmw_plus_params(&cfg(5, 1.0, 0.5), 0.0, 1.0, &[0.0; 5], 1).unwrap();
        assert_eq!(p.gamma, 0.0);
        assert_eq!(p.beta, 0.2);
        let p = softmw_plus_params(&cfg(5, 1.0, 0.5), 0.0, 1.0, &[0.0; 5], 2).unwrap();
        assert_eq!(p.beta, 1.0 / 16.0 / 5.0);
    }

    #[test]
    fn softmw_plus_clip() {
        // M t^(delta/4) = 2 at M = 1, delta = 4 log2(t) / log2(t)... pick t = 16, delta = 1 -> 16^0.25 = 2
        assert_eq!(clip_service(5.0, 1.0, 1.0, 16), 0.0);
        assert_eq!(clip_service(2.0, 1.0, 1.0, 16), 2.0);
        assert_eq!(clip_service(1.5, 1.0, 1.0, 16), 1.5);
    }

    #[test]
    fn increment_tracker_is_running_max() {
        let c = PolicyConfig { alpha: Some(16.0), ..cfg(1, 1.0, 0.5) };
        let mut p = SoftMw::new(c, SoftMwVariant::Moments);
        let mut rng = CounterRng::new(0, Purpose::Decision);
        let mut q = 0.0;
        let mut seen = Vec::new();
        for (t, inc) in [3.0, 1.0, 5.0].into_iter().enumerate() {
            p.decide(SlotView { t: t + 1, queues: &[q], true_service_rates: &[1.0] }, &mut rng).unwrap();
            let next = q + inc;
            p.observe(0, 0.0, &[next]).unwrap();
            q = next;
            seen.push(p.increment_bound());
        }
        assert_eq!(seen, vec![3.0, 3.0, 5.0]);
    }

    #[test]
    fn epoch_lengths() {
        assert_eq!(epoch_length(&[10.0, 3.0], 1.0), 5);
        assert_eq!(epoch_length(&[0.0, 0.0], 1.0), 1);
        assert_eq!(epoch_length(&[11.0], 1.0), 6);
        let e = ssmw_start_epoch(&cfg(5, 1.0, 0.1), SsmwVariant::Bounded, None, &[10.0, 0.0, 0.0, 0.0, 0.0], 7).unwrap();
        assert_eq!(e.length, 5);
        assert_eq!(e.start, 6);
        assert!((e.beta - 1.0 / 125.0).abs() < 1e-18);
    }

    #[test]
    fn ssmw_parameter_formulas() {
        let c = cfg(2, 1.0, 0.5);
        let e = ssmw_start_epoch(&c, SsmwVariant::Bounded, None, &[8.0, 0.0], 1).unwrap();
        assert_eq!(e.length, 4);
        let p = ssmw_params(&c, SsmwVariant::Bounded, &e, &[4.0, 2.0]).unwrap();
        let eta = 1.0 / (6.0 * 2.0 * 4f64.powf(1.25));
        assert!((p.eta - eta).abs() < 1e-15);
        assert!((p.gamma - 6.0 * eta).abs() < 1e-15);

        let c = cfg(3, 1.0, 0.3);
        let e = ssmw_start_epoch(&c, SsmwVariant::Moments, None, &[15.0, 4.0, 0.0], 1).unwrap();
        assert_eq!(e.length, 8);
        assert!((e.beta - 1.0 / (512.0 * 3.0)).abs() < 1e-18);
        let e = SsmwEpoch { snapshot: vec![4.0, 1.0, 0.0], ..e };
        let p = ssmw_params(&c, SsmwVariant::Moments, &e, &[100.0, 0.0, 0.0]).unwrap();
        assert!((p.gamma - 0.25 * 8f64.powf(-1.1) * 4.0).abs() < 1e-15);
        assert_eq!(p.explore_dir, MixedAction::uniform(3));
    }

    #[test]
    fn ssmw_plus_clip() {
        // m^(delta/3) M Q_{T0,a} = 10 with m = 8, delta = 0: 1 * 1 * 10
        assert_eq!(ssmw_plus_feedback(12.0, 8, 0.0, 1.0, 10.0), 0.0);
        assert_eq!(ssmw_plus_feedback(10.0, 8, 0.0, 1.0, 10.0), 10.0);
        // empty snapshot queue drops all positive feedback
        assert_eq!(ssmw_plus_feedback(1.0, 8, 0.3, 1.0, 0.0), 0.0);
    }

    #[test]
    fn ssmw_warm_start_reprojects() {
        let c = cfg(2, 1.0, 0.0);
        let prev = MixedAction::new(vec![0.9, 0.1]).unwrap();
        // m = 1 -> beta = 1/2: floored simplex is just the uniform point
        let e = ssmw_start_epoch(&c, SsmwVariant::Bounded, Some(&prev), &[0.0, 0.0], 3).unwrap();
        assert_eq!(e.learner.x().as_slice(), &[0.5, 0.5]);
        // m = 5 -> beta = 1/50: already feasible, unchanged
        let e = ssmw_start_epoch(&c, SsmwVariant::Bounded, Some(&prev), &[10.0, 0.0], 3).unwrap();
        assert!((e.learner.x().as_slice()[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn softmw_empty_queues_sample_uniformly() {
        let d = PolicyDescriptor::bandit(PolicyKind::SoftMw, 0.1);
        let env = EnvironmentSpec {
            queues: 2,
            bound: 1.0,
            horizon: 1,
            arrivals: crate::env::Process::Bernoulli { rates: vec![0.0, 0.0] },
            services: crate::env::Process::Bernoulli { rates: vec![1.0, 1.0] },
            noise_seed: 0,
        };
        let mut counts = [0usize; 2];
        for seed in 0..2000 {
            let mut p = d.build(&env).unwrap();
            let mut rng = CounterRng::new(seed, Purpose::Decision);
            let dec = p.decide(SlotView { t: 1, queues: &[0.0, 0.0], true_service_rates: &[1.0, 1.0] }, &mut rng).unwrap();
            assert_eq!(dec.gamma, Some(0.0));
            counts[dec.arm] += 1;
        }
        assert!(counts[0] > 900 && counts[1] > 900, "{counts:?}");
    }

    #[test]
    fn descriptor_validation() {
        let d = PolicyDescriptor::bandit(PolicyKind::SoftMwPlus, 0.5);
        assert!(d.validate().is_err());
        assert!(d.clone().with_alpha(14.0).validate().is_err());
        assert!(d.clone().with_alpha(16.0).validate().is_ok());
        let d = PolicyDescriptor::bandit(PolicyKind::SoftMwPlus, 0.6).with_alpha(16.0);
        assert!(d.validate().is_err());
        assert!(PolicyDescriptor::bandit(PolicyKind::Ssmw, 0.0).validate().is_ok());
        assert_eq!(PolicyDescriptor::bandit(PolicyKind::Ssmw, 0.1).label, "SSMW-0.1");
        assert_eq!(PolicyKind::from_name("maxweight-gt"), Some(PolicyKind::MaxWeightGt));
        assert_eq!(PolicyKind::from_name("nope"), None);
    }

    #[test]
    fn observe_without_decide() {
        let mut p = SoftMw::new(cfg(2, 1.0, 0.1), SoftMwVariant::Bounded);
        assert_eq!(p.observe(0, 1.0, &[0.0, 0.0]), Err(SchedError::NoPendingDecision));
    }
}
