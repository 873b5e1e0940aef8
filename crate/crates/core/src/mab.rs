//! EXP3.S+ learner: mirror descent with the negative-entropy regularizer over
//! a floored simplex, mixed with an explicit exploration direction, fed by
//! one-hot importance-weighted rewards.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::rng::UniformSource;

/// Absolute tolerance on `sum(weights) == 1`.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance on floored-simplex membership.
pub const FLOOR_TOLERANCE: f64 = 1e-12;
/// Slack allowed on the reward bound `g <= gamma * e_a / eta`.
pub const REWARD_SLACK: f64 = 1e-9;
/// Largest exponent accepted in the multiplicative update.
pub const EXPONENT_LIMIT: f64 = 700.0;

#[derive(Clone, Debug, PartialEq)]
pub enum MabError {
    EmptyAction,
    NotADistribution { sum: f64 },
    NegativeWeight { index: usize, value: f64 },
    NonFiniteScaled { index: usize, value: f64 },
    NonPositiveScaled { index: usize, value: f64 },
    InfeasibleFloor { beta: f64, arms: usize },
    InvalidEta(f64),
    InvalidBeta(f64),
    /// Explicit exploration above 1/2.
    GammaOutOfRange(f64),
    DimensionMismatch { expected: usize, found: usize },
    ActionOutOfRange { action: usize, arms: usize },
    /// The reward exceeds `gamma * e_a / eta`; the schedule is wrong.
    FeedbackTooLarge { reward: f64, bound: f64 },
    /// `eta * g~` left its admissible range (should be at most 1).
    ExponentOutOfRange(f64),
    /// eta or beta increased between consecutive rounds of one instance.
    ScheduleNotMonotone { what: &'static str, previous: f64, current: f64 },
}

impl fmt::Display for MabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MabError::EmptyAction => write!(f, "mixed action has no arms"),
            MabError::NotADistribution { sum } => write!(f, "weights sum to {sum}, not 1"),
            MabError::NegativeWeight { index, value } => {
                write!(f, "weight {index} is negative ({value})")
            }
            MabError::NonFiniteScaled { index, value } => {
                write!(f, "scaled entry {index} is not finite ({value}); rescale before exponentiating")
            }
            MabError::NonPositiveScaled { index, value } => {
                write!(f, "scaled entry {index} is not positive ({value})")
            }
            MabError::InfeasibleFloor { beta, arms } => {
                write!(f, "floor {beta} is infeasible for {arms} arms")
            }
            MabError::InvalidEta(v) => write!(f, "learning rate must be positive and finite, got {v}"),
            MabError::InvalidBeta(v) => write!(f, "implicit exploration floor out of range: {v}"),
            MabError::GammaOutOfRange(v) => write!(f, "explicit exploration rate {v} outside [0, 1/2]"),
            MabError::DimensionMismatch { expected, found } => {
                write!(f, "expected {expected} arms, found {found}")
            }
            MabError::ActionOutOfRange { action, arms } => {
                write!(f, "action {action} out of range for {arms} arms")
            }
            MabError::FeedbackTooLarge { reward, bound } => {
                write!(f, "feedback {reward} exceeds exploration bound {bound}")
            }
            MabError::ExponentOutOfRange(v) => write!(f, "update exponent {v} out of range"),
            MabError::ScheduleNotMonotone { what, previous, current } => {
                write!(f, "{what} increased from {previous} to {current}")
            }
        }
    }
}

impl core::error::Error for MabError {}

/// A point of the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedAction(Vec<f64>);

impl MixedAction {
    pub fn new(weights: Vec<f64>) -> Result<Self, MabError> {
        if weights.is_empty() {
            return Err(MabError::EmptyAction);
        }
        let mut sum = 0.0;
        for (index, &value) in weights.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(MabError::NegativeWeight { index, value });
            }
            sum += value;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(MabError::NotADistribution { sum });
        }
        Ok(Self(weights))
    }

    pub fn uniform(arms: usize) -> Self {
        assert!(arms > 0, "uniform action needs at least one arm");
        Self(vec![1.0 / arms as f64; arms])
    }

    /// Point mass on `arm`.
    pub fn vertex(arms: usize, arm: usize) -> Self {
        let mut w = vec![0.0; arms];
        w[arm] = 1.0;
        Self(w)
    }

    pub fn arms(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min_weight(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Whether every coordinate is at least `beta`, up to [`FLOOR_TOLERANCE`].
    pub fn respects_floor(&self, beta: f64) -> bool {
        self.min_weight() >= beta - FLOOR_TOLERANCE
    }
}

/// One round's configuration of the learner.
#[derive(Clone, Debug, PartialEq)]
pub struct StepParams {
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub explore_dir: MixedAction,
}

impl StepParams {
    pub fn new(eta: f64, beta: f64, gamma: f64, explore_dir: MixedAction) -> Result<Self, MabError> {
        let arms = explore_dir.arms();
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(MabError::InvalidEta(eta));
        }
        if !(beta >= 0.0) || beta * arms as f64 > 1.0 + FLOOR_TOLERANCE {
            return Err(MabError::InvalidBeta(beta));
        }
        if !(gamma >= 0.0) || gamma > 0.5 {
            return Err(MabError::GammaOutOfRange(gamma));
        }
        Ok(Self { eta, beta, gamma, explore_dir })
    }

    /// Largest reward the learner accepts on `arm`: `gamma * e_arm / eta`.
    pub fn reward_bound(&self, arm: usize) -> f64 {
        self.gamma * self.explore_dir.as_slice()[arm] / self.eta
    }
}

/// KL (Bregman) projection of `scaled` onto `{x in simplex : x_i >= beta}`.
///
/// `scaled[i]` is `x_i * exp(eta * g_i)`. The minimizer keeps the smallest
/// coordinates pinned at `beta` and spreads the remaining mass proportionally
/// to `scaled` over the rest; the number of pinned coordinates is found by
/// scanning boundary indices in ascending order of `scaled`.
pub fn project_floored_simplex(scaled: &[f64], beta: f64) -> Result<MixedAction, MabError> {
    let arms = scaled.len();
    if arms == 0 {
        return Err(MabError::EmptyAction);
    }
    for (index, &value) in scaled.iter().enumerate() {
        if !value.is_finite() {
            return Err(MabError::NonFiniteScaled { index, value });
        }
        if !(value > 0.0) {
            return Err(MabError::NonPositiveScaled { index, value });
        }
    }
    if !(beta >= 0.0) {
        return Err(MabError::InvalidBeta(beta));
    }
    let floor_mass = beta * arms as f64;
    if floor_mass > 1.0 + FLOOR_TOLERANCE {
        return Err(MabError::InfeasibleFloor { beta, arms });
    }
    if floor_mass >= 1.0 - FLOOR_TOLERANCE {
        // The floored simplex has collapsed to the uniform point.
        return Ok(MixedAction::uniform(arms));
    }

    let mut order: Vec<usize> = (0..arms).collect();
    // Stable sort: ties stay in index order.
    order.sort_by(|&a, &b| scaled[a].total_cmp(&scaled[b]));

    // suffix[i] = sum of scaled over order[i..]
    let mut suffix = vec![0.0; arms + 1];
    for i in (0..arms).rev() {
        suffix[i] = suffix[i + 1] + scaled[order[i]];
    }

    let mut boundary = arms - 1;
    for i in 0..arms {
        let mass = 1.0 - beta * i as f64;
        let smallest_free = mass * scaled[order[i]] / suffix[i];
        if smallest_free >= beta {
            boundary = i;
            break;
        }
    }

    let mut out = vec![0.0; arms];
    let mass = 1.0 - beta * boundary as f64;
    for (rank, &idx) in order.iter().enumerate() {
        out[idx] = if rank < boundary {
            beta
        } else {
            mass * scaled[idx] / suffix[boundary]
        };
    }
    Ok(MixedAction(out))
}

/// `(1 - gamma) x + gamma e`.
pub fn mix_exploration(x: &MixedAction, gamma: f64, e: &MixedAction) -> Result<MixedAction, MabError> {
    if x.arms() != e.arms() {
        return Err(MabError::DimensionMismatch { expected: x.arms(), found: e.arms() });
    }
    if !(0.0..=0.5).contains(&gamma) {
        return Err(MabError::GammaOutOfRange(gamma));
    }
    let w = x
        .as_slice()
        .iter()
        .zip(e.as_slice())
        .map(|(&xi, &ei)| (1.0 - gamma) * xi + gamma * ei)
        .collect();
    Ok(MixedAction(w))
}

/// Inverse-CDF draw: the smallest `i` with `u < p_0 + ... + p_i`.
pub fn sample_with_uniform(p: &MixedAction, u: f64) -> usize {
    let w = p.as_slice();
    let mut cumulative = 0.0;
    for (i, &pi) in w.iter().enumerate() {
        cumulative += pi;
        if u < cumulative {
            return i;
        }
    }
    // Round-off left u above the final partial sum.
    w.iter().rposition(|&pi| pi > 0.0).unwrap_or(w.len() - 1)
}

/// Draws one arm from `p` using a single uniform variate.
pub fn sample_action<R: UniformSource + ?Sized>(p: &MixedAction, rng: &mut R) -> usize {
    sample_with_uniform(p, rng.next_f64())
}

/// Learner state `x_t` together with the last round's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState {
    x: MixedAction,
    last_params: Option<StepParams>,
    round: u64,
}

impl LearnerState {
    pub fn new(x1: MixedAction) -> Self {
        Self { x: x1, last_params: None, round: 0 }
    }

    pub fn uniform(arms: usize) -> Self {
        Self::new(MixedAction::uniform(arms))
    }

    pub fn x(&self) -> &MixedAction {
        &self.x
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn last_params(&self) -> Option<&StepParams> {
        self.last_params.as_ref()
    }

    /// The sampling distribution `p_t` for this round.
    pub fn sampling_distribution(&self, params: &StepParams) -> Result<MixedAction, MabError> {
        mix_exploration(&self.x, params.gamma, &params.explore_dir)
    }

    /// Importance-weighted update after playing `action` and seeing `reward`.
    pub fn feed_reward(&mut self, params: &StepParams, action: usize, reward: f64) -> Result<(), MabError> {
        let arms = self.x.arms();
        if params.explore_dir.arms() != arms {
            return Err(MabError::DimensionMismatch { expected: arms, found: params.explore_dir.arms() });
        }
        if action >= arms {
            return Err(MabError::ActionOutOfRange { action, arms });
        }
        if let Some(prev) = &self.last_params {
            if params.eta > prev.eta * (1.0 + 1e-12) {
                return Err(MabError::ScheduleNotMonotone { what: "eta", previous: prev.eta, current: params.eta });
            }
            if params.beta > prev.beta + FLOOR_TOLERANCE {
                return Err(MabError::ScheduleNotMonotone { what: "beta", previous: prev.beta, current: params.beta });
            }
        }
        let bound = params.reward_bound(action);
        if !(reward >= 0.0) || reward > bound + REWARD_SLACK {
            return Err(MabError::FeedbackTooLarge { reward, bound });
        }

        let p_action = (1.0 - params.gamma) * self.x.as_slice()[action]
            + params.gamma * params.explore_dir.as_slice()[action];
        let exponent = if reward == 0.0 { 0.0 } else { params.eta * reward / p_action };
        if !(exponent <= 1.0 + 1e-6) || exponent > EXPONENT_LIMIT {
            return Err(MabError::ExponentOutOfRange(exponent));
        }

        // Shift by the largest exponent (the played arm's) so nothing overflows.
        let damp = libm::exp(-exponent);
        let scaled: Vec<f64> = self
            .x
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &xi)| if i == action { xi } else { xi * damp })
            .collect();
        self.x = project_floored_simplex(&scaled, params.beta)?;
        self.last_params = Some(params.clone());
        self.round += 1;
        Ok(())
    }
}
