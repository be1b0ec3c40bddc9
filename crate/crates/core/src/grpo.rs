//! Group-relative advantages and the clipped surrogate objective.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RltError};

pub const DEFAULT_ADVANTAGE_EPS: f64 = 1e-6;
pub const DEFAULT_CLIP_EPS: f64 = 0.2;

/// G sampled outputs for one prompt together with their rewards and
/// normalized advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub prompt_id: String,
    pub outputs: Vec<String>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Action index behind each output (toy policies only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<usize>,
    /// Sequence log-probabilities under the sampling policy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub logprobs_old: Vec<f64>,
}

impl RolloutGroup {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        mean(&self.rewards)
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by `n`).
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// `A_i = (R_i - mean(R)) / (popstd(R) + eps)`.
///
/// Groups whose rewards are all identical get exactly zero advantages
/// regardless of `eps`.
pub fn group_advantages(rewards: &[f64], eps: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(RltError::GroupTooSmall(rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(RltError::NonFinite("rewards"));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(RltError::InvalidConfig(format!("advantage eps must be >= 0, got {eps}")));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let m = mean(rewards);
    let denom = population_std(rewards) + eps;
    Ok(rewards.iter().map(|r| (r - m) / denom).collect())
}

fn check_objective_inputs(new: &[f64], old: &[f64], adv: &[f64], clip_eps: f64) -> Result<()> {
    if new.len() != old.len() {
        return Err(RltError::LengthMismatch {
            what: "logprob_new vs logprob_old",
            left: new.len(),
            right: old.len(),
        });
    }
    if new.len() != adv.len() {
        return Err(RltError::LengthMismatch {
            what: "logprob_new vs advantages",
            left: new.len(),
            right: adv.len(),
        });
    }
    if new.is_empty() {
        return Err(RltError::Empty("grpo objective"));
    }
    if !(clip_eps > 0.0 && clip_eps.is_finite()) {
        return Err(RltError::InvalidConfig(format!("clip_eps must be > 0, got {clip_eps}")));
    }
    for (name, xs) in [("logprob_new", new), ("logprob_old", old), ("advantages", adv)] {
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(RltError::NonFinite(name));
        }
    }
    Ok(())
}

/// Mean clipped surrogate `min(r A, clip(r, 1-e, 1+e) A)` with
/// `r = exp(new - old)`. Larger is better.
pub fn grpo_step_objective(
    logprob_new: &[f64],
    logprob_old: &[f64],
    advantages: &[f64],
    clip_eps: f64,
) -> Result<f64> {
    check_objective_inputs(logprob_new, logprob_old, advantages, clip_eps)?;
    let total: f64 = logprob_new
        .iter()
        .zip(logprob_old)
        .zip(advantages)
        .map(|((&n, &o), &a)| {
            let ratio = (n - o).exp();
            let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
            (ratio * a).min(clipped * a)
        })
        .sum();
    Ok(total / logprob_new.len() as f64)
}

/// Derivative of [`grpo_step_objective`] with respect to each `logprob_new`.
///
/// Inside the trust region this is `r A / G`; where the clipped branch is
/// active the term is constant and contributes zero.
pub fn grpo_objective_grad(
    logprob_new: &[f64],
    logprob_old: &[f64],
    advantages: &[f64],
    clip_eps: f64,
) -> Result<Vec<f64>> {
    check_objective_inputs(logprob_new, logprob_old, advantages, clip_eps)?;
    let g = logprob_new.len() as f64;
    Ok(logprob_new
        .iter()
        .zip(logprob_old)
        .zip(advantages)
        .map(|((&n, &o), &a)| {
            let ratio = (n - o).exp();
            let active = if a >= 0.0 {
                ratio <= 1.0 + clip_eps
            } else {
                ratio >= 1.0 - clip_eps
            };
            if active {
                ratio * a / g
            } else {
                0.0
            }
        })
        .collect())
}
