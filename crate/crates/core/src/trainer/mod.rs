//! Desk-scale GRPO loop over tabular toy policies.
//!
//! Each step samples a group of G actions per item, renders them through
//! the response template, scores them with the task reward, normalizes
//! the rewards within the group and takes one plain gradient-ascent step
//! on the clipped surrogate. There is no KL term and no critic.

pub mod policy;
pub mod synthetic;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::difficulty::DifficultyLabel;
use crate::error::{Result, RltError};
use crate::grpo::{self, RolloutGroup};
use crate::parser::{parse_response, render_response, ParsedResponse, TaskKind};
use crate::reward::{combined_reward, GroundTruth};
use crate::seed;

pub use policy::{
    CategoricalPolicy, GroundedPolicy, LogitTable, PolicyFactory, PolicyRegistry, SegmentGrid,
    SegmentPolicy, ToyPolicy,
};

/// Stand-in reasoning trace for toy outputs.
pub const THINK_PLACEHOLDER: &str = "look compare decide";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub group_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub clip_eps: f64,
    pub eps: f64,
    pub temperature: f64,
    pub rng_seed: u64,
    pub task: TaskKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            learning_rate: 1.0,
            steps: 500,
            clip_eps: grpo::DEFAULT_CLIP_EPS,
            eps: grpo::DEFAULT_ADVANTAGE_EPS,
            temperature: 1.0,
            rng_seed: 0,
            task: TaskKind::McQa,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RltError::InvalidConfig(msg));
        if self.group_size < 2 {
            return bad(format!("group_size must be >= 2, got {}", self.group_size));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.steps == 0 {
            return bad("steps must be > 0".into());
        }
        if !(self.clip_eps > 0.0) {
            return bad(format!("clip_eps must be > 0, got {}", self.clip_eps));
        }
        if !(self.eps >= 0.0) {
            return bad(format!("eps must be >= 0, got {}", self.eps));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be > 0, got {}", self.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyItem {
    pub id: String,
    pub gt: GroundTruth,
    /// Engineered difficulty, used to group gradient statistics.
    pub stratum: Option<DifficultyLabel>,
    pub init_logits: Option<Vec<f64>>,
}

impl ToyItem {
    fn stratum_key(&self) -> &'static str {
        self.stratum.map_or("all", DifficultyLabel::name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpus {
    pub task: TaskKind,
    pub n_choices: usize,
    pub timeline: f64,
    pub bins: usize,
    pub items: Vec<ToyItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepStats {
    pub mean_reward: f64,
    pub mean_abs_advantage: f64,
    pub grad_norm: f64,
    /// Norm of each group's gradient contribution, in group order.
    pub group_grad_norms: Vec<f64>,
}

fn item_index(policy: &dyn ToyPolicy, id: &str) -> Result<usize> {
    policy
        .table()
        .item_index(id)
        .ok_or_else(|| RltError::InvalidConfig(format!("item `{id}` not in policy")))
}

/// Samples `cfg.group_size` responses for one item and scores them.
pub fn rollout(
    policy: &dyn ToyPolicy,
    item: &ToyItem,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<RolloutGroup> {
    let idx = item_index(policy, &item.id)?;
    let table = policy.table();
    let mut group = RolloutGroup {
        prompt_id: item.id.clone(),
        outputs: Vec::with_capacity(cfg.group_size),
        rewards: Vec::with_capacity(cfg.group_size),
        advantages: Vec::new(),
        actions: Vec::with_capacity(cfg.group_size),
        logprobs_old: Vec::with_capacity(cfg.group_size),
    };
    for _ in 0..cfg.group_size {
        let action = table.sample(idx, cfg.temperature, rng);
        let text = render_response(THINK_PLACEHOLDER, &policy.payload(action));
        let reward = combined_reward(&parse_response(&text, item.gt.task), &item.gt)?.total;
        group.outputs.push(text);
        group.rewards.push(reward);
        group.actions.push(action);
        group.logprobs_old.push(table.log_prob(idx, action, cfg.temperature));
    }
    group.advantages = grpo::group_advantages(&group.rewards, cfg.eps)?;
    Ok(group)
}

fn new_logprobs(table: &LogitTable, item: usize, group: &RolloutGroup, temperature: f64) -> Vec<f64> {
    group
        .actions
        .iter()
        .map(|&a| table.log_prob(item, a, temperature))
        .collect()
}

/// Clipped surrogate of one group under the policy's current logits.
pub fn group_objective(policy: &dyn ToyPolicy, group: &RolloutGroup, cfg: &TrainConfig) -> Result<f64> {
    let idx = item_index(policy, &group.prompt_id)?;
    let lp = new_logprobs(policy.table(), idx, group, cfg.temperature);
    grpo::grpo_step_objective(&lp, &group.logprobs_old, &group.advantages, cfg.clip_eps)
}

/// Gradient of [`group_objective`] with respect to the item's logits.
///
/// Uses `d log p(a) / d z_k = (1[k = a] - p_k) / temperature`.
pub fn group_gradient(policy: &dyn ToyPolicy, group: &RolloutGroup, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let table = policy.table();
    let idx = item_index(policy, &group.prompt_id)?;
    let lp = new_logprobs(table, idx, group, cfg.temperature);
    let coef = grpo::grpo_objective_grad(&lp, &group.logprobs_old, &group.advantages, cfg.clip_eps)?;
    let probs = table.probs(idx, cfg.temperature);
    let total: f64 = coef.iter().sum();
    let mut grad: Vec<f64> = probs.iter().map(|p| -total * p / cfg.temperature).collect();
    for (&a, &c) in group.actions.iter().zip(&coef) {
        grad[a] += c / cfg.temperature;
    }
    Ok(grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One gradient-ascent step on the summed group objectives.
pub fn train_step(policy: &mut dyn ToyPolicy, groups: &[RolloutGroup], cfg: &TrainConfig) -> Result<StepStats> {
    if groups.is_empty() {
        return Err(RltError::Empty("train_step groups"));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(RltError::InvalidConfig(format!("learning_rate {}", cfg.learning_rate)));
    }

    let mut per_item: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut group_grad_norms = Vec::with_capacity(groups.len());
    for g in groups {
        let grad = group_gradient(&*policy, g, cfg)?;
        group_grad_norms.push(norm(&grad));
        let idx = item_index(&*policy, &g.prompt_id)?;
        let acc = per_item
            .entry(idx)
            .or_insert_with(|| vec![0.0; grad.len()]);
        acc.iter_mut().zip(&grad).for_each(|(a, g)| *a += g);
    }
    let grad_norm = per_item
        .values()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if !grad_norm.is_finite() {
        let bad: Vec<_> = per_item
            .iter()
            .filter(|(_, g)| g.iter().any(|x| !x.is_finite()))
            .map(|(i, _)| policy.table().ids()[*i].clone())
            .collect();
        return Err(RltError::NonFiniteGradient {
            step: 0,
            detail: format!("non-finite gradient for items {bad:?}"),
        });
    }

    let table = policy.table_mut();
    for (idx, grad) in &per_item {
        for (z, g) in table.logits_mut(*idx).iter_mut().zip(grad) {
            *z += cfg.learning_rate * g;
        }
    }

    let n_samples: usize = groups.iter().map(RolloutGroup::len).sum();
    let reward_sum: f64 = groups.iter().flat_map(|g| &g.rewards).sum();
    let adv_sum: f64 = groups.iter().flat_map(|g| &g.advantages).map(|a| a.abs()).sum();
    Ok(StepStats {
        mean_reward: reward_sum / n_samples as f64,
        mean_abs_advantage: adv_sum / n_samples as f64,
        grad_norm,
        group_grad_norms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    /// Mean sampled reward (format + task components).
    pub mean_reward: f64,
    /// Exact expected task metric under the updated policy: accuracy for
    /// MC-QA, tIoU for grounding, their average for grounded QA.
    pub expected_metric: f64,
    pub mean_abs_advantage: f64,
    pub grad_norm: f64,
    /// Mean per-item gradient norm, keyed by difficulty stratum.
    pub stratum_grad_norm: BTreeMap<String, f64>,
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurves {
    pub task: TaskKind,
    pub initial_metric: f64,
    pub initial_entropy: f64,
    pub points: Vec<CurvePoint>,
}

impl LearningCurves {
    pub fn final_metric(&self) -> f64 {
        self.points.last().map_or(self.initial_metric, |p| p.expected_metric)
    }

    pub fn final_entropy(&self) -> f64 {
        self.points.last().map_or(self.initial_entropy, |p| p.mean_entropy)
    }

    /// First step at which the expected metric reached `target`.
    pub fn first_step_reaching(&self, target: f64) -> Option<usize> {
        self.points
            .iter()
            .find(|p| p.expected_metric >= target)
            .map(|p| p.step)
    }

    /// Time-averaged gradient norm of a stratum over the first `steps` points.
    pub fn mean_stratum_grad_norm(&self, stratum: &str, steps: usize) -> f64 {
        let window = &self.points[..steps.min(self.points.len())];
        let sum: f64 = window
            .iter()
            .map(|p| p.stratum_grad_norm.get(stratum).copied().unwrap_or(0.0))
            .sum();
        sum / window.len().max(1) as f64
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Task metric of every action, per item (`NaN` for masked actions).
fn action_values(policy: &dyn ToyPolicy, corpus: &ToyCorpus) -> Result<Vec<Vec<f64>>> {
    let table = policy.table();
    corpus
        .items
        .iter()
        .map(|item| {
            let mut values = vec![f64::NAN; table.n_actions()];
            for a in table.valid_actions() {
                let parsed = ParsedResponse {
                    task: item.gt.task,
                    think: String::new(),
                    payload: Some(policy.payload(a)),
                    format_ok: true,
                };
                let b = combined_reward(&parsed, &item.gt)?;
                values[a] = b.total - f64::from(b.r_format);
            }
            Ok(values)
        })
        .collect()
}

fn expected_metric(policy: &dyn ToyPolicy, values: &[Vec<f64>], temperature: f64) -> f64 {
    let table = policy.table();
    let total: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            table
                .probs(i, temperature)
                .iter()
                .zip(v)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, x)| p * x)
                .sum::<f64>()
        })
        .sum();
    total / values.len() as f64
}

fn mean_entropy(policy: &dyn ToyPolicy, temperature: f64) -> f64 {
    let t = policy.table();
    (0..t.n_items()).map(|i| t.entropy(i, temperature)).sum::<f64>() / t.n_items() as f64
}

pub fn build_policy(corpus: &ToyCorpus, registry: &PolicyRegistry) -> Result<Box<dyn ToyPolicy>> {
    registry.get(corpus.task.name())?.build(corpus)
}

/// Runs the full loop; the result depends only on `cfg` and `corpus`.
pub fn run_experiment(cfg: &TrainConfig, corpus: &ToyCorpus) -> Result<LearningCurves> {
    run_experiment_with(cfg, corpus, &PolicyRegistry::builtin())
}

pub fn run_experiment_with(
    cfg: &TrainConfig,
    corpus: &ToyCorpus,
    registry: &PolicyRegistry,
) -> Result<LearningCurves> {
    cfg.validate()?;
    if corpus.task != cfg.task {
        return Err(RltError::TaskMismatch {
            expected: cfg.task,
            found: corpus.task,
        });
    }
    if corpus.items.is_empty() {
        return Err(RltError::Empty("toy corpus"));
    }
    for item in &corpus.items {
        if item.gt.task != corpus.task {
            return Err(RltError::TaskMismatch {
                expected: corpus.task,
                found: item.gt.task,
            });
        }
        item.gt.validate()?;
    }

    let mut policy = build_policy(corpus, registry)?;
    let values = action_values(&*policy, corpus)?;
    let mut curves = LearningCurves {
        task: corpus.task,
        initial_metric: expected_metric(&*policy, &values, cfg.temperature),
        initial_entropy: mean_entropy(&*policy, cfg.temperature),
        points: Vec::with_capacity(cfg.steps),
    };

    let mut stratum_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for item in &corpus.items {
        *stratum_sizes.entry(item.stratum_key()).or_insert(0) += 1;
    }

    for step in 1..=cfg.steps {
        let shared: &dyn ToyPolicy = &*policy;
        let groups = corpus
            .items
            .par_iter()
            .map(|item| {
                let mut rng = seed::stream(cfg.rng_seed, &format!("rollout/{step}/{}", item.id));
                rollout(shared, item, cfg, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;

        let stats = train_step(&mut *policy, &groups, cfg).map_err(|e| match e {
            RltError::NonFiniteGradient { detail, .. } => RltError::NonFiniteGradient { step, detail },
            other => other,
        })?;

        let mut stratum_grad_norm: BTreeMap<String, f64> = BTreeMap::new();
        for (item, n) in corpus.items.iter().zip(&stats.group_grad_norms) {
            *stratum_grad_norm.entry(item.stratum_key().to_string()).or_insert(0.0) += n;
        }
        for (k, v) in stratum_grad_norm.iter_mut() {
            *v /= stratum_sizes[k.as_str()] as f64;
        }

        curves.points.push(CurvePoint {
            step,
            mean_reward: stats.mean_reward,
            expected_metric: expected_metric(&*policy, &values, cfg.temperature),
            mean_abs_advantage: stats.mean_abs_advantage,
            grad_norm: stats.grad_norm,
            stratum_grad_norm,
            mean_entropy: mean_entropy(&*policy, cfg.temperature),
        });
    }
    Ok(curves)
}
