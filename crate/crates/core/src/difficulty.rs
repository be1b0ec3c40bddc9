//! Per-item difficulty from repeated sampling of a base model.
//!
//! Discrete tasks count correct answers among N samples and bucket the count
//! into Easy/Medium/Hard. Continuous tasks measure the spread of IoU scores
//! as `max - mean`. Grounded QA records get both statistics.

use serde::{Deserialize, Serialize};

use crate::corpus::DatasetRecord;
use crate::error::{Result, RltError};
use crate::parser::{parse_response, ParsedResponse, TaskKind};
use crate::reward::{combined_reward, GroundTruth};

pub const DEFAULT_SAMPLES: usize = 8;
/// Sampling metadata of the offline estimation runs.
pub const SAMPLING_TEMPERATURE: f64 = 1.0;
pub const SAMPLING_TOP_P: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyLabel {
    Easy,
    Medium,
    Hard,
}

impl DifficultyLabel {
    pub const ALL: [DifficultyLabel; 3] =
        [DifficultyLabel::Easy, DifficultyLabel::Medium, DifficultyLabel::Hard];

    pub fn name(self) -> &'static str {
        match self {
            DifficultyLabel::Easy => "easy",
            DifficultyLabel::Medium => "medium",
            DifficultyLabel::Hard => "hard",
        }
    }
}

impl std::fmt::Display for DifficultyLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A value per task kind. Serializes as `{ mc_qa, tvg, grounded_qa }`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerTask<T> {
    pub mc_qa: T,
    pub tvg: T,
    pub grounded_qa: T,
}

impl<T: Copy> PerTask<T> {
    pub fn get(&self, task: TaskKind) -> T {
        match task {
            TaskKind::McQa => self.mc_qa,
            TaskKind::Tvg => self.tvg,
            TaskKind::GroundedQa => self.grounded_qa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub tau_easy: u32,
    pub tau_hard: u32,
    pub delta_min: PerTask<f64>,
}

impl Default for Thresholds {
    /// Easy at 7+ of 8 correct, Hard at 1 or fewer; spread floors of 0.3
    /// for grounding and 0.1 for grounded QA.
    fn default() -> Self {
        Self {
            tau_easy: 7,
            tau_hard: 1,
            delta_min: PerTask {
                mc_qa: 0.0,
                tvg: 0.3,
                grounded_qa: 0.1,
            },
        }
    }
}

impl Thresholds {
    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        if self.tau_hard >= self.tau_easy {
            return Err(RltError::InvalidConfig(format!(
                "tau_hard ({}) must be below tau_easy ({})",
                self.tau_hard, self.tau_easy
            )));
        }
        if let Some(n) = n {
            if self.tau_easy as usize > n {
                return Err(RltError::InvalidConfig(format!(
                    "tau_easy ({}) exceeds sample count {n}",
                    self.tau_easy
                )));
            }
        }
        for t in TaskKind::ALL {
            let d = self.delta_min.get(t);
            if !(0.0..=1.0).contains(&d) {
                return Err(RltError::InvalidConfig(format!("delta_min.{t} = {d} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRecord {
    #[serde(rename = "id")]
    pub item_id: String,
    pub source: String,
    pub task: TaskKind,
    #[serde(rename = "n")]
    pub n_samples: usize,
    #[serde(rename = "c", default, skip_serializing_if = "Option::is_none")]
    pub correct_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ious: Vec<f64>,
    pub mean_iou: f64,
    pub delta_iou: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<DifficultyLabel>,
}

/// Number of samples that are both well formatted and correct.
pub fn correct_count(parsed_samples: &[ParsedResponse], gt: &GroundTruth) -> Result<u32> {
    if !gt.task.has_choice() {
        return Err(RltError::UnsupportedTask {
            op: "correct_count",
            task: gt.task,
        });
    }
    let mut c = 0;
    for p in parsed_samples {
        if combined_reward(p, gt)?.r_acc == Some(1) {
            c += 1;
        }
    }
    Ok(c)
}

pub fn classify_discrete(c: u32, _n: u32, th: &Thresholds) -> DifficultyLabel {
    if c >= th.tau_easy {
        DifficultyLabel::Easy
    } else if c <= th.tau_hard {
        DifficultyLabel::Hard
    } else {
        DifficultyLabel::Medium
    }
}

/// `max(ious) - mean(ious)`; exactly zero for constant lists.
pub fn delta_iou(ious: &[f64]) -> Result<f64> {
    if ious.is_empty() {
        return Err(RltError::Empty("delta_iou"));
    }
    if ious.iter().any(|x| !x.is_finite()) {
        return Err(RltError::NonFinite("ious"));
    }
    if ious.iter().all(|&x| x == ious[0]) {
        return Ok(0.0);
    }
    let max = ious.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = ious.iter().sum::<f64>() / ious.len() as f64;
    Ok((max - mean).max(0.0))
}

/// Scores `raw_samples` against `item`'s ground truth and summarizes them.
pub fn estimate(item: &DatasetRecord, raw_samples: &[String], th: &Thresholds) -> Result<DifficultyRecord> {
    let n = raw_samples.len();
    if n < 2 {
        return Err(RltError::GroupTooSmall(n));
    }
    if item.gt.task != item.task {
        return Err(RltError::TaskMismatch {
            expected: item.task,
            found: item.gt.task,
        });
    }
    item.gt.validate()?;

    let parsed: Vec<ParsedResponse> = raw_samples
        .iter()
        .map(|s| parse_response(s, item.task))
        .collect();

    let (correct, label) = if item.task.has_choice() {
        let c = correct_count(&parsed, &item.gt)?;
        (Some(c), Some(classify_discrete(c, n as u32, th)))
    } else {
        (None, None)
    };

    let ious = if item.task.has_segment() {
        parsed
            .iter()
            .map(|p| Ok(combined_reward(p, &item.gt)?.r_iou.unwrap_or(0.0)))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let (mean_iou, delta) = if ious.is_empty() {
        (0.0, 0.0)
    } else {
        let mean = ious.iter().sum::<f64>() / ious.len() as f64;
        (mean.clamp(0.0, 1.0), delta_iou(&ious)?)
    };

    Ok(DifficultyRecord {
        item_id: item.item_id.clone(),
        source: item.source.clone(),
        task: item.task,
        n_samples: n,
        correct_count: correct,
        ious,
        mean_iou,
        delta_iou: delta,
        label,
    })
}
