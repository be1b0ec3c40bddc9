//! Verifiable reward components and per-task reward strategies.
//!
//! Each task kind has its own [`TaskReward`] strategy combining the binary
//! format reward with the accuracy and/or temporal IoU reward. Strategies
//! live in a [`RewardRegistry`] keyed by task name so that callers (and the
//! CLI) can resolve them at runtime.

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RltError};
use crate::parser::{ChoiceLetter, ParsedResponse, TaskKind};
use crate::segment::TimeSegment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub task: TaskKind,
    pub gt_choice: Option<ChoiceLetter>,
    pub gt_segment: Option<TimeSegment>,
}

impl GroundTruth {
    pub fn choice(letter: ChoiceLetter) -> Self {
        Self {
            task: TaskKind::McQa,
            gt_choice: Some(letter),
            gt_segment: None,
        }
    }

    pub fn segment(seg: TimeSegment) -> Self {
        Self {
            task: TaskKind::Tvg,
            gt_choice: None,
            gt_segment: Some(seg),
        }
    }

    pub fn grounded(letter: ChoiceLetter, seg: TimeSegment) -> Self {
        Self {
            task: TaskKind::GroundedQa,
            gt_choice: Some(letter),
            gt_segment: Some(seg),
        }
    }

    /// Checks that the fields required by the task are present and valid.
    pub fn validate(&self) -> Result<()> {
        if self.task.has_choice() && self.gt_choice.is_none() {
            return Err(RltError::MissingGroundTruth {
                task: self.task,
                field: "gt_choice",
            });
        }
        if self.task.has_segment() {
            match self.gt_segment {
                Some(s) if s.is_valid() => {}
                _ => {
                    return Err(RltError::MissingGroundTruth {
                        task: self.task,
                        field: "gt_segment",
                    })
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub task: TaskKind,
    pub r_format: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_acc: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_iou: Option<f64>,
    pub total: f64,
    /// Set when the predicted span had `end <= start` and scored zero.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl RewardBreakdown {
    pub fn new(task: TaskKind, r_format: u8, r_acc: Option<u8>, r_iou: Option<f64>) -> Self {
        let mut b = Self {
            task,
            r_format,
            r_acc,
            r_iou,
            total: 0.0,
            degenerate: false,
        };
        b.total = b.recompute_total();
        b
    }

    pub fn recompute_total(&self) -> f64 {
        let format = f64::from(self.r_format);
        let acc = f64::from(self.r_acc.unwrap_or(0));
        let iou = self.r_iou.unwrap_or(0.0);
        match self.task {
            TaskKind::McQa => format + acc,
            TaskKind::Tvg => format + iou,
            TaskKind::GroundedQa => format + 0.5 * (acc + iou),
        }
    }
}

/// Binary accuracy reward on normalized letters.
pub fn accuracy_reward(pred: ChoiceLetter, gt: ChoiceLetter) -> u8 {
    u8::from(pred == gt)
}

/// Temporal IoU between two spans.
///
/// Returns `None` when `pred` is degenerate; spans that only touch at a
/// point have zero intersection.
pub fn tiou_checked(pred: &TimeSegment, gt: &TimeSegment) -> Option<f64> {
    if !pred.is_valid() || !gt.is_valid() {
        return None;
    }
    let inter = (pred.end.min(gt.end) - pred.start.max(gt.start)).max(0.0);
    let hull = pred.end.max(gt.end) - pred.start.min(gt.start);
    Some(inter / hull)
}

/// Temporal IoU, with degenerate spans scoring zero.
pub fn tiou_reward(pred: &TimeSegment, gt: &TimeSegment) -> f64 {
    tiou_checked(pred, gt).unwrap_or(0.0)
}

/// A task-specific combination of reward components.
pub trait TaskReward: Send + Sync {
    fn name(&self) -> &'static str;

    fn task(&self) -> TaskKind;

    /// Upper bound of [`RewardBreakdown::total`] for this task.
    fn max_total(&self) -> f64 {
        2.0
    }

    fn score(&self, parsed: &ParsedResponse, gt: &GroundTruth) -> Result<RewardBreakdown>;
}

fn check_inputs(task: TaskKind, parsed: &ParsedResponse, gt: &GroundTruth) -> Result<()> {
    if gt.task != task {
        return Err(RltError::TaskMismatch {
            expected: task,
            found: gt.task,
        });
    }
    if parsed.task != task {
        return Err(RltError::TaskMismatch {
            expected: task,
            found: parsed.task,
        });
    }
    if parsed.format_ok && !parsed.payload.is_some_and(|p| p.fits(task)) {
        return Err(RltError::PayloadMismatch(task));
    }
    gt.validate()
}

fn acc_component(parsed: &ParsedResponse, gt: &GroundTruth) -> u8 {
    match (parsed.format_ok, parsed.choice(), gt.gt_choice) {
        (true, Some(p), Some(g)) => accuracy_reward(p, g),
        _ => 0,
    }
}

/// Returns the IoU component and whether the prediction was degenerate.
fn iou_component(parsed: &ParsedResponse, gt: &GroundTruth) -> (f64, bool) {
    match (parsed.format_ok, parsed.segment(), gt.gt_segment) {
        (true, Some(p), Some(g)) => match tiou_checked(&p, &g) {
            Some(v) => (v, false),
            None => (0.0, true),
        },
        _ => (0.0, false),
    }
}

pub struct McQaReward;

impl TaskReward for McQaReward {
    fn name(&self) -> &'static str {
        "mc_qa"
    }

    fn task(&self) -> TaskKind {
        TaskKind::McQa
    }

    fn score(&self, parsed: &ParsedResponse, gt: &GroundTruth) -> Result<RewardBreakdown> {
        check_inputs(self.task(), parsed, gt)?;
        let acc = acc_component(parsed, gt);
        Ok(RewardBreakdown::new(
            self.task(),
            u8::from(parsed.format_ok),
            Some(acc),
            None,
        ))
    }
}

pub struct TvgReward;

impl TaskReward for TvgReward {
    fn name(&self) -> &'static str {
        "tvg"
    }

    fn task(&self) -> TaskKind {
        TaskKind::Tvg
    }

    fn score(&self, parsed: &ParsedResponse, gt: &GroundTruth) -> Result<RewardBreakdown> {
        check_inputs(self.task(), parsed, gt)?;
        let (iou, degenerate) = iou_component(parsed, gt);
        let mut b = RewardBreakdown::new(self.task(), u8::from(parsed.format_ok), None, Some(iou));
        b.degenerate = degenerate;
        Ok(b)
    }
}

pub struct GroundedQaReward;

impl TaskReward for GroundedQaReward {
    fn name(&self) -> &'static str {
        "grounded_qa"
    }

    fn task(&self) -> TaskKind {
        TaskKind::GroundedQa
    }

    fn score(&self, parsed: &ParsedResponse, gt: &GroundTruth) -> Result<RewardBreakdown> {
        check_inputs(self.task(), parsed, gt)?;
        let acc = acc_component(parsed, gt);
        let (iou, degenerate) = iou_component(parsed, gt);
        let mut b = RewardBreakdown::new(
            self.task(),
            u8::from(parsed.format_ok),
            Some(acc),
            Some(iou),
        );
        b.degenerate = degenerate;
        Ok(b)
    }
}

#[derive(Clone, Default)]
pub struct RewardRegistry {
    strategies: BTreeMap<&'static str, Arc<dyn TaskReward>>,
}

impl RewardRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding the three built-in task strategies.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        r.register(Arc::new(McQaReward));
        r.register(Arc::new(TvgReward));
        r.register(Arc::new(GroundedQaReward));
        r
    }

    pub fn register(&mut self, strategy: Arc<dyn TaskReward>) {
        self.strategies.insert(strategy.name(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn TaskReward>> {
        self.strategies
            .get(name)
            .cloned()
            .ok_or_else(|| RltError::UnknownStrategy(name.to_string()))
    }

    pub fn for_task(&self, task: TaskKind) -> Result<Arc<dyn TaskReward>> {
        self.get(task.name())
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.strategies.keys().copied()
    }
}

static BUILTIN: LazyLock<RewardRegistry> = LazyLock::new(RewardRegistry::builtin);

pub fn builtin_registry() -> &'static RewardRegistry {
    &BUILTIN
}

/// Scores one parsed response with the built-in strategy for `gt.task`.
pub fn combined_reward(parsed: &ParsedResponse, gt: &GroundTruth) -> Result<RewardBreakdown> {
    BUILTIN.for_task(gt.task)?.score(parsed, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_response, AnswerPayload};

    fn l(c: char) -> ChoiceLetter {
        ChoiceLetter::normalize(&c.to_string()).unwrap()
    }

    fn seg(a: f64, b: f64) -> TimeSegment {
        TimeSegment::new(a, b)
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy_reward(l('B'), l('B')), 1);
        assert_eq!(accuracy_reward(l('A'), l('B')), 0);
        assert_eq!(accuracy_reward(l('b'), l('B')), 1);
    }

    #[test]
    fn tiou_examples() {
        assert_eq!(tiou_reward(&seg(4.0, 8.0), &seg(4.0, 8.0)), 1.0);
        assert_eq!(tiou_reward(&seg(0.0, 2.0), &seg(4.0, 8.0)), 0.0);
        assert_eq!(tiou_reward(&seg(2.0, 6.0), &seg(4.0, 8.0)), 2.0 / 6.0);
        assert_eq!(tiou_reward(&seg(0.0, 4.0), &seg(4.0, 8.0)), 0.0);
    }

    #[test]
    fn degenerate_prediction_scores_zero() {
        assert_eq!(tiou_checked(&seg(5.0, 5.0), &seg(4.0, 8.0)), None);
        let parsed = ParsedResponse {
            task: TaskKind::Tvg,
            think: String::new(),
            payload: Some(AnswerPayload::Segment(seg(6.0, 5.0))),
            format_ok: true,
        };
        let b = combined_reward(&parsed, &GroundTruth::segment(seg(4.0, 8.0))).unwrap();
        assert!(b.degenerate);
        assert_eq!(b.r_iou, Some(0.0));
        assert_eq!(b.total, 1.0);
    }

    #[test]
    fn mcqa_total() {
        let p = parse_response("<think>x</think><answer>B</answer>", TaskKind::McQa);
        let b = combined_reward(&p, &GroundTruth::choice(l('B'))).unwrap();
        assert_eq!((b.r_format, b.r_acc, b.r_iou, b.total), (1, Some(1), None, 2.0));
    }

    #[test]
    fn grounded_total() {
        // acc 1, tIoU 0.5 -> 1 + (1 + 0.5) / 2
        let p = parse_response(
            "<think>x</think><observe>4 to 8</observe><answer>C</answer>",
            TaskKind::GroundedQa,
        );
        let b = combined_reward(&p, &GroundTruth::grounded(l('C'), seg(4.0, 12.0))).unwrap();
        assert_eq!(b.r_iou, Some(0.5));
        assert_eq!(b.total, 1.75);
    }

    #[test]
    fn bad_format_scores_zero() {
        let p = parse_response("<answer>4 to 8</answer>", TaskKind::Tvg);
        let b = combined_reward(&p, &GroundTruth::segment(seg(4.0, 8.0))).unwrap();
        assert_eq!((b.r_format, b.r_acc, b.r_iou, b.total), (0, None, Some(0.0), 0.0));
    }

    #[test]
    fn task_mismatch_is_error() {
        let p = parse_response("<think>x</think><answer>B</answer>", TaskKind::McQa);
        let err = combined_reward(&p, &GroundTruth::segment(seg(0.0, 1.0))).unwrap_err();
        assert!(matches!(err, RltError::TaskMismatch { .. }));
    }

    #[test]
    fn missing_ground_truth_is_error() {
        let p = parse_response("<think>x</think><answer>B</answer>", TaskKind::McQa);
        let gt = GroundTruth {
            task: TaskKind::McQa,
            gt_choice: None,
            gt_segment: None,
        };
        assert!(combined_reward(&p, &gt).is_err());
    }

    #[test]
    fn registry_lookup() {
        let r = RewardRegistry::builtin();
        assert_eq!(r.names().collect::<Vec<_>>(), ["grounded_qa", "mc_qa", "tvg"]);
        for t in TaskKind::ALL {
            assert_eq!(r.for_task(t).unwrap().task(), t);
        }
        assert!(matches!(r.get("ppo"), Err(RltError::UnknownStrategy(_))));
    }
}
