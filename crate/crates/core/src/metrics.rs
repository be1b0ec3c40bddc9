//! Benchmark-style aggregates: mIoU, Recall@IoU and QA accuracy.
//!
//! Unparseable predictions are never dropped; callers pass them in as
//! IoU 0 (or a wrong letter), which is what `None` means in the
//! `*_optional` helpers.

use serde::Serialize;

use crate::error::{Result, RltError};
use crate::parser::ChoiceLetter;
use crate::reward::{accuracy_reward, tiou_reward};
use crate::segment::TimeSegment;

pub const RECALL_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundingEval {
    pub ious: Vec<f64>,
    pub miou: f64,
    pub recall: Vec<(f64, f64)>,
}

impl GroundingEval {
    pub fn from_ious(ious: Vec<f64>) -> Result<Self> {
        if ious.is_empty() {
            return Err(RltError::Empty("grounding evaluation"));
        }
        let miou = mean_iou(&ious);
        let recall = recall_from_ious(&ious, &RECALL_THRESHOLDS)?;
        Ok(Self { ious, miou, recall })
    }

    pub fn from_pairs(pairs: &[(TimeSegment, TimeSegment)]) -> Result<Self> {
        Self::from_ious(pair_ious(pairs))
    }
}

fn pair_ious(pairs: &[(TimeSegment, TimeSegment)]) -> Vec<f64> {
    pairs.iter().map(|(p, g)| tiou_reward(p, g)).collect()
}

fn mean_iou(ious: &[f64]) -> f64 {
    ious.iter().sum::<f64>() / ious.len() as f64
}

pub fn miou(pairs: &[(TimeSegment, TimeSegment)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(RltError::Empty("miou"));
    }
    Ok(mean_iou(&pair_ious(pairs)))
}

/// Mean IoU where a missing prediction counts as IoU 0.
pub fn miou_optional(pairs: &[(Option<TimeSegment>, TimeSegment)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(RltError::Empty("miou"));
    }
    let ious: Vec<f64> = pairs
        .iter()
        .map(|(p, g)| p.map_or(0.0, |p| tiou_reward(&p, g)))
        .collect();
    Ok(mean_iou(&ious))
}

pub fn recall_from_ious(ious: &[f64], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    thresholds
        .iter()
        .map(|&t| {
            if !(t > 0.0 && t <= 1.0) {
                return Err(RltError::InvalidConfig(format!("recall threshold {t} not in (0, 1]")));
            }
            let hits = ious.iter().filter(|&&iou| iou >= t).count();
            let frac = if ious.is_empty() { 0.0 } else { hits as f64 / ious.len() as f64 };
            Ok((t, frac))
        })
        .collect()
}

/// Fraction of pairs with IoU at or above each threshold.
pub fn recall_at(pairs: &[(TimeSegment, TimeSegment)], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    recall_from_ious(&pair_ious(pairs), thresholds)
}

pub fn qa_accuracy(preds: &[ChoiceLetter], gts: &[ChoiceLetter]) -> Result<f64> {
    let preds: Vec<Option<ChoiceLetter>> = preds.iter().copied().map(Some).collect();
    qa_accuracy_optional(&preds, gts)
}

/// Accuracy where a missing prediction is simply wrong.
pub fn qa_accuracy_optional(preds: &[Option<ChoiceLetter>], gts: &[ChoiceLetter]) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(RltError::LengthMismatch {
            what: "predictions vs ground truth",
            left: preds.len(),
            right: gts.len(),
        });
    }
    if preds.is_empty() {
        return Err(RltError::Empty("qa_accuracy"));
    }
    let correct: u32 = preds
        .iter()
        .zip(gts)
        .map(|(p, &g)| p.map_or(0, |p| u32::from(accuracy_reward(p, g))))
        .sum();
    Ok(f64::from(correct) / preds.len() as f64)
}
