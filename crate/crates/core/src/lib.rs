//! Verifiable rewards, group-relative advantages and difficulty-aware data
//! selection for reinforcement-learning tuning of video-language models.
//!
//! The pipeline, bottom up:
//!
//! - [`parser`] turns sampled text into structured answers and decides
//!   format validity.
//! - [`reward`] scores answers (format, accuracy, temporal IoU) with one
//!   strategy per task kind.
//! - [`grpo`] normalizes rewards within a rollout group and defines the
//!   clipped surrogate objective.
//! - [`difficulty`] summarizes repeated samples per item.
//! - [`selector`] builds balanced training subsets from scored items.
//! - [`metrics`] computes mIoU, Recall@IoU and accuracy.
//! - [`trainer`] runs GRPO end to end on tabular toy policies.

pub mod corpus;
pub mod difficulty;
pub mod error;
pub mod grpo;
pub mod metrics;
pub mod parser;
pub mod reward;
pub mod seed;
pub mod segment;
pub mod selector;
pub mod trainer;

pub use error::{Result, RltError};
pub use parser::{check_format, extract_segment, parse_response, AnswerPayload, ChoiceLetter, ParsedResponse, TaskKind};
pub use reward::{accuracy_reward, combined_reward, tiou_reward, GroundTruth, RewardBreakdown};
pub use segment::TimeSegment;
