//! JSONL corpus schemas: raw dataset records and scored difficulty records.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::difficulty::DifficultyRecord;
use crate::error::{Result, RltError};
use crate::parser::{ChoiceLetter, TaskKind};
use crate::reward::GroundTruth;
use crate::segment::TimeSegment;

/// One line of the input corpus, exactly as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusLine {
    pub id: String,
    pub source: String,
    pub task: TaskKind,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_segment: Option<[f64; 2]>,
    pub video_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub item_id: String,
    pub source: String,
    pub task: TaskKind,
    pub question: String,
    pub choices: Option<Vec<String>>,
    pub gt: GroundTruth,
    /// Opaque media reference, carried through untouched.
    pub video_ref: String,
    pub samples: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.item_id {
            Some(id) => write!(f, "line {} ({id}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

impl CorpusLine {
    /// Converts to a domain record, collecting every invariant violation.
    pub fn into_record(self) -> std::result::Result<DatasetRecord, Vec<String>> {
        let mut errs = Vec::new();
        if self.id.trim().is_empty() {
            errs.push("empty id".to_string());
        }

        let gt_choice = match &self.gt_answer {
            Some(raw) => match ChoiceLetter::normalize(raw) {
                Some(c) => Some(c),
                None => {
                    errs.push(format!("gt_answer `{raw}` is not a choice letter"));
                    None
                }
            },
            None => None,
        };
        let gt_segment = self.gt_segment.map(TimeSegment::from);
        if let Some(s) = gt_segment {
            if !s.is_valid() {
                errs.push(format!("gt_segment {s} must satisfy 0 <= start < end"));
            }
        }

        if self.task.has_choice() {
            if self.gt_answer.is_none() {
                errs.push(format!("{} record missing gt_answer", self.task));
            }
            let need_choices = self.task == TaskKind::McQa || self.choices.is_some();
            match &self.choices {
                Some(ch) if ch.len() >= 2 => {
                    if let Some(c) = gt_choice {
                        if c.index() >= ch.len() {
                            errs.push(format!(
                                "gt_answer {c} does not index into {} choices",
                                ch.len()
                            ));
                        }
                    }
                }
                Some(ch) => errs.push(format!("needs at least 2 choices, found {}", ch.len())),
                None if need_choices => errs.push("mc_qa record missing choices".to_string()),
                None => {}
            }
        } else if self.gt_answer.is_some() {
            errs.push(format!("gt_answer given for {} record", self.task));
        }

        if self.task.has_segment() {
            if self.gt_segment.is_none() {
                errs.push(format!("{} record missing gt_segment", self.task));
            }
        } else if self.gt_segment.is_some() {
            errs.push(format!("gt_segment given for {} record", self.task));
        }

        if !errs.is_empty() {
            return Err(errs);
        }
        Ok(DatasetRecord {
            item_id: self.id,
            source: self.source,
            task: self.task,
            question: self.question,
            choices: self.choices,
            gt: GroundTruth {
                task: self.task,
                gt_choice,
                gt_segment,
            },
            video_ref: self.video_ref,
            samples: self.samples,
        })
    }
}

impl From<&DatasetRecord> for CorpusLine {
    fn from(r: &DatasetRecord) -> Self {
        CorpusLine {
            id: r.item_id.clone(),
            source: r.source.clone(),
            task: r.task,
            question: r.question.clone(),
            choices: r.choices.clone(),
            gt_answer: r.gt.gt_choice.map(|c| c.to_string()),
            gt_segment: r.gt.gt_segment.map(Into::into),
            video_ref: r.video_ref.clone(),
            samples: r.samples.clone(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| RltError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Non-blank lines of a JSONL file with 1-based line numbers.
fn jsonl_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| RltError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Parses and checks every record of an input corpus.
pub fn load_corpus(path: &Path) -> Result<(Vec<DatasetRecord>, Vec<Violation>)> {
    let mut records = Vec::new();
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in jsonl_lines(path)? {
        let parsed: CorpusLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                violations.push(Violation {
                    line: line_no,
                    item_id: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let id = parsed.id.clone();
        if !seen.insert(id.clone()) {
            violations.push(Violation {
                line: line_no,
                item_id: Some(id.clone()),
                message: "duplicate id".to_string(),
            });
        }
        match parsed.into_record() {
            Ok(r) => records.push(r),
            Err(errs) => violations.extend(errs.into_iter().map(|message| Violation {
                line: line_no,
                item_id: Some(id.clone()),
                message,
            })),
        }
    }
    Ok((records, violations))
}

/// Every record-level schema violation in a corpus file; empty means valid.
pub fn validate_corpus(path: &Path) -> Result<Vec<Violation>> {
    load_corpus(path).map(|(_, v)| v)
}

pub fn load_scored(path: &Path) -> Result<Vec<DifficultyRecord>> {
    jsonl_lines(path)?
        .into_iter()
        .map(|(_, line)| serde_json::from_str(&line).map_err(RltError::from))
        .collect()
}

pub fn write_jsonl<T: Serialize, W: Write>(out: &mut W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, item)?;
        out.write_all(b"\n").map_err(|source| RltError::Io {
            path: "<output>".to_string(),
            source,
        })?;
    }
    Ok(())
}
