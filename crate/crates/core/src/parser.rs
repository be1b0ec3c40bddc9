//! Structured response parsing.
//!
//! A sampled response is expected to look like
//!
//! ```text
//! <think> reasoning </think> [<observe> span </observe>] <answer> payload </answer>
//! ```
//!
//! where the observe block is required for grounded QA and forbidden
//! elsewhere. Parsing never fails: malformed text produces a response with
//! `format_ok == false` and whatever payload could still be recovered.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::segment::TimeSegment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    McQa,
    Tvg,
    GroundedQa,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::McQa, TaskKind::Tvg, TaskKind::GroundedQa];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::McQa => "mc_qa",
            TaskKind::Tvg => "tvg",
            TaskKind::GroundedQa => "grounded_qa",
        }
    }

    /// Tasks scored with the discrete accuracy reward.
    pub fn has_choice(self) -> bool {
        matches!(self, TaskKind::McQa | TaskKind::GroundedQa)
    }

    /// Tasks scored with the temporal IoU reward.
    pub fn has_segment(self) -> bool {
        matches!(self, TaskKind::Tvg | TaskKind::GroundedQa)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task `{s}` (expected mc_qa, tvg or grounded_qa)"))
    }
}

/// An answer option letter, `A` through `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChoiceLetter(u8);

impl ChoiceLetter {
    pub const MAX_CHOICES: usize = 5;

    pub fn from_index(index: usize) -> Option<Self> {
        (index < Self::MAX_CHOICES).then(|| Self(b'A' + index as u8))
    }

    pub fn index(self) -> usize {
        (self.0 - b'A') as usize
    }

    pub fn as_char(self) -> char {
        self.0 as char
    }

    /// Normalizes a raw answer body: whitespace and ASCII punctuation are
    /// stripped and the remainder must be exactly one letter in `A..=E`
    /// (case-insensitive). `"B"`, `"(b)"` and `"B."` all give `B`.
    pub fn normalize(body: &str) -> Option<Self> {
        let mut kept = body
            .chars()
            .filter(|c| !c.is_whitespace() && !c.is_ascii_punctuation());
        let c = kept.next()?;
        if kept.next().is_some() || !c.is_ascii_alphabetic() {
            return None;
        }
        Self::from_index((c.to_ascii_uppercase() as u8 - b'A') as usize)
    }
}

impl fmt::Display for ChoiceLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl Serialize for ChoiceLetter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChoiceLetter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        ChoiceLetter::normalize(&raw)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid choice letter `{raw}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnswerPayload {
    Choice(ChoiceLetter),
    Segment(TimeSegment),
    ChoiceWithSegment(ChoiceLetter, TimeSegment),
}

impl AnswerPayload {
    pub fn choice(&self) -> Option<ChoiceLetter> {
        match *self {
            AnswerPayload::Choice(c) | AnswerPayload::ChoiceWithSegment(c, _) => Some(c),
            AnswerPayload::Segment(_) => None,
        }
    }

    pub fn segment(&self) -> Option<TimeSegment> {
        match *self {
            AnswerPayload::Segment(s) | AnswerPayload::ChoiceWithSegment(_, s) => Some(s),
            AnswerPayload::Choice(_) => None,
        }
    }

    /// Whether this variant is the complete payload for `task`.
    pub fn fits(&self, task: TaskKind) -> bool {
        matches!(
            (self, task),
            (AnswerPayload::Choice(_), TaskKind::McQa)
                | (AnswerPayload::Segment(_), TaskKind::Tvg)
                | (AnswerPayload::ChoiceWithSegment(..), TaskKind::GroundedQa)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub task: TaskKind,
    pub think: String,
    pub payload: Option<AnswerPayload>,
    pub format_ok: bool,
}

impl ParsedResponse {
    pub fn choice(&self) -> Option<ChoiceLetter> {
        self.payload.as_ref().and_then(AnswerPayload::choice)
    }

    pub fn segment(&self) -> Option<TimeSegment> {
        self.payload.as_ref().and_then(AnswerPayload::segment)
    }
}

const NUM: &str = r"(\d+(?:\.\d+)?)";
const UNIT: &str = r"(?:\s*(?:seconds|s))?";

// Accepted timestamp surface forms, in priority order.
static SEGMENT_PATTERNS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        format!(r"^{NUM}\s+to\s+{NUM}{UNIT}$"),
        format!(r"^from\s+{NUM}\s+to\s+{NUM}{UNIT}$"),
        format!(r"^\(\s*{NUM}\s*,\s*{NUM}\s*\){UNIT}$"),
        format!(r"^\[\s*{NUM}\s*,\s*{NUM}\s*\]{UNIT}$"),
        format!(r"^{NUM}\s*-\s*{NUM}{UNIT}$"),
    ]
    .iter()
    .map(|p| Regex::new(&format!("(?i){p}")).expect("static pattern"))
    .collect()
});

static TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)<(/?)(think|answer|observe)>").expect("static pattern"));

/// Parses a timestamp span such as `"4.5 to 8.25 seconds"` or `"[2, 6]"`.
///
/// Zero-length and reversed spans yield `None`.
pub fn extract_segment(body: &str) -> Option<TimeSegment> {
    let body = body.trim();
    let caps = SEGMENT_PATTERNS.iter().find_map(|re| re.captures(body))?;
    let start: f64 = caps[1].parse().ok()?;
    let end: f64 = caps[2].parse().ok()?;
    TimeSegment::checked(start, end)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Think,
    Observe,
    Answer,
}

#[derive(Debug, Clone, Copy)]
struct Tag {
    block: Block,
    closing: bool,
    start: usize,
    end: usize,
}

fn scan_tags(raw: &str) -> (Vec<Tag>, bool) {
    let mut all_lowercase = true;
    let tags = TAG
        .captures_iter(raw)
        .map(|caps| {
            let m = caps.get(0).expect("whole match");
            let name = &caps[2];
            if name.bytes().any(|b| b.is_ascii_uppercase()) {
                all_lowercase = false;
            }
            let block = match name.to_ascii_lowercase().as_str() {
                "think" => Block::Think,
                "observe" => Block::Observe,
                _ => Block::Answer,
            };
            Tag {
                block,
                closing: !caps[1].is_empty(),
                start: m.start(),
                end: m.end(),
            }
        })
        .collect();
    (tags, all_lowercase)
}

fn expected_sequence(task: TaskKind) -> &'static [(Block, bool)] {
    match task {
        TaskKind::GroundedQa => &[
            (Block::Think, false),
            (Block::Think, true),
            (Block::Observe, false),
            (Block::Observe, true),
            (Block::Answer, false),
            (Block::Answer, true),
        ],
        _ => &[
            (Block::Think, false),
            (Block::Think, true),
            (Block::Answer, false),
            (Block::Answer, true),
        ],
    }
}

/// Inner text of the first `open ... close` pair of `block`, if any.
fn first_block<'a>(raw: &'a str, tags: &[Tag], block: Block) -> Option<&'a str> {
    let open = tags.iter().position(|t| t.block == block && !t.closing)?;
    let close = tags[open + 1..]
        .iter()
        .find(|t| t.block == block && t.closing)?;
    Some(&raw[tags[open].end..close.start])
}

fn build_payload(task: TaskKind, answer: Option<&str>, observe: Option<&str>) -> Option<AnswerPayload> {
    match task {
        TaskKind::McQa => answer.and_then(ChoiceLetter::normalize).map(AnswerPayload::Choice),
        TaskKind::Tvg => answer.and_then(extract_segment).map(AnswerPayload::Segment),
        TaskKind::GroundedQa => {
            let choice = answer.and_then(ChoiceLetter::normalize);
            let seg = observe.and_then(extract_segment);
            match (choice, seg) {
                (Some(c), Some(s)) => Some(AnswerPayload::ChoiceWithSegment(c, s)),
                (Some(c), None) => Some(AnswerPayload::Choice(c)),
                (None, Some(s)) => Some(AnswerPayload::Segment(s)),
                (None, None) => None,
            }
        }
    }
}

pub fn parse_response(raw: &str, task: TaskKind) -> ParsedResponse {
    let (tags, all_lowercase) = scan_tags(raw);

    let structure_ok = all_lowercase
        && tags.len() == expected_sequence(task).len()
        && tags
            .iter()
            .zip(expected_sequence(task))
            .all(|(t, &(block, closing))| t.block == block && t.closing == closing);

    let think = first_block(raw, &tags, Block::Think)
        .map(|t| t.trim().to_string())
        .unwrap_or_default();
    let answer = first_block(raw, &tags, Block::Answer);
    let observe = if task == TaskKind::GroundedQa {
        first_block(raw, &tags, Block::Observe)
    } else {
        None
    };
    let payload = build_payload(task, answer, observe);
    let format_ok = structure_ok && payload.is_some_and(|p| p.fits(task));

    ParsedResponse {
        task,
        think,
        payload,
        format_ok,
    }
}

/// Binary format reward: 1 when the response follows the task template.
pub fn check_format(raw: &str, task: TaskKind) -> u8 {
    u8::from(parse_response(raw, task).format_ok)
}

/// Renders a span in the canonical `"X to Y"` form.
pub fn render_segment(seg: &TimeSegment) -> String {
    format!("{} to {}", seg.start, seg.end)
}

/// Renders a think trace and payload through the canonical template.
pub fn render_response(think: &str, payload: &AnswerPayload) -> String {
    match payload {
        AnswerPayload::Choice(c) => format!("<think>{think}</think><answer>{c}</answer>"),
        AnswerPayload::Segment(s) => {
            format!("<think>{think}</think><answer>{}</answer>", render_segment(s))
        }
        AnswerPayload::ChoiceWithSegment(c, s) => format!(
            "<think>{think}</think><observe>{}</observe><answer>{c}</answer>",
            render_segment(s)
        ),
    }
}
