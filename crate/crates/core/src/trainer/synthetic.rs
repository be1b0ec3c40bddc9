//! Synthetic corpora: toy items for the trainer and sampled dataset
//! records for the estimation/selection pipeline.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DatasetRecord;
use crate::difficulty::DifficultyLabel;
use crate::error::{Result, RltError};
use crate::parser::{render_response, render_segment, AnswerPayload, ChoiceLetter, TaskKind};
use crate::reward::GroundTruth;
use crate::segment::TimeSegment;
use crate::seed;
use crate::trainer::policy::SegmentGrid;
use crate::trainer::{ToyCorpus, ToyItem, THINK_PLACEHOLDER};

/// Initial probability of the correct answer for engineered strata.
pub const EASY_P: f64 = 0.99;
pub const MEDIUM_P: f64 = 0.5;
pub const HARD_P: f64 = 0.0005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    /// Uniform initial policies.
    #[default]
    Uniform,
    /// Easy/Medium/Hard items with engineered initial accuracy (MC-QA only).
    Stratified,
    /// Deterministic, always-wrong initial policies: no reward variance.
    Saturated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusConfig {
    pub kind: CorpusKind,
    pub n_items: usize,
    pub n_choices: usize,
    pub timeline: f64,
    pub bins: usize,
    /// Easy, Medium, Hard item counts for the stratified kind.
    pub strata: [usize; 3],
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        Self {
            kind: CorpusKind::Uniform,
            n_items: 32,
            n_choices: 4,
            timeline: 32.0,
            bins: 16,
            strata: [10, 10, 10],
        }
    }
}

impl SyntheticCorpusConfig {
    pub fn build(&self, task: TaskKind, seed: u64) -> Result<ToyCorpus> {
        match (self.kind, task) {
            (CorpusKind::Uniform, TaskKind::McQa) => Ok(mc_uniform(self.n_items, self.n_choices, seed)),
            (CorpusKind::Uniform, TaskKind::Tvg) => tvg_uniform(self.n_items, self.timeline, self.bins, seed),
            (CorpusKind::Uniform, TaskKind::GroundedQa) => {
                grounded_uniform(self.n_items, self.n_choices, self.timeline, self.bins, seed)
            }
            (CorpusKind::Stratified, TaskKind::McQa) => Ok(mc_stratified(self.strata, self.n_choices, seed)),
            (CorpusKind::Saturated, TaskKind::McQa) => Ok(mc_saturated(self.n_items, self.n_choices, seed)),
            (kind, task) => Err(RltError::InvalidConfig(format!(
                "synthetic corpus kind {kind:?} is not available for {task}"
            ))),
        }
    }
}

fn random_letter(n_choices: usize, rng: &mut impl Rng) -> ChoiceLetter {
    ChoiceLetter::from_index(rng.gen_range(0..n_choices)).expect("n_choices <= 5")
}

pub fn mc_uniform(n_items: usize, n_choices: usize, seed: u64) -> ToyCorpus {
    let mut rng = seed::stream(seed, "synthetic/mc");
    let items = (0..n_items)
        .map(|i| ToyItem {
            id: format!("mc-{i:04}"),
            gt: GroundTruth::choice(random_letter(n_choices, &mut rng)),
            stratum: None,
            init_logits: None,
        })
        .collect();
    ToyCorpus {
        task: TaskKind::McQa,
        n_choices,
        timeline: 1.0,
        bins: 1,
        items,
    }
}

/// Logits giving the correct choice probability `p`, others sharing the rest.
pub fn logits_for_accuracy(correct: usize, n_choices: usize, p: f64) -> Vec<f64> {
    let boost = (p / (1.0 - p) * (n_choices as f64 - 1.0)).ln();
    (0..n_choices)
        .map(|k| if k == correct { boost } else { 0.0 })
        .collect()
}

pub fn mc_stratified(counts: [usize; 3], n_choices: usize, seed: u64) -> ToyCorpus {
    let mut rng = seed::stream(seed, "synthetic/mc-stratified");
    let mut items = Vec::new();
    for (label, (count, p)) in DifficultyLabel::ALL
        .into_iter()
        .zip(counts.into_iter().zip([EASY_P, MEDIUM_P, HARD_P]))
    {
        for i in 0..count {
            let gt = random_letter(n_choices, &mut rng);
            items.push(ToyItem {
                id: format!("{label}-{i:04}"),
                gt: GroundTruth::choice(gt),
                stratum: Some(label),
                init_logits: Some(logits_for_accuracy(gt.index(), n_choices, p)),
            });
        }
    }
    ToyCorpus {
        task: TaskKind::McQa,
        n_choices,
        timeline: 1.0,
        bins: 1,
        items,
    }
}

pub fn mc_saturated(n_items: usize, n_choices: usize, seed: u64) -> ToyCorpus {
    let mut corpus = mc_uniform(n_items, n_choices, seed);
    for item in &mut corpus.items {
        let gt = item.gt.gt_choice.expect("mc item").index();
        let mut logits = vec![0.0; n_choices];
        logits[(gt + 1) % n_choices] = 80.0;
        item.init_logits = Some(logits);
    }
    corpus
}

fn random_grid_segment(grid: &SegmentGrid, rng: &mut impl Rng) -> TimeSegment {
    let s = rng.gen_range(0..grid.bins);
    let e = rng.gen_range(s..grid.bins);
    grid.segment(grid.cell(s, e))
}

pub fn tvg_uniform(n_items: usize, timeline: f64, bins: usize, seed: u64) -> Result<ToyCorpus> {
    let grid = SegmentGrid::new(timeline, bins)?;
    let mut rng = seed::stream(seed, "synthetic/tvg");
    let items = (0..n_items)
        .map(|i| ToyItem {
            id: format!("tvg-{i:04}"),
            gt: GroundTruth::segment(random_grid_segment(&grid, &mut rng)),
            stratum: None,
            init_logits: None,
        })
        .collect();
    Ok(ToyCorpus {
        task: TaskKind::Tvg,
        n_choices: 2,
        timeline,
        bins,
        items,
    })
}

pub fn grounded_uniform(
    n_items: usize,
    n_choices: usize,
    timeline: f64,
    bins: usize,
    seed: u64,
) -> Result<ToyCorpus> {
    let grid = SegmentGrid::new(timeline, bins)?;
    let mut rng = seed::stream(seed, "synthetic/gqa");
    let items = (0..n_items)
        .map(|i| ToyItem {
            id: format!("gqa-{i:04}"),
            gt: GroundTruth::grounded(
                random_letter(n_choices, &mut rng),
                random_grid_segment(&grid, &mut rng),
            ),
            stratum: None,
            init_logits: None,
        })
        .collect();
    Ok(ToyCorpus {
        task: TaskKind::GroundedQa,
        n_choices,
        timeline,
        bins,
        items,
    })
}

/// A named data source contributing `count` records of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub name: String,
    pub task: TaskKind,
    pub count: usize,
}

impl SourceSpec {
    pub fn new(name: &str, task: TaskKind, count: usize) -> Self {
        Self {
            name: name.to_string(),
            task,
            count,
        }
    }
}

const SYNTHETIC_CHOICES: usize = 4;
const SYNTHETIC_DURATION: f64 = 60.0;
/// Share of sampled outputs that break the response template.
const MALFORMED_RATE: f64 = 0.03;

fn sample_choice(gt: ChoiceLetter, skill: f64, rng: &mut impl Rng) -> ChoiceLetter {
    if rng.gen_bool(skill) {
        gt
    } else {
        let wrong: Vec<usize> = (0..SYNTHETIC_CHOICES).filter(|&k| k != gt.index()).collect();
        ChoiceLetter::from_index(*wrong.choose(rng).expect("non-empty")).expect("in range")
    }
}

fn round_tenth(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn sample_segment(gt: TimeSegment, jitter: f64, rng: &mut impl Rng) -> TimeSegment {
    let start = round_tenth((gt.start + rng.gen_range(-jitter..=jitter)).max(0.0));
    let end = round_tenth((gt.end + rng.gen_range(-jitter..=jitter)).min(SYNTHETIC_DURATION));
    if end > start {
        TimeSegment::new(start, end)
    } else {
        TimeSegment::new(start, start + 1.0)
    }
}

fn render_sample(
    task: TaskKind,
    choice: Option<ChoiceLetter>,
    seg: Option<TimeSegment>,
    malformed: bool,
) -> String {
    let payload = match (choice, seg) {
        (Some(c), Some(s)) => AnswerPayload::ChoiceWithSegment(c, s),
        (Some(c), None) => AnswerPayload::Choice(c),
        (None, Some(s)) => AnswerPayload::Segment(s),
        (None, None) => unreachable!("every task samples something"),
    };
    if malformed {
        // answer without the reasoning block
        return match task {
            TaskKind::Tvg => format!("<answer>{}</answer>", render_segment(&seg.expect("tvg"))),
            _ => format!("<answer>{}</answer>", choice.expect("choice task")),
        };
    }
    render_response(THINK_PLACEHOLDER, &payload)
}

/// Dataset records with `n_samples` simulated base-model outputs each.
///
/// Every item draws a hidden skill (answer accuracy) and a localization
/// jitter, so correctness counts and IoU spreads cover their full ranges.
pub fn sampled_dataset(sources: &[SourceSpec], n_samples: usize, seed: u64) -> Vec<DatasetRecord> {
    let mut out = Vec::with_capacity(sources.iter().map(|s| s.count).sum());
    for src in sources {
        let mut rng = seed::stream(seed, &format!("synthetic/dataset/{}", src.name));
        for i in 0..src.count {
            let choice_gt = src
                .task
                .has_choice()
                .then(|| random_letter(SYNTHETIC_CHOICES, &mut rng));
            let seg_gt = src.task.has_segment().then(|| {
                let len = rng.gen_range(3.0..20.0_f64);
                let start = rng.gen_range(0.0..SYNTHETIC_DURATION - len);
                TimeSegment::new(round_tenth(start), round_tenth(start + len))
            });
            let skill: f64 = rng.gen();
            let jitter: f64 = rng.gen_range(0.5..15.0);
            let samples = (0..n_samples)
                .map(|_| {
                    let c = choice_gt.map(|gt| sample_choice(gt, skill, &mut rng));
                    let s = seg_gt.map(|gt| sample_segment(gt, jitter, &mut rng));
                    render_sample(src.task, c, s, rng.gen_bool(MALFORMED_RATE))
                })
                .collect();
            out.push(DatasetRecord {
                item_id: format!("{}-{i:06}", src.name),
                source: src.name.clone(),
                task: src.task,
                question: format!("synthetic question {i}"),
                choices: choice_gt.map(|_| {
                    (0..SYNTHETIC_CHOICES).map(|k| format!("option {k}")).collect()
                }),
                gt: GroundTruth {
                    task: src.task,
                    gt_choice: choice_gt,
                    gt_segment: seg_gt,
                },
                video_ref: format!("synthetic://{}/{i}", src.name),
                samples: Some(samples),
            });
        }
    }
    out
}
