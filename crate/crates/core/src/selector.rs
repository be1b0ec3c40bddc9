//! Difficulty-aware subset construction and distribution reports.
//!
//! Selection runs per task: spread filtering for continuous tasks, then
//! largest-remainder apportionment of the task target over the
//! Easy/Medium/Hard strata, then a seeded round-robin draw over sources
//! inside each stratum. Strata never borrow from each other; a short
//! stratum yields everything it has and a warning.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::difficulty::{DifficultyLabel, DifficultyRecord, PerTask, Thresholds};
use crate::error::{Result, RltError};
use crate::parser::TaskKind;
use crate::seed;

/// How the discrete and continuous criteria combine for grounded QA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundedRule {
    /// Spread floor and difficulty ratio both apply.
    #[default]
    Intersection,
    DiscreteOnly,
    ContinuousOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub thresholds: Thresholds,
    pub ratio_easy_medium_hard: [u32; 3],
    pub target_counts: PerTask<usize>,
    pub per_source_balance: bool,
    pub rng_seed: u64,
    pub grounded_rule: GroundedRule,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            ratio_easy_medium_hard: [0, 1, 0],
            target_counts: PerTask {
                mc_qa: 16_000,
                tvg: 8_000,
                grounded_qa: 8_000,
            },
            per_source_balance: true,
            rng_seed: 0,
            grounded_rule: GroundedRule::Intersection,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratio_easy_medium_hard.iter().all(|&r| r == 0) {
            return Err(RltError::InvalidConfig(
                "ratio_easy_medium_hard must not be all zero".into(),
            ));
        }
        self.thresholds.validate(None)
    }
}

/// Splits `total` proportionally to `weights` with the largest-remainder
/// method. Ties on the remainder go to the earlier index.
pub fn largest_remainder(total: usize, weights: &[u32]) -> Vec<usize> {
    let sum: u64 = weights.iter().map(|&w| u64::from(w)).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let total = total as u64;
    let mut counts: Vec<usize> = weights
        .iter()
        .map(|&w| (total * u64::from(w) / sum) as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // stable sort keeps index order among equal remainders
    order.sort_by_key(|&i| std::cmp::Reverse(total * u64::from(weights[i]) % sum));
    for &i in order.iter().take(total as usize - assigned) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumSummary {
    pub task: TaskKind,
    /// `easy`, `medium`, `hard`, or `all` for unlabeled tasks.
    pub stratum: String,
    pub requested: usize,
    pub eligible: usize,
    pub selected: usize,
    pub per_source: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub item_ids: Vec<String>,
    pub strata: Vec<StratumSummary>,
    /// Records removed by the spread floor, per task.
    pub excluded_low_spread: BTreeMap<TaskKind, usize>,
    pub warnings: Vec<String>,
}

impl Selection {
    pub fn selected_for(&self, task: TaskKind) -> usize {
        self.strata.iter().filter(|s| s.task == task).map(|s| s.selected).sum()
    }
}

fn draw<'a>(
    mut pool: Vec<&'a DifficultyRecord>,
    k: usize,
    balance: bool,
    rng: &mut impl rand::Rng,
) -> Vec<&'a DifficultyRecord> {
    pool.sort_by(|a, b| (&a.source, &a.item_id).cmp(&(&b.source, &b.item_id)));
    if !balance {
        pool.shuffle(rng);
        pool.truncate(k);
        return pool;
    }
    let mut by_source: BTreeMap<&str, Vec<&DifficultyRecord>> = BTreeMap::new();
    for r in pool {
        by_source.entry(r.source.as_str()).or_default().push(r);
    }
    let mut queues: Vec<Vec<&DifficultyRecord>> = by_source
        .into_values()
        .map(|mut items| {
            items.shuffle(rng);
            items.reverse(); // pop from the back in shuffled order
            items
        })
        .collect();
    queues.shuffle(rng);

    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let before = out.len();
        for q in queues.iter_mut() {
            if out.len() == k {
                break;
            }
            if let Some(r) = q.pop() {
                out.push(r);
            }
        }
        if out.len() == before {
            break;
        }
    }
    out
}

fn passes_spread(r: &DifficultyRecord, cfg: &SelectionConfig) -> bool {
    let uses_spread = match r.task {
        TaskKind::McQa => false,
        TaskKind::Tvg => true,
        TaskKind::GroundedQa => cfg.grounded_rule != GroundedRule::DiscreteOnly,
    };
    !uses_spread || r.delta_iou >= cfg.thresholds.delta_min.get(r.task)
}

fn uses_strata(task: TaskKind, cfg: &SelectionConfig) -> bool {
    match task {
        TaskKind::McQa => true,
        TaskKind::Tvg => false,
        TaskKind::GroundedQa => cfg.grounded_rule != GroundedRule::ContinuousOnly,
    }
}

/// Picks a difficulty-balanced subset of `records`.
pub fn select(records: &[DifficultyRecord], cfg: &SelectionConfig) -> Result<Selection> {
    cfg.validate()?;
    let mut selection = Selection {
        item_ids: Vec::new(),
        strata: Vec::new(),
        excluded_low_spread: BTreeMap::new(),
        warnings: Vec::new(),
    };

    for task in TaskKind::ALL {
        let target = cfg.target_counts.get(task);
        let of_task: Vec<&DifficultyRecord> = records.iter().filter(|r| r.task == task).collect();
        let (eligible, excluded): (Vec<_>, Vec<_>) =
            of_task.into_iter().partition(|r| passes_spread(r, cfg));
        if !excluded.is_empty() {
            selection.excluded_low_spread.insert(task, excluded.len());
        }

        let strata: Vec<(String, usize, Vec<&DifficultyRecord>)> = if uses_strata(task, cfg) {
            let requested = largest_remainder(target, &cfg.ratio_easy_medium_hard);
            let strata = DifficultyLabel::ALL
                .into_iter()
                .zip(requested)
                .map(|(label, req)| {
                    let pool: Vec<_> = eligible
                        .iter()
                        .copied()
                        .filter(|r| r.label == Some(label))
                        .collect();
                    (label.name().to_string(), req, pool)
                })
                .collect();
            let unlabeled = eligible.iter().filter(|r| r.label.is_none()).count();
            if unlabeled > 0 {
                selection
                    .warnings
                    .push(format!("{task}: {unlabeled} records without a difficulty label were skipped"));
            }
            strata
        } else {
            vec![("all".to_string(), target, eligible)]
        };

        for (name, requested, pool) in strata {
            let eligible_n = pool.len();
            if requested == 0 {
                selection.strata.push(StratumSummary {
                    task,
                    stratum: name,
                    requested,
                    eligible: eligible_n,
                    selected: 0,
                    per_source: BTreeMap::new(),
                });
                continue;
            }
            if eligible_n < requested {
                selection.warnings.push(format!(
                    "shortfall: {task}/{name} requested {requested}, only {eligible_n} eligible"
                ));
            }
            let mut rng = seed::stream(cfg.rng_seed, &format!("select/{task}/{name}"));
            let picked = draw(pool, requested, cfg.per_source_balance, &mut rng);
            let mut per_source = BTreeMap::new();
            for r in &picked {
                *per_source.entry(r.source.clone()).or_insert(0) += 1;
            }
            selection
                .item_ids
                .extend(picked.iter().map(|r| r.item_id.clone()));
            selection.strata.push(StratumSummary {
                task,
                stratum: name,
                requested,
                eligible: eligible_n,
                selected: picked.len(),
                per_source,
            });
        }
    }
    Ok(selection)
}

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionReport {
    /// Index `c` counts records with `c` correct samples.
    pub correctness_histogram: Vec<u64>,
    /// Spread `max - mean` of per-sample IoUs, bins of width 0.05.
    pub delta_iou_histogram: Vec<u64>,
    pub mean_iou_histogram: Vec<u64>,
    pub label_counts: BTreeMap<DifficultyLabel, u64>,
    pub corpus_size: usize,
}

/// Bin index for a value in `[0, 1]`; 1.0 lands in the last bin.
pub fn unit_bin(x: f64, bins: usize) -> usize {
    // the small nudge keeps exact multiples of the width (0.15, 0.35...)
    // out of the bin below after floating-point scaling
    let i = (x.clamp(0.0, 1.0) * bins as f64 + 1e-9).floor() as usize;
    i.min(bins - 1)
}

pub fn distribution_report(records: &[DifficultyRecord]) -> DistributionReport {
    let max_n = records
        .iter()
        .filter(|r| r.correct_count.is_some())
        .map(|r| r.n_samples)
        .max()
        .unwrap_or(0);
    let mut report = DistributionReport {
        correctness_histogram: vec![0; max_n + 1],
        delta_iou_histogram: vec![0; HISTOGRAM_BINS],
        mean_iou_histogram: vec![0; HISTOGRAM_BINS],
        label_counts: BTreeMap::new(),
        corpus_size: records.len(),
    };
    for r in records {
        if let Some(c) = r.correct_count {
            report.correctness_histogram[(c as usize).min(max_n)] += 1;
        }
        if !r.ious.is_empty() {
            report.delta_iou_histogram[unit_bin(r.delta_iou, HISTOGRAM_BINS)] += 1;
            report.mean_iou_histogram[unit_bin(r.mean_iou, HISTOGRAM_BINS)] += 1;
        }
        if let Some(l) = r.label {
            *report.label_counts.entry(l).or_insert(0) += 1;
        }
    }
    report
}

impl DistributionReport {
    pub fn render_text(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "== {title} (records: {}) ==", self.corpus_size);
        let _ = writeln!(s, "correctness count histogram:");
        for (c, n) in self.correctness_histogram.iter().enumerate() {
            let _ = writeln!(s, "  c={c:<3} {n}");
        }
        for (name, hist) in [
            ("delta_iou (max - mean)", &self.delta_iou_histogram),
            ("mean_iou", &self.mean_iou_histogram),
        ] {
            let _ = writeln!(s, "{name} histogram:");
            let width = 1.0 / hist.len() as f64;
            for (i, n) in hist.iter().enumerate() {
                let lo = i as f64 * width;
                let close = if i + 1 == hist.len() { ']' } else { ')' };
                let _ = writeln!(s, "  [{lo:.2}, {:.2}{close} {n}", lo + width);
            }
        }
        let _ = writeln!(s, "labels:");
        for l in DifficultyLabel::ALL {
            let _ = writeln!(s, "  {:<7} {}", l.name(), self.label_counts.get(&l).unwrap_or(&0));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: usize, source: &str, task: TaskKind, label: Option<DifficultyLabel>, delta: f64) -> DifficultyRecord {
        DifficultyRecord {
            item_id: format!("{task}-{id:05}"),
            source: source.into(),
            task,
            n_samples: 8,
            correct_count: label.map(|l| match l {
                DifficultyLabel::Easy => 8,
                DifficultyLabel::Medium => 4,
                DifficultyLabel::Hard => 0,
            }),
            ious: if task.has_segment() { vec![delta, 0.0] } else { vec![] },
            mean_iou: delta / 2.0,
            delta_iou: delta,
            label,
        }
    }

    #[test]
    fn largest_remainder_small_cases() {
        assert_eq!(largest_remainder(100, &[1, 8, 1]), [10, 80, 10]);
        assert_eq!(largest_remainder(10, &[1, 1, 1]), [4, 3, 3]);
        assert_eq!(largest_remainder(7, &[2, 6, 2]), [2, 4, 1]);
        assert_eq!(largest_remainder(0, &[1, 8, 1]), [0, 0, 0]);
        assert_eq!(largest_remainder(5, &[0, 0, 0]), [0, 0, 0]);
    }

    #[test]
    fn medium_only_ratio() {
        let records: Vec<_> = (0..30)
            .map(|i| rec(i, "s", TaskKind::McQa, Some(DifficultyLabel::ALL[i % 3]), 0.0))
            .collect();
        let cfg = SelectionConfig {
            ratio_easy_medium_hard: [0, 10, 0],
            target_counts: PerTask { mc_qa: 5, tvg: 0, grounded_qa: 0 },
            ..SelectionConfig::default()
        };
        let sel = select(&records, &cfg).unwrap();
        assert_eq!(sel.item_ids.len(), 5);
        for id in &sel.item_ids {
            let r = records.iter().find(|r| &r.item_id == id).unwrap();
            assert_eq!(r.label, Some(DifficultyLabel::Medium));
        }
    }

    #[test]
    fn all_low_spread_is_empty_with_warning() {
        let records: Vec<_> = (0..10).map(|i| rec(i, "s", TaskKind::Tvg, None, 0.2)).collect();
        let cfg = SelectionConfig {
            target_counts: PerTask { mc_qa: 0, tvg: 5, grounded_qa: 0 },
            ..SelectionConfig::default()
        };
        let sel = select(&records, &cfg).unwrap();
        assert!(sel.item_ids.is_empty());
        assert_eq!(sel.excluded_low_spread.get(&TaskKind::Tvg), Some(&10));
        assert!(sel.warnings.iter().any(|w| w.contains("shortfall")));
    }

    #[test]
    fn source_balance_with_small_source() {
        let mut records: Vec<_> = (0..50).map(|i| rec(i, "big", TaskKind::Tvg, None, 0.5)).collect();
        records.extend((50..53).map(|i| rec(i, "small", TaskKind::Tvg, None, 0.5)));
        records.extend((53..100).map(|i| rec(i, "mid", TaskKind::Tvg, None, 0.5)));
        let cfg = SelectionConfig {
            target_counts: PerTask { mc_qa: 0, tvg: 21, grounded_qa: 0 },
            ..SelectionConfig::default()
        };
        let sel = select(&records, &cfg).unwrap();
        let per = &sel.strata.iter().find(|s| s.task == TaskKind::Tvg).unwrap().per_source;
        assert_eq!(per["small"], 3);
        assert_eq!(per["big"] + per["mid"], 18);
        assert!(per["big"].abs_diff(per["mid"]) <= 1);
    }

    #[test]
    fn grounded_rule_variants() {
        let records = vec![
            rec(0, "s", TaskKind::GroundedQa, Some(DifficultyLabel::Medium), 0.05),
            rec(1, "s", TaskKind::GroundedQa, Some(DifficultyLabel::Medium), 0.5),
            rec(2, "s", TaskKind::GroundedQa, Some(DifficultyLabel::Easy), 0.5),
        ];
        let mut cfg = SelectionConfig {
            target_counts: PerTask { mc_qa: 0, tvg: 0, grounded_qa: 3 },
            ..SelectionConfig::default()
        };
        assert_eq!(select(&records, &cfg).unwrap().item_ids.len(), 1);
        cfg.grounded_rule = GroundedRule::DiscreteOnly;
        assert_eq!(select(&records, &cfg).unwrap().item_ids.len(), 2);
        cfg.grounded_rule = GroundedRule::ContinuousOnly;
        assert_eq!(select(&records, &cfg).unwrap().item_ids.len(), 2);
    }

    #[test]
    fn zero_ratio_is_rejected() {
        let cfg = SelectionConfig {
            ratio_easy_medium_hard: [0, 0, 0],
            ..SelectionConfig::default()
        };
        assert!(select(&[], &cfg).is_err());
    }

    #[test]
    fn report_examples() {
        let point: Vec<_> = (0..10)
            .map(|i| rec(i, "s", TaskKind::McQa, Some(DifficultyLabel::Easy), 0.0))
            .collect();
        let r = distribution_report(&point);
        assert_eq!(r.correctness_histogram[8], 10);
        assert_eq!(r.correctness_histogram.iter().sum::<u64>(), 10);

        let spread = vec![rec(0, "s", TaskKind::Tvg, None, 0.02), rec(1, "s", TaskKind::Tvg, None, 0.07)];
        let r = distribution_report(&spread);
        assert_eq!(r.delta_iou_histogram[0], 1);
        assert_eq!(r.delta_iou_histogram[1], 1);
        assert_eq!(r.delta_iou_histogram.iter().sum::<u64>(), 2);

        let empty = distribution_report(&[]);
        assert_eq!(empty.corpus_size, 0);
        assert!(empty.correctness_histogram.iter().all(|&c| c == 0));
        assert!(empty.delta_iou_histogram.iter().all(|&c| c == 0));
    }

    #[test]
    fn bin_edges() {
        assert_eq!(unit_bin(0.0, 20), 0);
        assert_eq!(unit_bin(0.05, 20), 1);
        assert_eq!(unit_bin(0.15, 20), 3);
        assert_eq!(unit_bin(0.7, 20), 14);
        assert_eq!(unit_bin(1.0, 20), 19);
    }
}
