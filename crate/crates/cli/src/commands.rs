use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use groundrl_core::corpus::{load_corpus, load_scored, write_jsonl, DatasetRecord};
use groundrl_core::difficulty::{estimate as estimate_item, DifficultyRecord, Thresholds};
use groundrl_core::metrics::GroundingEval;
use groundrl_core::selector::{distribution_report, select as select_records, SelectionConfig};
use groundrl_core::trainer::synthetic::SyntheticCorpusConfig;
use groundrl_core::trainer::{run_experiment, CurvePoint, TrainConfig};
use groundrl_core::{combined_reward, parse_response, RewardBreakdown, TaskKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;

/// One scored sample: which item and sample it came from, then its rewards.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: String,
    pub sample: usize,
    #[serde(flatten)]
    pub breakdown: RewardBreakdown,
}

/// Simulation config: trainer keys at top level, corpus keys under `[corpus]`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub corpus: SyntheticCorpusConfig,
}

fn read_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
}

/// Loads a corpus, failing with every violation listed.
fn load_valid_corpus(input: &Path, task: Option<TaskKind>) -> Result<Vec<DatasetRecord>> {
    let (records, violations) = load_corpus(input)?;
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{}: {v}", input.display());
        }
        bail!("{} schema violation(s) in {}", violations.len(), input.display());
    }
    Ok(records
        .into_iter()
        .filter(|r| task.is_none_or(|t| r.task == t))
        .collect())
}

fn samples_of(record: &DatasetRecord) -> Result<&[String]> {
    record
        .samples
        .as_deref()
        .with_context(|| format!("record `{}` has no samples", record.item_id))
}

pub fn score(input: &Path, output: &Path, task: Option<TaskKind>) -> Result<()> {
    let records = load_valid_corpus(input, task)?;
    let mut rows = Vec::new();
    for r in &records {
        for (i, raw) in samples_of(r)?.iter().enumerate() {
            let parsed = parse_response(raw, r.task);
            let breakdown = combined_reward(&parsed, &r.gt).with_context(|| format!("scoring `{}`", r.item_id))?;
            rows.push(ScoredSample {
                id: r.item_id.clone(),
                sample: i,
                breakdown,
            });
        }
    }
    let mut out = create(output)?;
    write_jsonl(&mut out, &rows)?;
    out.flush()?;

    let mut manifest = RunManifest::new("score", &task, output)?.with_input(input)?;
    manifest.summary = serde_json::json!({ "records": records.len(), "samples": rows.len() });
    manifest.write(output)?;
    Ok(())
}

pub fn estimate(input: &Path, output: &Path, task: Option<TaskKind>, config: Option<&Path>) -> Result<()> {
    let thresholds: Thresholds = read_toml(config)?;
    thresholds.validate(None)?;
    let records = load_valid_corpus(input, task)?;
    let scored = records
        .iter()
        .map(|r| estimate_item(r, samples_of(r)?, &thresholds).with_context(|| format!("estimating `{}`", r.item_id)))
        .collect::<Result<Vec<DifficultyRecord>>>()?;
    let mut out = create(output)?;
    write_jsonl(&mut out, &scored)?;
    out.flush()?;

    let mut manifest = RunManifest::new("estimate", &(thresholds, task), output)?.with_input(input)?;
    manifest.summary = serde_json::json!({ "records": scored.len() });
    manifest.write(output)?;
    Ok(())
}

pub fn select(
    input: &Path,
    output: &Path,
    task: Option<TaskKind>,
    config: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg: SelectionConfig = read_toml(config)?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    let records: Vec<DifficultyRecord> = load_scored(input)?
        .into_iter()
        .filter(|r| task.is_none_or(|t| r.task == t))
        .collect();
    let selection = select_records(&records, &cfg)?;
    for w in &selection.warnings {
        eprintln!("warning: {w}");
    }
    let mut out = create(output)?;
    for id in &selection.item_ids {
        writeln!(out, "{id}")?;
    }
    out.flush()?;

    let mut manifest = RunManifest::new("select", &(&cfg, task), output)?.with_input(input)?;
    manifest.rng_seed = Some(cfg.rng_seed);
    manifest.warnings = selection.warnings.clone();
    manifest.summary = serde_json::json!({
        "selected": selection.item_ids.len(),
        "per_task": TaskKind::ALL
            .iter()
            .map(|&t| (t.name(), selection.selected_for(t)))
            .collect::<BTreeMap<_, _>>(),
        "strata": selection.strata,
        "excluded_low_spread": selection.excluded_low_spread,
    });
    manifest.write(output)?;
    Ok(())
}

pub fn simulate(output: &Path, config: Option<&Path>, seed: Option<u64>, task: Option<TaskKind>) -> Result<()> {
    let mut cfg: SimulateConfig = read_toml(config)?;
    if let Some(s) = seed {
        cfg.train.rng_seed = s;
    }
    if let Some(t) = task {
        cfg.train.task = t;
    }
    cfg.train.validate()?;
    let corpus = cfg.corpus.build(cfg.train.task, cfg.train.rng_seed)?;
    let curves = run_experiment(&cfg.train, &corpus)?;
    fs::write(output, curves.to_jsonl()?).with_context(|| format!("writing {}", output.display()))?;

    let mut manifest = RunManifest::new("simulate", &cfg, output)?;
    manifest.rng_seed = Some(cfg.train.rng_seed);
    manifest.summary = serde_json::json!({
        "task": curves.task,
        "steps": curves.points.len(),
        "initial_metric": curves.initial_metric,
        "final_metric": curves.final_metric(),
        "initial_entropy": curves.initial_entropy,
        "final_entropy": curves.final_entropy(),
    });
    manifest.write(output)?;
    Ok(())
}

enum ReportKind {
    Scored,
    Breakdowns,
    Curves,
}

fn detect(first_line: Option<&str>) -> Result<ReportKind> {
    let Some(line) = first_line else {
        return Ok(ReportKind::Scored);
    };
    let v: serde_json::Value = serde_json::from_str(line).context("first line is not JSON")?;
    let has = |k: &str| v.get(k).is_some();
    if has("expected_metric") {
        Ok(ReportKind::Curves)
    } else if has("r_format") {
        Ok(ReportKind::Breakdowns)
    } else if has("n") && has("delta_iou") {
        Ok(ReportKind::Scored)
    } else {
        bail!("unrecognized record kind")
    }
}

fn parse_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("record {}", i + 1)))
        .collect()
}

fn metrics_table(rows: &[ScoredSample]) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:>7} {:>7} {:>7} {:>7} {:>7} {:>9}", "task", "n", "mIoU", "R@0.3", "R@0.5", "R@0.7", "accuracy");
    for task in TaskKind::ALL {
        let of_task: Vec<&RewardBreakdown> = rows.iter().map(|r| &r.breakdown).filter(|b| b.task == task).collect();
        if of_task.is_empty() {
            continue;
        }
        let ious: Vec<f64> = of_task.iter().filter_map(|b| b.r_iou).collect();
        let accs: Vec<u8> = of_task.iter().filter_map(|b| b.r_acc).collect();
        let mut cells = vec![format!("{:<12}", task.name()), format!("{:>7}", of_task.len())];
        if ious.is_empty() {
            cells.extend(std::iter::repeat_n(format!("{:>7}", "-"), 4));
        } else {
            let eval = GroundingEval::from_ious(ious)?;
            cells.push(format!("{:>7.4}", eval.miou));
            cells.extend(eval.recall.iter().map(|(_, r)| format!("{r:>7.4}")));
        }
        if accs.is_empty() {
            cells.push(format!("{:>9}", "-"));
        } else {
            let acc = accs.iter().map(|&a| f64::from(a)).sum::<f64>() / accs.len() as f64;
            cells.push(format!("{acc:>9.4}"));
        }
        let _ = writeln!(s, "{}", cells.join(" "));
    }
    Ok(s)
}

fn curve_summary(points: &[CurvePoint]) -> String {
    let mut s = String::new();
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return "no curve points\n".into();
    };
    let _ = writeln!(s, "steps: {}", points.len());
    let _ = writeln!(s, "mean reward:     {:.4} -> {:.4}", first.mean_reward, last.mean_reward);
    let _ = writeln!(s, "expected metric: {:.4} -> {:.4}", first.expected_metric, last.expected_metric);
    let _ = writeln!(s, "mean entropy:    {:.4} -> {:.4}", first.mean_entropy, last.mean_entropy);
    for stratum in first.stratum_grad_norm.keys() {
        let mean = points
            .iter()
            .map(|p| p.stratum_grad_norm.get(stratum).copied().unwrap_or(0.0))
            .sum::<f64>()
            / points.len() as f64;
        let _ = writeln!(s, "mean grad norm [{stratum}]: {mean:.4}");
    }
    s
}

pub fn report(inputs: &[impl AsRef<Path>]) -> Result<()> {
    let mut text = String::new();
    for input in inputs {
        let path = input.as_ref();
        let body = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let title = path.display().to_string();
        let first = body.lines().find(|l| !l.trim().is_empty());
        let block = match detect(first).with_context(|| format!("in {title}"))? {
            ReportKind::Scored => {
                let records: Vec<DifficultyRecord> = parse_lines(&body).with_context(|| format!("in {title}"))?;
                distribution_report(&records).render_text(&title)
            }
            ReportKind::Breakdowns => {
                let rows: Vec<ScoredSample> = parse_lines(&body).with_context(|| format!("in {title}"))?;
                format!("== {title} (samples: {}) ==\n{}", rows.len(), metrics_table(&rows)?)
            }
            ReportKind::Curves => {
                let points: Vec<CurvePoint> = parse_lines(&body).with_context(|| format!("in {title}"))?;
                format!("== {title} (learning curve) ==\n{}", curve_summary(&points))
            }
        };
        text.push_str(&block);
        text.push('\n');
    }
    print!("{text}");
    Ok(())
}
