//! Tabular toy policies and the registry that builds them by task name.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;

use crate::error::{Result, RltError};
use crate::parser::{AnswerPayload, ChoiceLetter, TaskKind};
use crate::segment::TimeSegment;
use crate::trainer::ToyCorpus;

/// Per-item logits over a shared, possibly masked, action space.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitTable {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    logits: Vec<Vec<f64>>,
    mask: Vec<bool>,
}

impl LogitTable {
    pub fn new(ids: Vec<String>, mask: Vec<bool>) -> Result<Self> {
        if !mask.iter().any(|&m| m) {
            return Err(RltError::InvalidConfig("action mask has no valid action".into()));
        }
        let index: HashMap<String, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        if index.len() != ids.len() {
            return Err(RltError::InvalidConfig("duplicate item ids".into()));
        }
        let logits = vec![vec![0.0; mask.len()]; ids.len()];
        Ok(Self { ids, index, logits, mask })
    }

    pub fn n_items(&self) -> usize {
        self.ids.len()
    }

    pub fn n_actions(&self) -> usize {
        self.mask.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn is_valid(&self, action: usize) -> bool {
        self.mask.get(action).copied().unwrap_or(false)
    }

    pub fn valid_actions(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn logits(&self, item: usize) -> &[f64] {
        &self.logits[item]
    }

    pub fn logits_mut(&mut self, item: usize) -> &mut [f64] {
        &mut self.logits[item]
    }

    pub fn set_logits(&mut self, item: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.n_actions() {
            return Err(RltError::LengthMismatch {
                what: "initial logits vs action space",
                left: values.len(),
                right: self.n_actions(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RltError::NonFinite("initial logits"));
        }
        self.logits[item].copy_from_slice(values);
        Ok(())
    }

    /// Softmax of `logits / temperature` over valid actions; masked
    /// actions get probability 0.
    pub fn probs(&self, item: usize, temperature: f64) -> Vec<f64> {
        let row = &self.logits[item];
        let max = self
            .valid_actions()
            .map(|a| row[a] / temperature)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = row
            .iter()
            .zip(&self.mask)
            .map(|(&z, &m)| if m { (z / temperature - max).exp() } else { 0.0 })
            .collect();
        let sum: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= sum);
        p
    }

    pub fn log_prob(&self, item: usize, action: usize, temperature: f64) -> f64 {
        let row = &self.logits[item];
        let scaled: Vec<f64> = self.valid_actions().map(|a| row[a] / temperature).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scaled.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        row[action] / temperature - lse
    }

    pub fn sample(&self, item: usize, temperature: f64, rng: &mut impl Rng) -> usize {
        let p = self.probs(item, temperature);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (a, &pa) in p.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            acc += pa;
            last = a;
            if u < acc {
                return a;
            }
        }
        last
    }

    pub fn entropy(&self, item: usize, temperature: f64) -> f64 {
        self.probs(item, temperature)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }
}

/// A tabular policy whose actions render to answer payloads.
pub trait ToyPolicy: Send + Sync {
    fn name(&self) -> &'static str;

    fn task(&self) -> TaskKind;

    fn table(&self) -> &LogitTable;

    fn table_mut(&mut self) -> &mut LogitTable;

    /// The answer an action stands for. `action` must be unmasked.
    fn payload(&self, action: usize) -> AnswerPayload;
}

/// Categorical distribution over `n` answer letters.
#[derive(Debug, Clone)]
pub struct CategoricalPolicy {
    table: LogitTable,
}

impl CategoricalPolicy {
    pub fn new(ids: Vec<String>, n_choices: usize) -> Result<Self> {
        if !(2..=ChoiceLetter::MAX_CHOICES).contains(&n_choices) {
            return Err(RltError::InvalidConfig(format!(
                "n_choices must be in 2..={}, got {n_choices}",
                ChoiceLetter::MAX_CHOICES
            )));
        }
        Ok(Self {
            table: LogitTable::new(ids, vec![true; n_choices])?,
        })
    }
}

impl ToyPolicy for CategoricalPolicy {
    fn name(&self) -> &'static str {
        "categorical"
    }

    fn task(&self) -> TaskKind {
        TaskKind::McQa
    }

    fn table(&self) -> &LogitTable {
        &self.table
    }

    fn table_mut(&mut self) -> &mut LogitTable {
        &mut self.table
    }

    fn payload(&self, action: usize) -> AnswerPayload {
        AnswerPayload::Choice(ChoiceLetter::from_index(action).expect("action within choices"))
    }
}

/// Discretized timeline `[0, T]` with `B` bins of width `T / B`.
///
/// Cell `(s, e)` stands for the span `[s * w, (e + 1) * w]`; cells with
/// `e < s` would end before they start and are masked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentGrid {
    pub timeline: f64,
    pub bins: usize,
}

impl SegmentGrid {
    pub fn new(timeline: f64, bins: usize) -> Result<Self> {
        if !(timeline > 0.0 && timeline.is_finite()) || bins < 1 {
            return Err(RltError::InvalidConfig(format!(
                "segment grid needs timeline > 0 and bins >= 1 (got {timeline}, {bins})"
            )));
        }
        Ok(Self { timeline, bins })
    }

    pub fn width(&self) -> f64 {
        self.timeline / self.bins as f64
    }

    pub fn n_cells(&self) -> usize {
        self.bins * self.bins
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.n_cells())
            .map(|c| c % self.bins >= c / self.bins)
            .collect()
    }

    pub fn cell(&self, start_bin: usize, end_bin: usize) -> usize {
        start_bin * self.bins + end_bin
    }

    pub fn segment(&self, cell: usize) -> TimeSegment {
        let (s, e) = (cell / self.bins, cell % self.bins);
        let w = self.width();
        TimeSegment::new(s as f64 * w, (e + 1) as f64 * w)
    }
}

/// Joint distribution over start and end bins.
#[derive(Debug, Clone)]
pub struct SegmentPolicy {
    table: LogitTable,
    grid: SegmentGrid,
}

impl SegmentPolicy {
    pub fn new(ids: Vec<String>, grid: SegmentGrid) -> Result<Self> {
        Ok(Self {
            table: LogitTable::new(ids, grid.mask())?,
            grid,
        })
    }

    pub fn grid(&self) -> SegmentGrid {
        self.grid
    }
}

impl ToyPolicy for SegmentPolicy {
    fn name(&self) -> &'static str {
        "segment"
    }

    fn task(&self) -> TaskKind {
        TaskKind::Tvg
    }

    fn table(&self) -> &LogitTable {
        &self.table
    }

    fn table_mut(&mut self) -> &mut LogitTable {
        &mut self.table
    }

    fn payload(&self, action: usize) -> AnswerPayload {
        AnswerPayload::Segment(self.grid.segment(action))
    }
}

/// Joint distribution over (answer letter, observed span).
#[derive(Debug, Clone)]
pub struct GroundedPolicy {
    table: LogitTable,
    grid: SegmentGrid,
    n_choices: usize,
}

impl GroundedPolicy {
    pub fn new(ids: Vec<String>, n_choices: usize, grid: SegmentGrid) -> Result<Self> {
        if !(2..=ChoiceLetter::MAX_CHOICES).contains(&n_choices) {
            return Err(RltError::InvalidConfig(format!("invalid n_choices {n_choices}")));
        }
        let cells = grid.mask();
        let mask = (0..n_choices).flat_map(|_| cells.iter().copied()).collect();
        Ok(Self {
            table: LogitTable::new(ids, mask)?,
            grid,
            n_choices,
        })
    }

    pub fn action(&self, choice: usize, cell: usize) -> usize {
        choice * self.grid.n_cells() + cell
    }

    pub fn n_choices(&self) -> usize {
        self.n_choices
    }
}

impl ToyPolicy for GroundedPolicy {
    fn name(&self) -> &'static str {
        "grounded"
    }

    fn task(&self) -> TaskKind {
        TaskKind::GroundedQa
    }

    fn table(&self) -> &LogitTable {
        &self.table
    }

    fn table_mut(&mut self) -> &mut LogitTable {
        &mut self.table
    }

    fn payload(&self, action: usize) -> AnswerPayload {
        let cells = self.grid.n_cells();
        let letter = ChoiceLetter::from_index(action / cells).expect("action within choices");
        AnswerPayload::ChoiceWithSegment(letter, self.grid.segment(action % cells))
    }
}

/// Builds a fresh policy for a corpus.
pub trait PolicyFactory: Send + Sync {
    /// Task name this factory is registered under.
    fn name(&self) -> &'static str;

    fn build(&self, corpus: &ToyCorpus) -> Result<Box<dyn ToyPolicy>>;
}

fn init_logits(policy: &mut dyn ToyPolicy, corpus: &ToyCorpus) -> Result<()> {
    for (i, item) in corpus.items.iter().enumerate() {
        if let Some(l) = &item.init_logits {
            policy.table_mut().set_logits(i, l)?;
        }
    }
    Ok(())
}

fn item_ids(corpus: &ToyCorpus) -> Vec<String> {
    corpus.items.iter().map(|i| i.id.clone()).collect()
}

struct CategoricalFactory;

impl PolicyFactory for CategoricalFactory {
    fn name(&self) -> &'static str {
        "mc_qa"
    }

    fn build(&self, corpus: &ToyCorpus) -> Result<Box<dyn ToyPolicy>> {
        let mut p = CategoricalPolicy::new(item_ids(corpus), corpus.n_choices)?;
        init_logits(&mut p, corpus)?;
        Ok(Box::new(p))
    }
}

struct SegmentFactory;

impl PolicyFactory for SegmentFactory {
    fn name(&self) -> &'static str {
        "tvg"
    }

    fn build(&self, corpus: &ToyCorpus) -> Result<Box<dyn ToyPolicy>> {
        let grid = SegmentGrid::new(corpus.timeline, corpus.bins)?;
        let mut p = SegmentPolicy::new(item_ids(corpus), grid)?;
        init_logits(&mut p, corpus)?;
        Ok(Box::new(p))
    }
}

struct GroundedFactory;

impl PolicyFactory for GroundedFactory {
    fn name(&self) -> &'static str {
        "grounded_qa"
    }

    fn build(&self, corpus: &ToyCorpus) -> Result<Box<dyn ToyPolicy>> {
        let grid = SegmentGrid::new(corpus.timeline, corpus.bins)?;
        let mut p = GroundedPolicy::new(item_ids(corpus), corpus.n_choices, grid)?;
        init_logits(&mut p, corpus)?;
        Ok(Box::new(p))
    }
}

#[derive(Clone, Default)]
pub struct PolicyRegistry {
    factories: BTreeMap<&'static str, Arc<dyn PolicyFactory>>,
}

impl PolicyRegistry {
    pub fn builtin() -> Self {
        let mut r = Self::default();
        r.register(Arc::new(CategoricalFactory));
        r.register(Arc::new(SegmentFactory));
        r.register(Arc::new(GroundedFactory));
        r
    }

    pub fn register(&mut self, factory: Arc<dyn PolicyFactory>) {
        self.factories.insert(factory.name(), factory);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn PolicyFactory>> {
        self.factories
            .get(name)
            .cloned()
            .ok_or_else(|| RltError::UnknownStrategy(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }
}
