//! Metrics, single experiments and configuration sweeps.
//!
//! FAKE is the positive class everywhere. An ABSTAIN counts as a predicted
//! REAL in the confusion matrix but keeps its 0.5 score for ROC AUC.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::balanced_rag::{
    retrieve_balanced_with, retrieve_plain, retrieve_random, retrieve_topk_per_class, BalancedExampleSet,
    BalancedOptions, RagMode, RetrievalError,
};
use crate::domain::{Label, LabeledDataset, PropagationTree, Split};
use crate::embedding_index::EmbeddingIndex;
use crate::llm_client::{
    classify_batch, BatchOptions, ChatBackend, Decision, Decoding, PredictionOutcome, TranscriptLog,
};
use crate::prompt_builder::{
    render, EncodingMode, ExampleLayout, ExampleMaterial, PromptError, PromptTemplate, RenderedPrompt,
};
use crate::seed::derive_seed;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{outcomes} outcomes but {truth} truth labels")]
    LengthMismatch { outcomes: usize, truth: usize },
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("index contains test cascade {0}")]
    Leakage(String),
    #[error("test split is empty")]
    EmptyTest,
    #[error("retrieval for {cascade_id}: {source}")]
    Retrieval { cascade_id: String, source: RetrievalError },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted_fake: bool, truth: Label) {
        match (predicted_fake, truth.is_fake()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_).unwrap_or(0.0)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn).unwrap_or(0.0)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Degenerate cells are 0 and named in `flags`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub accuracy: f64,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Precision,
    Recall,
    F1,
    RocAuc,
    Accuracy,
}

impl MetricName {
    pub const ALL: [MetricName; 5] =
        [MetricName::Precision, MetricName::Recall, MetricName::F1, MetricName::RocAuc, MetricName::Accuracy];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Precision => "precision",
            MetricName::Recall => "recall",
            MetricName::F1 => "f1",
            MetricName::RocAuc => "roc_auc",
            MetricName::Accuracy => "accuracy",
        }
    }
}

impl Metrics {
    pub fn get(&self, name: MetricName) -> f64 {
        match name {
            MetricName::Precision => self.precision,
            MetricName::Recall => self.recall,
            MetricName::F1 => self.f1,
            MetricName::RocAuc => self.roc_auc,
            MetricName::Accuracy => self.accuracy,
        }
    }
}

/// Mann-Whitney AUC with midranks for ties. `None` when a class is absent.
pub fn roc_auc(scores: &[f64], truth: &[Label]) -> Option<f64> {
    let positives = truth.iter().filter(|l| l.is_fake()).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| truth[k].is_fake()).count() as f64;
        i = j + 1;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn metrics_from(counts: &ConfusionCounts, auc: Option<f64>) -> Metrics {
    let mut flags = Vec::new();
    let precision = ratio(counts.tp, counts.tp + counts.fp).unwrap_or_else(|| {
        flags.push("precision_undefined".to_string());
        0.0
    });
    let recall = ratio(counts.tp, counts.tp + counts.fn_).unwrap_or_else(|| {
        flags.push("recall_undefined".to_string());
        0.0
    });
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        flags.push("f1_undefined".to_string());
        0.0
    };
    let roc_auc = auc.unwrap_or_else(|| {
        flags.push("roc_auc_undefined".to_string());
        0.0
    });
    let accuracy = ratio(counts.tp + counts.tn, counts.total()).unwrap_or(0.0);
    Metrics { precision, recall, f1, roc_auc, accuracy, flags }
}

/// Confusion matrix and metrics; `truth[i]` belongs to `outcomes[i]`.
pub fn compute_metrics(
    outcomes: &[PredictionOutcome],
    truth: &[Label],
) -> Result<(ConfusionCounts, Metrics), EvalError> {
    if outcomes.len() != truth.len() {
        return Err(EvalError::LengthMismatch { outcomes: outcomes.len(), truth: truth.len() });
    }
    let mut counts = ConfusionCounts::default();
    for (o, &t) in outcomes.iter().zip(truth) {
        counts.record(o.decision == Decision::Fake, t);
    }
    let scores: Vec<f64> = outcomes.iter().map(|o| o.score).collect();
    Ok((counts, metrics_from(&counts, roc_auc(&scores, truth))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Row label in tables and plots.
    pub name: String,
    pub rag_mode: RagMode,
    /// Total example stanzas in the prompt.
    pub shots: usize,
    pub temperature: f64,
    pub encoding_mode: EncodingMode,
    pub model: String,
    pub seed: u64,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub layout: ExampleLayout,
    pub distinct_partners: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "balanced_rag".to_string(),
            rag_mode: RagMode::BalancedRag,
            shots: 6,
            temperature: 0.0,
            encoding_mode: EncodingMode::AggregatedMetrics,
            model: "llama3.1:70b".to_string(),
            seed: 0,
            train_fraction: 0.8,
            split_seed: 0,
            layout: ExampleLayout::Grouped,
            distinct_partners: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        match self.rag_mode {
            RagMode::None if self.shots != 0 => return bad(format!("mode none takes 0 shots, got {}", self.shots)),
            RagMode::PlainRag | RagMode::Random if self.shots == 0 => {
                return bad(format!("mode {} needs at least 1 shot", self.rag_mode.as_str()))
            }
            RagMode::BalancedRag | RagMode::TopkPerClass if self.shots == 0 || self.shots % 2 == 1 => {
                return bad(format!(
                    "mode {} needs a positive even shot count, got {}",
                    self.rag_mode.as_str(),
                    self.shots
                ))
            }
            _ => {}
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        Ok(())
    }

    pub fn decoding(&self, max_tokens: u32) -> Decoding {
        Decoding { model: self.model.clone(), temperature: self.temperature, max_tokens }
    }
}

/// Per-query leave-one-out retrieval for any mode.
pub fn retrieve_for(
    config: &ExperimentConfig,
    index: &EmbeddingIndex,
    tree: &PropagationTree,
) -> Result<BalancedExampleSet, RetrievalError> {
    let id = tree.cascade_id();
    let exclude = Some(id);
    match config.rag_mode {
        RagMode::None => Ok(BalancedExampleSet::empty()),
        RagMode::Random => {
            retrieve_random(index, config.shots, derive_seed(config.seed, &[b"query", id.as_bytes()]), exclude)
        }
        mode => {
            let query = index.embed(tree);
            match mode {
                RagMode::PlainRag => retrieve_plain(index, &query, config.shots, exclude),
                RagMode::BalancedRag => retrieve_balanced_with(
                    index,
                    &query,
                    config.shots / 2,
                    exclude,
                    BalancedOptions { distinct_partners: config.distinct_partners },
                ),
                _ => retrieve_topk_per_class(index, &query, config.shots / 2, exclude),
            }
        }
    }
}

/// Dataset, index and template shared by every cell of a sweep.
pub struct Workbench<'a> {
    dataset: &'a LabeledDataset,
    index: &'a EmbeddingIndex,
    template: PromptTemplate,
    materials: HashMap<String, ExampleMaterial>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub batch: BatchOptions,
    pub max_tokens: u32,
}

impl<'a> Workbench<'a> {
    pub fn new(
        dataset: &'a LabeledDataset,
        index: &'a EmbeddingIndex,
        template: PromptTemplate,
    ) -> Result<Self, EvalError> {
        let test_ids: HashSet<&str> = dataset.split_trees(Split::Test).map(|t| t.cascade_id()).collect();
        if test_ids.is_empty() {
            return Err(EvalError::EmptyTest);
        }
        if let Some(e) = index.entries().iter().find(|e| test_ids.contains(e.cascade_id.as_str())) {
            return Err(EvalError::Leakage(e.cascade_id.clone()));
        }
        let materials = dataset
            .split_trees(Split::Train)
            .map(|t| (t.cascade_id().to_string(), ExampleMaterial::from_tree(t)))
            .collect();
        Ok(Workbench { dataset, index, template, materials })
    }

    /// TEST trees ordered by cascade id.
    pub fn test_trees(&self) -> Vec<&'a PropagationTree> {
        let mut trees: Vec<_> = self.dataset.split_trees(Split::Test).collect();
        trees.sort_by(|a, b| a.cascade_id().cmp(b.cascade_id()));
        trees
    }

    pub fn prompts(&self, config: &ExperimentConfig) -> Result<Vec<RenderedPrompt>, EvalError> {
        config.validate()?;
        let template = self.template.clone().with_encoding(config.encoding_mode).with_layout(config.layout);
        self.test_trees()
            .into_iter()
            .map(|tree| {
                let examples = retrieve_for(config, self.index, tree)
                    .map_err(|source| EvalError::Retrieval { cascade_id: tree.cascade_id().to_string(), source })?;
                Ok(render(&template, tree, &examples, &self.materials)?)
            })
            .collect()
    }

    pub fn run(
        &self,
        config: &ExperimentConfig,
        backend: &dyn ChatBackend,
        options: RunOptions,
        transcript: Option<&TranscriptLog>,
    ) -> Result<ExperimentReport, EvalError> {
        let started = Instant::now();
        let prompts = self.prompts(config)?;
        let outcomes =
            classify_batch(backend, &prompts, &config.decoding(options.max_tokens), options.batch, None, transcript);
        let truth: HashMap<&str, Label> =
            self.dataset.split_trees(Split::Test).map(|t| (t.cascade_id(), LabeledDataset::label(t))).collect();
        let shots: HashMap<&str, usize> = prompts.iter().map(|p| (p.cascade_id.as_str(), p.shot_count)).collect();
        let items: Vec<ReportItem> = outcomes
            .into_iter()
            .map(|o| ReportItem {
                truth: truth[o.cascade_id.as_str()],
                shot_count: shots[o.cascade_id.as_str()],
                outcome: o,
            })
            .collect();
        ExperimentReport::assemble(config.clone(), items, started.elapsed().as_secs_f64())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportItem {
    #[serde(flatten)]
    pub outcome: PredictionOutcome,
    pub truth: Label,
    pub shot_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub metrics: Metrics,
    pub confusion: ConfusionCounts,
    pub abstain_count: usize,
    pub error_count: usize,
    pub wall_clock_secs: f64,
    pub items: Vec<ReportItem>,
}

impl ExperimentReport {
    pub fn assemble(config: ExperimentConfig, items: Vec<ReportItem>, wall_clock_secs: f64) -> Result<Self, EvalError> {
        let (confusion, metrics) = Self::metrics_of(&items)?;
        Ok(ExperimentReport {
            config,
            metrics,
            confusion,
            abstain_count: items.iter().filter(|i| i.outcome.decision == Decision::Abstain).count(),
            error_count: items.iter().filter(|i| i.outcome.error.is_some()).count(),
            wall_clock_secs,
            items,
        })
    }

    fn metrics_of(items: &[ReportItem]) -> Result<(ConfusionCounts, Metrics), EvalError> {
        let outcomes: Vec<PredictionOutcome> = items.iter().map(|i| i.outcome.clone()).collect();
        let truth: Vec<Label> = items.iter().map(|i| i.truth).collect();
        compute_metrics(&outcomes, &truth)
    }

    /// Metrics recomputed from the stored items.
    pub fn recompute(&self) -> Result<(ConfusionCounts, Metrics), EvalError> {
        Self::metrics_of(&self.items)
    }
}

/// Convenience wrapper for a one-off experiment with the bundled template.
pub fn run_experiment(
    config: &ExperimentConfig,
    dataset: &LabeledDataset,
    index: &EmbeddingIndex,
    backend: &dyn ChatBackend,
    options: RunOptions,
) -> Result<ExperimentReport, EvalError> {
    Workbench::new(dataset, index, PromptTemplate::default())?.run(config, backend, options, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub config: ExperimentConfig,
    pub report: Option<ExperimentReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Best {
    pub metric: MetricName,
    pub cell: usize,
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub best: Vec<Best>,
}

/// Argmax per metric over successful cells; ties go to the earlier cell.
pub fn best_by_metric(cells: &[SweepCell]) -> Vec<Best> {
    MetricName::ALL
        .iter()
        .filter_map(|&metric| {
            let mut best: Option<(usize, f64)> = None;
            for (i, cell) in cells.iter().enumerate() {
                let Some(report) = &cell.report else { continue };
                let v = report.metrics.get(metric);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            best.map(|(cell, value)| Best { metric, cell, name: cells[cell].config.name.clone(), value })
        })
        .collect()
}

/// Run every cell in order. A failing cell is recorded, not fatal.
pub fn sweep(
    bench: &Workbench<'_>,
    grid: &[ExperimentConfig],
    backend: &dyn ChatBackend,
    options: RunOptions,
    transcript: Option<&TranscriptLog>,
) -> Result<SweepResult, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let cells: Vec<SweepCell> = grid
        .iter()
        .map(|config| {
            log::info!("sweep cell {}", config.name);
            match bench.run(config, backend, options, transcript) {
                Ok(report) => SweepCell { config: config.clone(), report: Some(report), error: None },
                Err(e) => {
                    log::warn!("cell {} failed: {e}", config.name);
                    SweepCell { config: config.clone(), report: None, error: Some(e.to_string()) }
                }
            }
        })
        .collect();
    let best = best_by_metric(&cells);
    Ok(SweepResult { cells, best })
}

/// Named grids shaped like the published ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPreset {
    Temperature,
    Shots,
    Retrieval,
    Encoding,
}

impl GridPreset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "temperature" => Some(GridPreset::Temperature),
            "shots" => Some(GridPreset::Shots),
            "retrieval" => Some(GridPreset::Retrieval),
            "encoding" => Some(GridPreset::Encoding),
            _ => None,
        }
    }

    pub fn cells(self, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
        let cell = |name: String, f: &dyn Fn(&mut ExperimentConfig)| {
            let mut c = base.clone();
            c.name = name;
            f(&mut c);
            c
        };
        match self {
            GridPreset::Temperature => [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
                .iter()
                .map(|&t| cell(format!("temperature={t:.1}"), &|c| c.temperature = t))
                .collect(),
            GridPreset::Shots => (1..=8)
                .map(|n| {
                    cell(format!("shots={n}"), &|c| {
                        c.rag_mode = RagMode::PlainRag;
                        c.shots = n;
                    })
                })
                .collect(),
            GridPreset::Retrieval => [
                ("0-shot", RagMode::None, 0),
                ("random (1-shot)", RagMode::Random, 1),
                ("random (6-shot)", RagMode::Random, 6),
                ("rag (1-shot)", RagMode::PlainRag, 1),
                ("rag (6-shot)", RagMode::PlainRag, 6),
                ("balanced rag", RagMode::BalancedRag, 6),
            ]
            .into_iter()
            .map(|(name, mode, shots)| {
                cell(name.to_string(), &|c| {
                    c.rag_mode = mode;
                    c.shots = shots;
                })
            })
            .collect(),
            GridPreset::Encoding => [
                ("text only", EncodingMode::TextOnly),
                ("graph only", EncodingMode::GraphOnly),
                ("text + metrics", EncodingMode::AggregatedMetrics),
                ("text + edge list", EncodingMode::EdgeList),
                ("text + both", EncodingMode::Both),
            ]
            .into_iter()
            .map(|(name, mode)| cell(name.to_string(), &|c| c.encoding_mode = mode))
            .collect(),
        }
    }
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Write { path: path.display().to_string(), message: e.to_string() }
}

/// One CSV row per cell; config fields first, then metrics.
pub fn write_csv(path: &Path, cells: &[SweepCell]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record([
        "name",
        "rag_mode",
        "shots",
        "temperature",
        "encoding_mode",
        "model",
        "seed",
        "train_fraction",
        "split_seed",
        "layout",
        "distinct_partners",
        "precision",
        "recall",
        "f1",
        "roc_auc",
        "accuracy",
        "abstain",
        "errors",
        "flags",
        "cell_error",
    ])
    .map_err(|e| write_err(path, e))?;
    for cell in cells {
        let c = &cell.config;
        let mut row = vec![
            c.name.clone(),
            c.rag_mode.as_str().to_string(),
            c.shots.to_string(),
            c.temperature.to_string(),
            c.encoding_mode.as_str().to_string(),
            c.model.clone(),
            c.seed.to_string(),
            c.train_fraction.to_string(),
            c.split_seed.to_string(),
            format!("{:?}", c.layout).to_lowercase(),
            c.distinct_partners.to_string(),
        ];
        match &cell.report {
            Some(r) => {
                let m = &r.metrics;
                row.extend([m.precision, m.recall, m.f1, m.roc_auc, m.accuracy].map(|v| format!("{v:.4}")));
                row.extend([r.abstain_count.to_string(), r.error_count.to_string(), m.flags.join(";"), String::new()]);
            }
            None => {
                row.extend(std::iter::repeat_n(String::new(), 8));
                row.push(cell.error.clone().unwrap_or_default());
            }
        }
        w.write_record(&row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bar chart of the four headline metrics per cell.
pub fn metrics_svg(cells: &[SweepCell]) -> String {
    const METRICS: [MetricName; 4] = [MetricName::Precision, MetricName::Recall, MetricName::F1, MetricName::RocAuc];
    const COLORS: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];
    let (bar, gap, left, top, height) = (14.0, 24.0, 50.0, 30.0, 240.0);
    let group = bar * METRICS.len() as f64 + gap;
    let width = left + group * cells.len().max(1) as f64 + 20.0;
    let total_h = top + height + 110.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{total_h:.0}" font-family="sans-serif" font-size="11">"#
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = top + height * (1.0 - v);
        let _ = writeln!(s, r##"<line x1="{left}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##, width - 20.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, left - 4.0, y + 4.0);
    }
    for (i, cell) in cells.iter().enumerate() {
        let x0 = left + gap / 2.0 + group * i as f64;
        if let Some(r) = &cell.report {
            for (k, metric) in METRICS.iter().enumerate() {
                let v = r.metrics.get(*metric).clamp(0.0, 1.0);
                let h = height * v;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{bar}" height="{h:.1}" fill="{}"><title>{} {}: {v:.4}</title></rect>"#,
                    x0 + bar * k as f64,
                    top + height - h,
                    COLORS[k],
                    escape_xml(&cell.config.name),
                    metric.as_str()
                );
            }
        }
        let cx = x0 + bar * 2.0;
        let cy = top + height + 12.0;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{cy:.1}" transform="rotate(35 {cx:.1} {cy:.1})">{}</text>"#,
            escape_xml(&cell.config.name)
        );
    }
    for (k, metric) in METRICS.iter().enumerate() {
        let x = left + 90.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{x:.1}" y="8" width="10" height="10" fill="{}"/>"#, COLORS[k]);
        let _ = writeln!(s, r#"<text x="{:.1}" y="17">{}</text>"#, x + 14.0, metric.as_str());
    }
    s.push_str("</svg>\n");
    s
}
