use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use astroturf_rag::balanced_rag::RagMode;
use astroturf_rag::domain::{CascadeRecord, LabeledDataset, PropagationTree, Split};
use astroturf_rag::embedding_index::{EmbeddingIndex, IndexConfig};
use astroturf_rag::evaluator::{
    metrics_svg, retrieve_for, sweep, write_csv, ExperimentConfig, GridPreset, RunOptions, SweepResult, Workbench,
};
use astroturf_rag::io::{read_jsonl, write_json, write_jsonl};
use astroturf_rag::llm_client::mock::{MockLlm, MockRule};
use astroturf_rag::llm_client::{
    classify_batch, BatchOptions, ChatBackend, CompletionConfig, HttpBackend, TranscriptLog,
};
use astroturf_rag::prompt_builder::{EncodingMode, ExampleLayout, PromptTemplate, RenderedPrompt};
use astroturf_rag::synthetic_data::{generate, manifest, GeneratorConfig};
use astroturf_rag::tree_builder::build_tree;

#[derive(Parser, Debug)]
#[command(
    name = "astroturf-rag",
    version,
    about = "Detect coordinated retweet cascades with balanced few-shot prompting"
)]
struct Cli {
    /// Log progress to stderr (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate labeled synthetic cascades.
    Synth(SynthArgs),
    /// Reconstruct propagation trees from raw cascades.
    BuildTrees(BuildTreesArgs),
    /// Fit the retrieval index on the TRAIN split.
    Index(IndexArgs),
    /// Show the examples retrieved for one cascade.
    Retrieve(RetrieveArgs),
    /// Render prompts for every TEST cascade.
    Render(RenderArgs),
    /// Send rendered prompts to a model.
    Classify(ClassifyArgs),
    /// Run one experiment end to end and write its report.
    Evaluate(EvaluateArgs),
    /// Run a grid of experiments.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// TOML generator config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    positive_rate: Option<f64>,
    #[arg(long)]
    planting_probability: Option<f64>,
    /// Output JSONL, one cascade per line.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BuildTreesArgs {
    /// Raw cascades JSONL.
    #[arg(long)]
    input: PathBuf,
    /// Output trees JSONL.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the follower-weighted fallback attachment.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-node attachment decisions as JSONL.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Fail on the first invalid cascade instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug, Clone)]
struct SplitArgs {
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args, Debug)]
struct IndexArgs {
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Maximum text vocabulary size.
    #[arg(long, default_value_t = astroturf_rag::embedding_index::DEFAULT_TEXT_CAP)]
    text_cap: usize,
}

#[derive(Args, Debug, Clone)]
struct RetrievalArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::BalancedRag)]
    mode: ModeArg,
    /// Total number of example stanzas.
    #[arg(long, default_value_t = 6)]
    shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    distinct_partners: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    None,
    PlainRag,
    BalancedRag,
    Random,
    TopkPerClass,
}

impl From<ModeArg> for RagMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::None => RagMode::None,
            ModeArg::PlainRag => RagMode::PlainRag,
            ModeArg::BalancedRag => RagMode::BalancedRag,
            ModeArg::Random => RagMode::Random,
            ModeArg::TopkPerClass => RagMode::TopkPerClass,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum EncodingArg {
    EdgeList,
    AggregatedMetrics,
    Both,
    TextOnly,
    GraphOnly,
}

impl From<EncodingArg> for EncodingMode {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::EdgeList => EncodingMode::EdgeList,
            EncodingArg::AggregatedMetrics => EncodingMode::AggregatedMetrics,
            EncodingArg::Both => EncodingMode::Both,
            EncodingArg::TextOnly => EncodingMode::TextOnly,
            EncodingArg::GraphOnly => EncodingMode::GraphOnly,
        }
    }
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Query cascade id.
    #[arg(long)]
    cascade_id: String,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[arg(long, value_enum, default_value_t = EncodingArg::AggregatedMetrics)]
    encoding: EncodingArg,
    /// Put each contrastive partner right after its similar example.
    #[arg(long)]
    pair_major: bool,
    /// Custom template file.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Output prompts JSONL.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct ClientArgs {
    /// TOML client config (endpoint, model, retries, ...).
    #[arg(long)]
    client: Option<PathBuf>,
    /// Use an in-process mock: majority, keyword:TOKEN or constant:fake|real.
    #[arg(long)]
    mock: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// JSONL log of every request and response.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Rendered prompts JSONL.
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    client: ClientArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Pipeline TOML config.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured mock rule.
    #[arg(long)]
    mock: Option<String>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Pipeline TOML config; its [experiment] table is the base cell.
    #[arg(long)]
    config: PathBuf,
    /// Grid TOML with `preset = "..."` or [[cells]] overrides.
    #[arg(long, conflicts_with = "preset")]
    grid: Option<PathBuf>,
    /// Built-in grid: temperature, shots, retrieval or encoding.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    mock: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Paths {
    trees: PathBuf,
    index: PathBuf,
    #[serde(default)]
    template: Option<PathBuf>,
    reports: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
struct ClientSection {
    #[serde(flatten)]
    completion: CompletionConfig,
    mock: Option<String>,
    transcript: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineConfig {
    paths: Paths,
    experiment: ExperimentConfig,
    #[serde(default)]
    client: ClientSection,
}

impl PipelineConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.paths.trees, &mut config.paths.index, &mut config.paths.reports] {
            *p = base.join(&*p);
        }
        if let Some(t) = config.paths.template.as_mut() {
            *t = base.join(&*t);
        }
        if let Some(t) = config.client.transcript.as_mut() {
            *t = base.join(&*t);
        }
        Ok(config)
    }

    fn validate_paths(&self) -> Result<()> {
        let inputs = [Some(&self.paths.trees), Some(&self.paths.index), self.paths.template.as_ref()];
        for path in inputs.into_iter().flatten() {
            if !path.is_file() {
                bail!("input file not found: {}", path.display());
            }
        }
        fs::create_dir_all(&self.paths.reports)
            .with_context(|| format!("cannot create reports directory {}", self.paths.reports.display()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::BuildTrees(a) => build_trees(a),
        Command::Index(a) => index(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Render(a) => render_prompts(a),
        Command::Classify(a) => classify(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => run_sweep(a),
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid TOML in {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut config: GeneratorConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => GeneratorConfig::default(),
    };
    if let Some(v) = a.count {
        config.count = v;
    }
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.positive_rate {
        config.positive_rate = v;
    }
    if let Some(v) = a.planting_probability {
        config.planting_probability = v;
    }
    let records = generate(&config)?;
    write_jsonl(&a.out, &records)?;
    let m = manifest(&records, config.seed);
    if let Some(path) = &a.manifest {
        write_json(path, &m)?;
    }
    println!(
        "{} cascades, {} positive ({:.4}), {} tweets, {} users",
        m.trees, m.positives, m.positive_fraction, m.tweets, m.users
    );
    Ok(())
}

fn build_trees(a: BuildTreesArgs) -> Result<()> {
    let records: Vec<CascadeRecord> = read_jsonl(&a.input)?;
    let mut trees = Vec::with_capacity(records.len());
    let mut traces = Vec::new();
    let mut skipped = 0;
    for record in &records {
        match build_tree(record, a.seed) {
            Ok((tree, trace)) => {
                for w in &trace.warnings {
                    log::warn!("{}: {w}", record.cascade_id);
                }
                trees.push(tree);
                traces.push(trace);
            }
            Err(e) if !a.strict => {
                log::warn!("skipping {}: {e}", record.cascade_id);
                skipped += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    write_jsonl(&a.out, &trees)?;
    if let Some(path) = &a.trace {
        write_jsonl(path, &traces)?;
    }
    println!("{} trees built, {skipped} cascades skipped", trees.len());
    Ok(())
}

fn load_dataset(path: &Path, train_fraction: f64, split_seed: u64) -> Result<LabeledDataset> {
    let trees: Vec<PropagationTree> = read_jsonl(path)?;
    LabeledDataset::stratified(trees, train_fraction, split_seed)
        .with_context(|| format!("cannot split {}", path.display()))
}

fn index(a: IndexArgs) -> Result<()> {
    let dataset = load_dataset(&a.trees, a.split.train_fraction, a.split.split_seed)?;
    let config = IndexConfig { text_cap: a.text_cap, ..IndexConfig::default() };
    let index = EmbeddingIndex::fit(dataset.split_trees(Split::Train), config)?;
    index.save(&a.out)?;
    println!(
        "indexed {} training cascades ({} test held out), dimension {}",
        index.len(),
        dataset.split_trees(Split::Test).count(),
        index.dim()
    );
    Ok(())
}

fn experiment_from(r: &RetrievalArgs) -> ExperimentConfig {
    let mode: RagMode = r.mode.into();
    ExperimentConfig {
        name: mode.as_str().to_string(),
        rag_mode: mode,
        shots: if mode == RagMode::None { 0 } else { r.shots },
        seed: r.seed,
        distinct_partners: r.distinct_partners,
        ..ExperimentConfig::default()
    }
}

fn retrieve(a: RetrieveArgs) -> Result<()> {
    let trees: Vec<PropagationTree> = read_jsonl(&a.trees)?;
    let index = EmbeddingIndex::load(&a.index)?;
    let tree = trees
        .iter()
        .find(|t| t.cascade_id() == a.cascade_id)
        .ok_or_else(|| anyhow!("cascade {} not found in {}", a.cascade_id, a.trees.display()))?;
    let config = experiment_from(&a.retrieval);
    config.validate()?;
    let set = retrieve_for(&config, &index, tree)?;
    match &a.out {
        Some(path) => write_json(path, &set)?,
        None => println!("{}", serde_json::to_string_pretty(&set)?),
    }
    Ok(())
}

fn load_template(path: Option<&Path>) -> Result<PromptTemplate> {
    Ok(match path {
        Some(p) => PromptTemplate::load(p)?,
        None => PromptTemplate::default(),
    })
}

fn render_prompts(a: RenderArgs) -> Result<()> {
    let dataset = load_dataset(&a.trees, a.split.train_fraction, a.split.split_seed)?;
    let index = EmbeddingIndex::load(&a.index)?;
    let config = ExperimentConfig {
        encoding_mode: a.encoding.into(),
        layout: if a.pair_major { ExampleLayout::PairMajor } else { ExampleLayout::Grouped },
        train_fraction: a.split.train_fraction,
        split_seed: a.split.split_seed,
        ..experiment_from(&a.retrieval)
    };
    let bench = Workbench::new(&dataset, &index, load_template(a.template.as_deref())?)?;
    let prompts = bench.prompts(&config)?;
    write_jsonl(&a.out, &prompts)?;
    println!("{} prompts rendered", prompts.len());
    Ok(())
}

fn backend_for(mock: Option<&str>, completion: &CompletionConfig) -> Result<Box<dyn ChatBackend>> {
    Ok(match mock {
        Some(rule) => Box::new(MockLlm::new(MockRule::parse(rule).map_err(|e| anyhow!(e))?)),
        None => Box::new(HttpBackend::new(completion)?),
    })
}

fn progress(done: usize, total: usize) {
    if done == total || done.is_multiple_of(50) {
        log::info!("{done}/{total} classified");
    }
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let prompts: Vec<RenderedPrompt> = read_jsonl(&a.prompts)?;
    let mut completion: CompletionConfig = match &a.client.client {
        Some(p) => read_toml(p)?,
        None => CompletionConfig::default(),
    };
    if let Some(v) = &a.client.endpoint {
        completion.endpoint = v.clone();
    }
    if let Some(v) = &a.client.model {
        completion.model = v.clone();
    }
    if let Some(v) = a.client.temperature {
        completion.temperature = v;
    }
    completion.validate()?;
    let backend = backend_for(a.client.mock.as_deref(), &completion)?;
    let transcript = a.client.transcript.as_deref().map(TranscriptLog::create).transpose()?;
    let outcomes = classify_batch(
        backend.as_ref(),
        &prompts,
        &completion.decoding(),
        BatchOptions::from(&completion),
        Some(&progress),
        transcript.as_ref(),
    );
    if let Some(t) = &transcript {
        t.flush()?;
    }
    write_jsonl(&a.out, &outcomes)?;
    let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
    println!("{} outcomes, {failed} failed", outcomes.len());
    Ok(())
}

/// Everything needed to run experiments from a pipeline config.
struct Session {
    config: PipelineConfig,
    dataset: LabeledDataset,
    index: EmbeddingIndex,
    template: PromptTemplate,
    backend: Box<dyn ChatBackend>,
    transcript: Option<TranscriptLog>,
}

impl Session {
    fn open(path: &Path, mock_override: Option<String>) -> Result<Self> {
        let mut config = PipelineConfig::load(path)?;
        if mock_override.is_some() {
            config.client.mock = mock_override;
        }
        config.validate_paths()?;
        config.experiment.validate()?;
        config.client.completion.validate()?;
        let dataset =
            load_dataset(&config.paths.trees, config.experiment.train_fraction, config.experiment.split_seed)?;
        let index = EmbeddingIndex::load(&config.paths.index)?;
        let template = load_template(config.paths.template.as_deref())?;
        let backend = backend_for(config.client.mock.as_deref(), &config.client.completion)?;
        let transcript = config.client.transcript.as_deref().map(TranscriptLog::create).transpose()?;
        Ok(Session { config, dataset, index, template, backend, transcript })
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            batch: BatchOptions::from(&self.config.client.completion),
            max_tokens: self.config.client.completion.max_tokens,
        }
    }
}

#[derive(Serialize)]
struct Echoed<'a, T: Serialize> {
    pipeline: &'a PipelineConfig,
    #[serde(flatten)]
    body: &'a T,
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let session = Session::open(&a.config, a.mock)?;
    let bench = Workbench::new(&session.dataset, &session.index, session.template.clone())?;
    let report = bench.run(
        &session.config.experiment,
        session.backend.as_ref(),
        session.options(),
        session.transcript.as_ref(),
    )?;
    if let Some(t) = &session.transcript {
        t.flush()?;
    }
    let path = session.config.paths.reports.join("report.json");
    write_json(&path, &Echoed { pipeline: &session.config, body: &report })?;
    let m = &report.metrics;
    println!(
        "precision {:.4}  recall {:.4}  f1 {:.4}  roc_auc {:.4}  ({} test cascades, {} abstained)",
        m.precision,
        m.recall,
        m.f1,
        m.roc_auc,
        report.items.len(),
        report.abstain_count
    );
    println!("report written to {}", path.display());
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    preset: Option<String>,
    #[serde(default)]
    cells: Vec<toml::Table>,
}

fn grid_cells(base: &ExperimentConfig, file: GridFile) -> Result<Vec<ExperimentConfig>> {
    let mut cells = match file.preset.as_deref() {
        Some(name) => GridPreset::parse(name).ok_or_else(|| anyhow!("unknown grid preset {name:?}"))?.cells(base),
        None => Vec::new(),
    };
    let base_table = toml::Table::try_from(base)?;
    for (i, overrides) in file.cells.into_iter().enumerate() {
        let mut table = base_table.clone();
        table.extend(overrides);
        if !table.contains_key("name") || table.get("name") == base_table.get("name") {
            table.insert("name".into(), toml::Value::String(format!("cell {}", i + 1)));
        }
        let cell: ExperimentConfig =
            toml::Value::Table(table).try_into().with_context(|| format!("invalid grid cell {}", i + 1))?;
        cells.push(cell);
    }
    if cells.is_empty() {
        bail!("grid is empty");
    }
    Ok(cells)
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let session = Session::open(&a.config, a.mock)?;
    let grid_file = match (&a.grid, &a.preset) {
        (Some(p), _) => read_toml(p)?,
        (None, Some(name)) => GridFile { preset: Some(name.clone()), cells: Vec::new() },
        (None, None) => bail!("either --grid or --preset is required"),
    };
    let grid = grid_cells(&session.config.experiment, grid_file)?;
    let bench = Workbench::new(&session.dataset, &session.index, session.template.clone())?;
    let result: SweepResult =
        sweep(&bench, &grid, session.backend.as_ref(), session.options(), session.transcript.as_ref())?;
    if let Some(t) = &session.transcript {
        t.flush()?;
    }
    let dir = &session.config.paths.reports;
    write_json(&dir.join("sweep.json"), &Echoed { pipeline: &session.config, body: &result })?;
    write_csv(&dir.join("sweep.csv"), &result.cells)?;
    fs::write(dir.join("sweep.svg"), metrics_svg(&result.cells))?;
    for cell in &result.cells {
        match &cell.report {
            Some(r) => println!(
                "{:<24} precision {:.4}  recall {:.4}  f1 {:.4}  roc_auc {:.4}",
                cell.config.name, r.metrics.precision, r.metrics.recall, r.metrics.f1, r.metrics.roc_auc
            ),
            None => println!("{:<24} failed: {}", cell.config.name, cell.error.as_deref().unwrap_or("")),
        }
    }
    for best in &result.best {
        println!("best {}: {} ({:.4})", best.metric.as_str(), best.name, best.value);
    }
    println!("sweep written to {}", dir.display());
    Ok(())
}
