use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use poltweet::btm::{
    gibbs_fit, report_markdown, report_rows, write_report_csv, BtmConfig, BtmCorpus, BtmModel, ReportEntry,
};
use poltweet::corpus::{self, DeputyRecord, Label, Stopwords, Tweet};
use poltweet::embeddings::{load_path, train_embeddings, EmbeddingMode, Embeddings, TextFormat};
use poltweet::evaluation::{evaluate_test, kfold_cv, score, write_group_csv, ModelSpec};
use poltweet::models::{Checkpoint, Model, ModelKind};
use poltweet::pipeline::{
    self, classify_corpus, make_examples, matrix_markdown, run_experiment_matrix, word_frequencies, write_matrix_csv,
    write_word_frequencies, EmbeddingSource, MatrixGrid, PipelineConfig,
};
use poltweet::sampling::{draw_sample, monthly_histogram, PlanEntry, SampleMode, SamplePlan, Slot};
use poltweet::synth::{background_text, generate, BackgroundConfig, SynthConfig};
use poltweet::training::{train, write_history_csv, Example};

#[derive(Parser)]
#[command(name = "poltweet", version, about = "Political tweet classification and topic modeling")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set training.epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, normalize and deduplicate the raw tweet and deputy files.
    Ingest(IngestArgs),
    /// Draw a temporally stratified labeled pool (or annotation worksheet).
    Sample(SampleArgs),
    /// Train word2vec vectors on a normalized corpus or plain text.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on an external test set.
    Evaluate(EvaluateArgs),
    /// Per-deputy and per-month macro F1 on a test set.
    BiasReport(BiasReportArgs),
    /// Split a corpus into predicted political / non-political corpora.
    Classify(ClassifyArgs),
    /// Token counts per class over a date window.
    Wordcloud(WordcloudArgs),
    /// Biterm topic model.
    #[command(subcommand)]
    Btm(BtmCommand),
    /// Run a grid of end-to-end experiments.
    Matrix(MatrixArgs),
    /// Generate a labeled synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    tweets: Option<PathBuf>,
    #[arg(long)]
    deputies: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Completed worksheet (plan JSONL) whose slots become labels.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-line rejects as JSONL.
    #[arg(long)]
    errors: Option<PathBuf>,
    #[arg(long)]
    deputies_out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    mode: Option<SampleMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k_months: Option<usize>,
    #[arg(long)]
    k_deputies: Option<usize>,
    #[arg(long)]
    concentration: Option<f64>,
    /// Hold out a stratified fraction of the labeled tweets first and write
    /// it here; the sample is drawn from the remainder.
    #[arg(long)]
    test_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainEmbeddingsArgs {
    /// Normalized corpus JSONL.
    #[arg(long, conflicts_with = "text")]
    corpus: Option<PathBuf>,
    /// Plain text, one whitespace-tokenized sentence per line.
    #[arg(long)]
    text: Option<PathBuf>,
    #[arg(long)]
    mode: Option<EmbeddingMode>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbeddingArgs {
    /// Vector file; defaults to the configured path for the source.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    format: Option<TextFormat>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: Option<ModelKind>,
    #[command(flatten)]
    emb: EmbeddingArgs,
    /// Normalized, labeled corpus JSONL.
    #[arg(long)]
    train: PathBuf,
    /// Restrict training to the ids (and slot labels) of a sample plan.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    fine_tune: bool,
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainingSet {
    /// Training corpus, for cross-validation, resubstitution and the overlap check.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    plan: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    training: TrainingSet,
    /// Run k-fold cross-validation on the training set. Fold models use the
    /// config's training settings; embeddings are fine-tuned iff the
    /// checkpoint's were.
    #[arg(long, requires = "train")]
    cv: bool,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_group_size: Option<usize>,
    /// JSON report.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Args)]
struct BiasReportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    training: TrainingSet,
    #[arg(long)]
    min_group_size: Option<usize>,
    /// Writes per_deputy.csv, per_month.csv and bias.md.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    emb: EmbeddingArgs,
    #[arg(long)]
    corpus: PathBuf,
    /// Deputies JSONL, for the cohort table.
    #[arg(long)]
    deputies: Option<PathBuf>,
    /// Writes political.jsonl, non_political.jsonl, predictions.csv,
    /// cohorts.csv and cohorts.md.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct WordcloudArgs {
    #[arg(long)]
    political: PathBuf,
    #[arg(long)]
    non_political: PathBuf,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    end: Option<NaiveDate>,
    /// Writes words_political.csv and words_non_political.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum BtmCommand {
    /// Fit a model with collapsed Gibbs sampling.
    Fit(BtmFitArgs),
    /// Top words (and shares) of one or more fitted models.
    Report(BtmReportArgs),
}

#[derive(Args)]
struct BtmFitArgs {
    /// Normalized corpus JSONL.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Defaults to 50/K.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0.005)]
    beta: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Biterm window in tokens; whole document by default.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BtmReportArgs {
    /// `NAME=PATH`, or a bare path named after its file stem. Repeatable.
    #[arg(long = "model", required = true)]
    models: Vec<String>,
    #[arg(long, default_value_t = 5)]
    top: usize,
    #[arg(long)]
    shares: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Markdown output; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    /// Normalized, labeled corpus JSONL.
    #[arg(long)]
    corpus: PathBuf,
    /// Grid (TOML) with labeled_sizes, modes, models, embeddings.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator parameters (TOML).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tweets: Option<usize>,
    /// Also write this many sentences of unlabeled background text.
    #[arg(long)]
    background: Option<usize>,
    /// Writes tweets.jsonl, deputies.jsonl and optionally background.txt.
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", serde_json::json!({ "error": { "kind": "usage", "message": msg.trim_end() } }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| {
                    c.downcast_ref::<poltweet::Error>()
                        .map(poltweet::Error::kind)
                        .or_else(|| c.downcast_ref::<std::io::Error>().map(|_| "io"))
                })
                .unwrap_or("error");
            let msg = format!("{e:#}");
            eprintln!("{}", serde_json::json!({ "error": { "kind": kind, "message": msg } }));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Ingest(a) => ingest(&cfg, a),
        Command::Sample(a) => sample(&cfg, a),
        Command::TrainEmbeddings(a) => train_embeddings_cmd(&cfg, a),
        Command::Train(a) => train_cmd(&cfg, a),
        Command::Evaluate(a) => evaluate(&cfg, a),
        Command::BiasReport(a) => bias_report(&cfg, a),
        Command::Classify(a) => classify(&cfg, a),
        Command::Wordcloud(a) => wordcloud(&cfg, a),
        Command::Btm(BtmCommand::Fit(a)) => btm_fit(a),
        Command::Btm(BtmCommand::Report(a)) => btm_report(a),
        Command::Matrix(a) => matrix(&cfg, a),
        Command::Synth(a) => synth(a),
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let mut doc: toml::Table = toml::from_str(&text).context("parsing config")?;
    for o in overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| anyhow!("override `{o}` is not KEY=VALUE"))?;
        set_dotted(&mut doc, key.trim(), parse_value(value.trim()))?;
    }
    let cfg = PipelineConfig::from_toml(&toml::to_string(&doc)?)?;
    cfg.check_paths()?;
    Ok(cfg)
}

/// A TOML literal if it parses as one, else a bare string.
fn parse_value(v: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()))
}

fn set_dotted(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| anyhow!("empty override key"))?;
    let mut table = doc;
    for p in parts {
        table = table
            .entry(p)
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{p}` is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Corpus files written by `ingest` or `classify`; malformed lines are fatal.
fn read_corpus(path: &Path) -> Result<Vec<Tweet>> {
    let (tweets, errors) = corpus::read_tweets(open(path)?)?;
    if let Some(e) = errors.first() {
        bail!("{}: {} bad line(s), first at line {}: {}", path.display(), errors.len(), e.line, e.message);
    }
    Ok(tweets)
}

fn read_plan(path: &Path) -> Result<Vec<PlanEntry>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

/// Tweets named by the plan, relabeled from its slots; unlabeled slots are skipped.
fn select_plan(tweets: Vec<Tweet>, plan: &[PlanEntry]) -> Result<Vec<Tweet>> {
    let mut by_id: HashMap<String, Tweet> = tweets.into_iter().map(|t| (t.id.clone(), t)).collect();
    let mut out = Vec::new();
    for e in plan {
        let label = match e.slot {
            Slot::Political => Label::Political,
            Slot::NonPolitical => Label::NonPolitical,
            Slot::Unlabeled => continue,
        };
        let mut t = by_id.remove(&e.id).ok_or_else(|| anyhow!("plan id `{}` not in corpus", e.id))?;
        t.label = Some(label);
        out.push(t);
    }
    Ok(out)
}

fn training_tweets(train: &Path, plan: Option<&Path>) -> Result<Vec<Tweet>> {
    let tweets = read_corpus(train)?;
    match plan {
        Some(p) => select_plan(tweets, &read_plan(p)?),
        None => Ok(tweets.into_iter().filter(|t| t.label.is_some()).collect()),
    }
}

fn load_embeddings(cfg: &PipelineConfig, a: &EmbeddingArgs) -> Result<Embeddings> {
    let source = cfg.embeddings.source;
    let path = match &a.embeddings {
        Some(p) => p.clone(),
        None => cfg
            .paths
            .embeddings
            .get(&source)
            .cloned()
            .ok_or_else(|| anyhow!("no --embeddings given and no path configured for {}", source.as_str()))?,
    };
    let format = a.format.or(source.format()).unwrap_or(TextFormat::Word2Vec);
    load_path(&path, format, None).with_context(|| format!("loading vectors from {}", path.display()))
}

fn ingest(cfg: &PipelineConfig, a: IngestArgs) -> Result<()> {
    let tweets = a.tweets.or_else(|| cfg.paths.tweets.clone()).ok_or_else(|| anyhow!("--tweets is required"))?;
    let deputies =
        a.deputies.or_else(|| cfg.paths.deputies.clone()).ok_or_else(|| anyhow!("--deputies is required"))?;
    let stopwords = match a.stopwords.or_else(|| cfg.paths.stopwords.clone()) {
        Some(p) => Stopwords::from_reader(open(&p)?)?,
        None => Stopwords::bundled(),
    };
    let mut ing = corpus::ingest_paths(&tweets, &deputies)
        .with_context(|| format!("ingesting {} and {}", tweets.display(), deputies.display()))?;
    ing.corpus.dedupe();
    ing.corpus.normalize(&stopwords);
    if let Some(p) = &a.labels {
        let labels: HashMap<String, Slot> = read_plan(p)?.into_iter().map(|e| (e.id, e.slot)).collect();
        for t in &mut ing.corpus.tweets {
            match labels.get(&t.id) {
                Some(Slot::Political) => t.label = Some(Label::Political),
                Some(Slot::NonPolitical) => t.label = Some(Label::NonPolitical),
                _ => {}
            }
        }
    }
    let mut out = create(&a.out)?;
    corpus::write_tweets(&mut out, &ing.corpus.tweets, true)?;
    out.flush()?;
    if let Some(p) = &a.deputies_out {
        let recs: Vec<DeputyRecord> = ing
            .corpus
            .deputies
            .values()
            .map(|d| DeputyRecord {
                id: d.id.clone(),
                handle: d.handle.clone(),
                seated_before_election: d.seated_before_election,
                seated_after_election: d.seated_after_election,
            })
            .collect();
        write_jsonl(p, &recs)?;
    }
    if let Some(p) = &a.errors {
        write_jsonl(p, &ing.errors)?;
    }
    if !ing.errors.is_empty() {
        log::warn!("{} input line(s) rejected", ing.errors.len());
    }
    log::info!("{} tweets, {} deputies", ing.corpus.tweets.len(), ing.corpus.deputies.len());
    Ok(())
}

fn sample(cfg: &PipelineConfig, a: SampleArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(cfg.seed);
    let mut tweets = read_corpus(&a.corpus)?;
    if let Some(p) = &a.test_out {
        let prep = pipeline::prepare(&tweets, cfg.sample.holdout_fraction, seed)?;
        let mut out = create(p)?;
        corpus::write_tweets(&mut out, &prep.test, true)?;
        out.flush()?;
        tweets = prep.pool;
    }
    let mut bias = cfg.sample.bias;
    bias.k_months = a.k_months.unwrap_or(bias.k_months);
    bias.k_deputies = a.k_deputies.unwrap_or(bias.k_deputies);
    bias.concentration = a.concentration.unwrap_or(bias.concentration);
    if !(0.5..=1.0).contains(&bias.concentration) {
        bail!("concentration must lie in [0.5, 1]");
    }
    let hist = monthly_histogram(&tweets)?;
    let size = a.size.unwrap_or(cfg.sample.labeled_size);
    let plan = SamplePlan::for_labeled_size(&hist, size, a.mode.unwrap_or(cfg.sample.mode), seed)?.with_bias(bias);
    let s = draw_sample(&tweets, &plan)?;
    for w in &s.warnings {
        log::warn!("{w}");
    }
    write_jsonl(&a.out, &s.entries())
}

fn train_embeddings_cmd(cfg: &PipelineConfig, a: TrainEmbeddingsArgs) -> Result<()> {
    let sentences: Vec<Vec<String>> = match (&a.corpus, &a.text) {
        (Some(p), _) => read_corpus(p)?.into_iter().map(|t| t.tokens).collect(),
        (None, Some(p)) => {
            let mut out = Vec::new();
            for line in open(p)?.lines() {
                out.push(line?.split_whitespace().map(str::to_string).collect());
            }
            out
        }
        (None, None) => bail!("one of --corpus or --text is required"),
    };
    let mut tc = cfg.embeddings.train.clone();
    tc.mode = a.mode.unwrap_or(tc.mode);
    tc.dim = a.dim.unwrap_or(tc.dim);
    tc.epochs = a.epochs.unwrap_or(tc.epochs);
    tc.seed = a.seed.unwrap_or(cfg.seed);
    let trained = train_embeddings(&sentences, &tc)?;
    let mut out = create(&a.out)?;
    trained.embeddings.write_word2vec_text(&mut out)?;
    out.flush()?;
    Ok(())
}

fn examples(tweets: &[Tweet], emb: &Embeddings, max_len: usize, model: &Model) -> Result<Vec<Example>> {
    let refs: Vec<&Tweet> = tweets.iter().collect();
    Ok(make_examples(&refs, &emb.vocab, max_len, model.arch.min_len())?)
}

fn train_cmd(cfg: &PipelineConfig, a: TrainArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(cfg.seed);
    let emb = load_embeddings(cfg, &a.emb)?;
    let tweets = training_tweets(&a.train, a.plan.as_deref())?;
    let kind = a.model.unwrap_or(cfg.model.kind);
    let max_len = a.max_len.unwrap_or(cfg.model.max_len);
    let model = Model::init(cfg.model.architecture(kind), emb.dim(), seed)?;
    let data = examples(&tweets, &emb, max_len, &model)?;
    let mut tc = cfg.training.clone();
    tc.seed = seed;
    tc.epochs = a.epochs.unwrap_or(tc.epochs);
    tc.fine_tune_embeddings |= a.fine_tune;
    let trained = train(model, &data, &emb.matrix, &tc)?;
    let ck = Checkpoint::new(&trained.model, max_len, &emb.vocab, trained.embeddings.as_ref());
    let mut out = create(&a.out)?;
    ck.write(&mut out)?;
    out.flush()?;
    if let Some(p) = &a.history {
        let mut h = create(p)?;
        write_history_csv(&mut h, &trained.history)?;
        h.flush()?;
    }
    Ok(())
}

struct Loaded {
    ck: Checkpoint,
    model: Model,
    emb: Embeddings,
    matrix: poltweet::embeddings::EmbeddingMatrix,
}

fn load_checkpoint(cfg: &PipelineConfig, path: &Path, a: &EmbeddingArgs) -> Result<Loaded> {
    let ck = Checkpoint::read(open(path)?).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let emb = load_embeddings(cfg, a)?;
    ck.check_vocabulary(&emb.vocab)?;
    let matrix = ck.fine_tuned_embeddings().unwrap_or_else(|| emb.matrix.clone());
    Ok(Loaded { model: ck.model(), ck, emb, matrix })
}

fn test_report(
    l: &Loaded,
    test_path: &Path,
    training: &TrainingSet,
    min_group_size: usize,
) -> Result<(poltweet::evaluation::EvalReport, Vec<Example>)> {
    let test_tweets: Vec<Tweet> = read_corpus(test_path)?;
    if let Some(t) = test_tweets.iter().find(|t| t.label.is_none()) {
        bail!("test tweet `{}` has no label", t.id);
    }
    let test = examples(&test_tweets, &l.emb, l.ck.max_len, &l.model)?;
    let train = match &training.train {
        Some(p) => examples(&training_tweets(p, training.plan.as_deref())?, &l.emb, l.ck.max_len, &l.model)?,
        None => Vec::new(),
    };
    let report = evaluate_test(&l.model, &l.matrix, &test, train.iter().map(|e| e.id.as_str()), min_group_size)?;
    Ok((report, train))
}

fn evaluate(cfg: &PipelineConfig, a: EvaluateArgs) -> Result<()> {
    let l = load_checkpoint(cfg, &a.checkpoint, &a.emb)?;
    let min = a.min_group_size.unwrap_or(cfg.evaluation.min_group_size);
    let (mut report, train) = test_report(&l, &a.test, &a.training, min)?;
    if a.cv {
        let seed = a.seed.unwrap_or(cfg.seed);
        let spec = ModelSpec {
            arch: l.model.arch.clone(),
            train: poltweet::training::TrainConfig {
                seed,
                fine_tune_embeddings: l.ck.embeddings.is_some(),
                ..cfg.training.clone()
            },
            init_seed: seed,
        };
        let folds = a.folds.unwrap_or(cfg.evaluation.folds);
        let mut cv = kfold_cv(&train, folds, &spec, &l.emb.matrix, seed, false)?;
        if cfg.evaluation.resubstitution {
            cv.resubstitution = Some(score(&l.model, &train, &l.matrix)?);
        }
        report.cross_validation = Some(cv);
    }
    write_text(&a.out, &report.to_json()?)?;
    if let Some(p) = &a.markdown {
        write_text(p, &report.to_markdown())?;
    }
    Ok(())
}

fn bias_report(cfg: &PipelineConfig, a: BiasReportArgs) -> Result<()> {
    let l = load_checkpoint(cfg, &a.checkpoint, &a.emb)?;
    let min = a.min_group_size.unwrap_or(cfg.evaluation.min_group_size);
    let (report, _) = test_report(&l, &a.test, &a.training, min)?;
    std::fs::create_dir_all(&a.out_dir)?;
    for (name, g) in [("per_deputy.csv", &report.per_deputy), ("per_month.csv", &report.per_month)] {
        let mut out = create(&a.out_dir.join(name))?;
        write_group_csv(&mut out, g)?;
        out.flush()?;
    }
    write_text(&a.out_dir.join("bias.md"), &report.to_markdown())
}

fn classify(cfg: &PipelineConfig, a: ClassifyArgs) -> Result<()> {
    let ck = Checkpoint::read(open(&a.checkpoint)?)?;
    let emb = load_embeddings(cfg, &a.emb)?;
    let mut tweets = read_corpus(&a.corpus)?;
    let deputies = match a.deputies.as_ref().or(cfg.paths.deputies.as_ref()) {
        Some(p) => {
            let (d, errors) = corpus::read_deputies(open(p)?)?;
            if !errors.is_empty() {
                log::warn!("{} deputy line(s) rejected", errors.len());
            }
            d
        }
        None => BTreeMap::new(),
    };
    let c = classify_corpus(&ck, &emb, &tweets, &deputies)?;
    for (t, p) in tweets.iter_mut().zip(&c.predictions) {
        t.label = Some(p.label);
    }
    std::fs::create_dir_all(&a.out_dir)?;
    for (name, label) in [("political.jsonl", Label::Political), ("non_political.jsonl", Label::NonPolitical)] {
        let part: Vec<Tweet> = tweets.iter().filter(|t| t.label == Some(label)).cloned().collect();
        let mut out = create(&a.out_dir.join(name))?;
        corpus::write_tweets(&mut out, &part, true)?;
        out.flush()?;
    }
    let mut out = create(&a.out_dir.join("predictions.csv"))?;
    pipeline::write_predictions_csv(&mut out, &c.predictions)?;
    out.flush()?;
    let mut out = create(&a.out_dir.join("cohorts.csv"))?;
    pipeline::write_cohort_csv(&mut out, &c.cohorts)?;
    out.flush()?;
    write_text(&a.out_dir.join("cohorts.md"), &pipeline::cohort_markdown(&c.cohorts))
}

fn wordcloud(cfg: &PipelineConfig, a: WordcloudArgs) -> Result<()> {
    let start = a.start.unwrap_or(cfg.wordcloud.start);
    let end = a.end.unwrap_or(cfg.wordcloud.end);
    if start > end {
        bail!("start {start} is after end {end}");
    }
    std::fs::create_dir_all(&a.out_dir)?;
    for (input, name) in [(&a.political, "words_political.csv"), (&a.non_political, "words_non_political.csv")] {
        let rows = word_frequencies(&read_corpus(input)?, start, end);
        let mut out = create(&a.out_dir.join(name))?;
        if !write_word_frequencies(&mut out, &rows)? {
            log::warn!("{}: no tweets between {start} and {end}", input.display());
        }
        out.flush()?;
    }
    Ok(())
}

fn btm_fit(a: BtmFitArgs) -> Result<()> {
    let docs: Vec<Vec<String>> = read_corpus(&a.corpus)?.into_iter().map(|t| t.tokens).collect();
    let corpus = BtmCorpus::from_tokens(&docs);
    let cfg = BtmConfig { k: a.k, alpha: a.alpha, beta: a.beta, iterations: a.iters, seed: a.seed, window: a.window };
    let (model, _) = gibbs_fit(&corpus, &cfg)?;
    let mut out = create(&a.out)?;
    model.write(&mut out)?;
    out.flush()?;
    Ok(())
}

fn btm_report(a: BtmReportArgs) -> Result<()> {
    let mut named = Vec::new();
    let mut seen = HashSet::new();
    for m in &a.models {
        let (name, path) = match m.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(m);
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| m.clone());
                (stem, p)
            }
        };
        if !seen.insert(name.clone()) {
            bail!("duplicate model name `{name}`");
        }
        let model = BtmModel::read(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
        if a.shares && model.shares.is_none() {
            bail!("{} carries no topic shares", path.display());
        }
        named.push((name, model));
    }
    let entries: Vec<ReportEntry> = named.iter().map(|(n, m)| ReportEntry { corpus: n.clone(), model: m }).collect();
    let rows = report_rows(&entries, a.top)?;
    let md = report_markdown(&rows, a.shares);
    match &a.out {
        Some(p) => write_text(p, &md)?,
        None => print!("{md}"),
    }
    if let Some(p) = &a.csv {
        let mut out = create(p)?;
        write_report_csv(&mut out, &rows)?;
        out.flush()?;
    }
    Ok(())
}

fn matrix(cfg: &PipelineConfig, a: MatrixArgs) -> Result<()> {
    let grid: MatrixGrid = match &a.grid {
        Some(p) => toml::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => MatrixGrid {
            labeled_sizes: vec![cfg.sample.labeled_size],
            modes: vec![cfg.sample.mode],
            models: vec![cfg.model.kind],
            embeddings: vec![cfg.embeddings.source],
        },
    };
    let mut cfg = cfg.clone();
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let tweets = read_corpus(&a.corpus)?;
    let mut vectors = BTreeMap::new();
    for &source in &grid.embeddings {
        if vectors.contains_key(&source) {
            continue;
        }
        let loaded = match source {
            EmbeddingSource::Trained => {
                let sentences: Vec<&[String]> = tweets.iter().map(|t| t.tokens.as_slice()).collect();
                let sentences: Vec<Vec<&str>> =
                    sentences.iter().map(|s| s.iter().map(String::as_str).collect()).collect();
                let tc = poltweet::embeddings::EmbeddingTrainConfig { seed: cfg.seed, ..cfg.embeddings.train.clone() };
                Some(train_embeddings(&sentences, &tc)?.embeddings)
            }
            _ => match cfg.paths.embeddings.get(&source) {
                Some(p) => Some(load_path(p, source.format().unwrap_or(TextFormat::Word2Vec), None)?),
                None => {
                    log::warn!("no vector file configured for {}", source.as_str());
                    None
                }
            },
        };
        if let Some(e) = loaded {
            vectors.insert(source, e);
        }
    }
    let prep = pipeline::prepare(&tweets, cfg.sample.holdout_fraction, cfg.seed)?;
    let rows = run_experiment_matrix(&prep, &vectors, &grid, &cfg.settings());
    let mut out = create(&a.out)?;
    write_matrix_csv(&mut out, &rows)?;
    out.flush()?;
    if let Some(p) = &a.markdown {
        write_text(p, &matrix_markdown(&rows))?;
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut sc: SynthConfig = match &a.params {
        Some(p) => toml::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => SynthConfig::default(),
    };
    sc.seed = a.seed.unwrap_or(sc.seed);
    sc.tweets = a.tweets.unwrap_or(sc.tweets);
    let c = generate(&sc)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let mut out = create(&a.out_dir.join("tweets.jsonl"))?;
    corpus::write_tweets(&mut out, &c.tweets, false)?;
    out.flush()?;
    let deps: Vec<DeputyRecord> = c
        .deputies
        .iter()
        .map(|d| DeputyRecord {
            id: d.id.clone(),
            handle: d.handle.clone(),
            seated_before_election: d.seated_before_election,
            seated_after_election: d.seated_after_election,
        })
        .collect();
    write_jsonl(&a.out_dir.join("deputies.jsonl"), &deps)?;
    if let Some(n) = a.background {
        let bg = BackgroundConfig { seed: sc.seed.wrapping_add(1), sentences: n, ..Default::default() };
        let mut out = create(&a.out_dir.join("background.txt"))?;
        for s in background_text(&sc, &bg)? {
            writeln!(out, "{}", s.join(" "))?;
        }
        out.flush()?;
    }
    Ok(())
}
