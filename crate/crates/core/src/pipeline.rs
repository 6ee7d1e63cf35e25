//! End-to-end glue: configuration, example encoding, the experiment cell
//! (holdout → sample → cross-validate → fit → test), the experiment matrix,
//! corpus classification and word-frequency export.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{Cohort, Deputy, Label, Tweet};
use crate::embeddings::{encode, EmbeddingMatrix, EmbeddingTrainConfig, Embeddings, TextFormat, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::{csv_field, evaluate_test, kfold_cv, score, stratified_holdout, EvalReport, ModelSpec};
use crate::models::{Architecture, Checkpoint, CnnConfig, FastTextConfig, LstmConfig, Model, ModelKind};
use crate::sampling::{draw_sample, monthly_histogram, BiasConfig, SampleMode, SamplePlan};
use crate::training::{Example, TrainConfig};

/// Where the word vectors come from: one of the published pretrained
/// models (loaded from a text file) or vectors trained on the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSource {
    Word2vecCbow,
    Word2vecSkipGram,
    Glove,
    Trained,
}

impl EmbeddingSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingSource::Word2vecCbow => "word2vec-cbow",
            EmbeddingSource::Word2vecSkipGram => "word2vec-skip-gram",
            EmbeddingSource::Glove => "glove",
            EmbeddingSource::Trained => "trained",
        }
    }

    /// Text format of a pretrained file; `None` for corpus-trained vectors.
    pub fn format(self) -> Option<TextFormat> {
        match self {
            EmbeddingSource::Word2vecCbow | EmbeddingSource::Word2vecSkipGram => Some(TextFormat::Word2Vec),
            EmbeddingSource::Glove => Some(TextFormat::Glove),
            EmbeddingSource::Trained => None,
        }
    }
}

impl std::str::FromStr for EmbeddingSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word2vec-cbow" => Ok(EmbeddingSource::Word2vecCbow),
            "word2vec-skip-gram" => Ok(EmbeddingSource::Word2vecSkipGram),
            "glove" => Ok(EmbeddingSource::Glove),
            "trained" => Ok(EmbeddingSource::Trained),
            _ => Err(Error::invalid(format!("unknown embedding source `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub tweets: Option<PathBuf>,
    pub deputies: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    /// Pretrained vector files by source.
    pub embeddings: BTreeMap<EmbeddingSource, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    /// Total labeled size, both classes together.
    pub labeled_size: usize,
    pub mode: SampleMode,
    pub bias: BiasConfig,
    /// Fraction of each class held out as the external test set before
    /// any pool is drawn.
    pub holdout_fraction: f64,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            labeled_size: 2000,
            mode: SampleMode::Unbiased,
            bias: BiasConfig::default(),
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub source: EmbeddingSource,
    /// Used when `source = "trained"`.
    pub train: EmbeddingTrainConfig,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            source: EmbeddingSource::Word2vecCbow,
            train: EmbeddingTrainConfig { dim: 300, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub max_len: usize,
    pub cnn: CnnConfig,
    pub lstm: LstmConfig,
    pub fasttext: FastTextConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: ModelKind::Cnn,
            max_len: 40,
            cnn: CnnConfig::default(),
            lstm: LstmConfig::default(),
            fasttext: FastTextConfig::default(),
        }
    }
}

impl ModelSection {
    pub fn architecture(&self, kind: ModelKind) -> Architecture {
        match kind {
            ModelKind::Cnn => Architecture::Cnn(self.cnn.clone()),
            ModelKind::Lstm => Architecture::Lstm(self.lstm.clone()),
            ModelKind::FastText => Architecture::FastText(self.fasttext.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub folds: usize,
    pub min_group_size: usize,
    /// Also score the final model on its own training set.
    pub resubstitution: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection { folds: 10, min_group_size: 5, resubstitution: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WordCloudSection {
    /// Inclusive range of posting dates.
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Default for WordCloudSection {
    fn default() -> Self {
        // the 2014 campaign period
        WordCloudSection {
            start: NaiveDate::from_ymd_opt(2014, 7, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2014, 10, 31).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub sample: SampleSection,
    pub embeddings: EmbeddingSection,
    pub model: ModelSection,
    pub training: TrainConfig,
    pub evaluation: EvaluationSection,
    pub wordcloud: WordCloudSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        for kind in [ModelKind::Cnn, ModelKind::Lstm, ModelKind::FastText] {
            self.model.architecture(kind).validate()?;
        }
        if self.model.max_len == 0 {
            return Err(Error::Config("max_len must be positive".into()));
        }
        if !(self.sample.holdout_fraction > 0.0 && self.sample.holdout_fraction < 1.0) {
            return Err(Error::Config("holdout_fraction must lie in (0, 1)".into()));
        }
        if !(0.5..=1.0).contains(&self.sample.bias.concentration) {
            return Err(Error::Config("bias concentration must lie in [0.5, 1]".into()));
        }
        if self.evaluation.folds < 2 {
            return Err(Error::Config("evaluation.folds must be at least 2".into()));
        }
        if self.sample.labeled_size == 0 {
            return Err(Error::Config("labeled_size must be positive".into()));
        }
        if self.wordcloud.start > self.wordcloud.end {
            return Err(Error::Config("wordcloud start is after end".into()));
        }
        Ok(())
    }

    /// Fail unless every configured input file exists.
    pub fn check_paths(&self) -> Result<()> {
        let p = &self.paths;
        let all = p.tweets.iter().chain(&p.deputies).chain(&p.stopwords).chain(p.embeddings.values());
        for path in all {
            if !path.is_file() {
                return Err(Error::Config(format!("missing input file {}", path.display())));
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            seed: self.seed,
            holdout_fraction: self.sample.holdout_fraction,
            bias: self.sample.bias,
            folds: self.evaluation.folds,
            resubstitution: self.evaluation.resubstitution,
            min_group_size: self.evaluation.min_group_size,
            max_len: self.model.max_len,
            models: self.model.clone(),
            training: TrainConfig { seed: self.seed, ..self.training.clone() },
        }
    }
}

/// Encode labeled tweets. Unlabeled tweets are an error.
pub fn make_examples(tweets: &[&Tweet], vocab: &Vocabulary, max_len: usize, min_len: usize) -> Result<Vec<Example>> {
    tweets
        .iter()
        .map(|t| {
            let label = t.label.ok_or_else(|| Error::invalid(format!("tweet {} has no label", t.id)))?;
            Ok(Example {
                id: t.id.clone(),
                deputy_id: t.deputy_id.clone(),
                month: t.month(),
                tokens: encode(&t.tokens, vocab, max_len, min_len),
                label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub seed: u64,
    pub holdout_fraction: f64,
    pub bias: BiasConfig,
    pub folds: usize,
    pub resubstitution: bool,
    pub min_group_size: usize,
    pub max_len: usize,
    pub models: ModelSection,
    pub training: TrainConfig,
}

/// A normalized, labeled corpus split into a sampling pool and an external
/// test set.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub pool: Vec<Tweet>,
    pub test: Vec<Tweet>,
}

/// Stratified holdout over the labeled tweets; unlabeled tweets are ignored.
pub fn prepare(tweets: &[Tweet], fraction: f64, seed: u64) -> Result<Prepared> {
    let labeled: Vec<&Tweet> = tweets.iter().filter(|t| t.label.is_some()).collect();
    if labeled.is_empty() {
        return Err(Error::invalid("no labeled tweets"));
    }
    let labels: Vec<Label> = labeled.iter().map(|t| t.label.unwrap()).collect();
    let (train, test) = stratified_holdout(&labels, fraction, seed)?;
    Ok(Prepared {
        pool: train.iter().map(|&i| labeled[i].clone()).collect(),
        test: test.iter().map(|&i| labeled[i].clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub labeled_size: usize,
    pub mode: SampleMode,
    pub model: ModelKind,
    pub embedding: EmbeddingSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    /// Mean macro F1 over the cross-validation folds.
    pub cv_macro_f1: f64,
    pub cv_fold_scores: Vec<f64>,
    /// Final model scored on its own training pool.
    pub resubstitution_macro_f1: Option<f64>,
    pub test_macro_f1: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub warnings: Vec<String>,
}

/// Everything one cell produces, including the fitted model.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub metrics: CellMetrics,
    pub model: Model,
    pub embeddings: EmbeddingMatrix,
    pub train_ids: Vec<String>,
    pub report: EvalReport,
}

/// Draw the labeled pool for `cell`, cross-validate on it, fit the final
/// model on all of it and score that model on the held-out test set.
pub fn run_cell(prep: &Prepared, emb: &Embeddings, cell: &Cell, s: &ExperimentSettings) -> Result<CellRun> {
    let hist = monthly_histogram(&prep.pool)?;
    let plan = SamplePlan::for_labeled_size(&hist, cell.labeled_size, cell.mode, s.seed)?.with_bias(s.bias);
    let sample = draw_sample(&prep.pool, &plan)?;
    let by_id: HashMap<&str, &Tweet> = prep.pool.iter().map(|t| (t.id.as_str(), t)).collect();
    let chosen: Vec<&Tweet> =
        sample.political.iter().chain(&sample.non_political).map(|id| by_id[id.as_str()]).collect();

    let arch = s.models.architecture(cell.model);
    let min_len = arch.min_len();
    let train = make_examples(&chosen, &emb.vocab, s.max_len, min_len)?;
    let test_refs: Vec<&Tweet> = prep.test.iter().collect();
    let test = make_examples(&test_refs, &emb.vocab, s.max_len, min_len)?;

    let spec = ModelSpec { arch, train: s.training.clone(), init_seed: s.seed };
    let cv = kfold_cv(&train, s.folds, &spec, &emb.matrix, s.seed, false)?;
    let (model, tuned) = spec.fit(&train, &emb.matrix, 0)?;
    let resub = if s.resubstitution { Some(score(&model, &train, &tuned)?) } else { None };
    let train_ids: Vec<String> = train.iter().map(|e| e.id.clone()).collect();
    let mut report = evaluate_test(&model, &tuned, &test, train_ids.iter().map(String::as_str), s.min_group_size)?;
    let mut cv_report = cv.clone();
    cv_report.resubstitution = resub;
    report.cross_validation = Some(cv_report);
    Ok(CellRun {
        metrics: CellMetrics {
            cv_macro_f1: cv.mean,
            cv_fold_scores: cv.fold_scores,
            resubstitution_macro_f1: resub,
            test_macro_f1: report.macro_f1,
            train_size: train.len(),
            test_size: test.len(),
            warnings: sample.warnings,
        },
        model,
        embeddings: tuned,
        train_ids,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixGrid {
    pub labeled_sizes: Vec<usize>,
    pub modes: Vec<SampleMode>,
    pub models: Vec<ModelKind>,
    pub embeddings: Vec<EmbeddingSource>,
}

impl Default for MatrixGrid {
    fn default() -> Self {
        MatrixGrid {
            labeled_sizes: vec![2000],
            modes: vec![SampleMode::Unbiased],
            models: vec![ModelKind::Cnn],
            embeddings: vec![EmbeddingSource::Word2vecCbow],
        }
    }
}

impl MatrixGrid {
    /// Cartesian product in a fixed order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &embedding in &self.embeddings {
            for &model in &self.models {
                for &mode in &self.modes {
                    for &labeled_size in &self.labeled_sizes {
                        out.push(Cell { labeled_size, mode, model, embedding });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell: Cell,
    pub result: std::result::Result<CellMetrics, String>,
}

/// Run every cell; a failing cell is recorded and the rest still run.
pub fn run_experiment_matrix(
    prep: &Prepared,
    embeddings: &BTreeMap<EmbeddingSource, Embeddings>,
    grid: &MatrixGrid,
    s: &ExperimentSettings,
) -> Vec<CellOutcome> {
    grid.cells()
        .into_iter()
        .map(|cell| {
            let result = match embeddings.get(&cell.embedding) {
                None => Err(format!("no vectors loaded for {}", cell.embedding.as_str())),
                Some(emb) => run_cell(prep, emb, &cell, s).map(|r| r.metrics).map_err(|e| e.to_string()),
            };
            match &result {
                Ok(m) => log::info!(
                    "{} {} {} {}: cv {:.4} test {:.4}",
                    cell.embedding.as_str(),
                    cell.model,
                    cell.mode,
                    cell.labeled_size,
                    m.cv_macro_f1,
                    m.test_macro_f1
                ),
                Err(e) => log::warn!("cell failed: {e}"),
            }
            CellOutcome { cell, result }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_matrix_csv<W: Write>(mut out: W, rows: &[CellOutcome]) -> Result<()> {
    writeln!(out, "labeled_size,mode,model,embedding,status,cv_macro_f1,resubstitution_macro_f1,test_macro_f1,error")?;
    for r in rows {
        let c = &r.cell;
        let head = format!("{},{},{},{}", c.labeled_size, c.mode, c.model, c.embedding.as_str());
        match &r.result {
            Ok(m) => {
                writeln!(out, "{head},ok,{},{},{},", m.cv_macro_f1, opt(m.resubstitution_macro_f1), m.test_macro_f1)?
            }
            Err(e) => writeln!(out, "{head},failed,,,,{}", csv_field(e))?,
        }
    }
    Ok(())
}

pub fn matrix_markdown(rows: &[CellOutcome]) -> String {
    let mut s = String::from(
        "| labeled | sampling | model | embedding | status | CV macro F1 | training-set macro F1 | test macro F1 |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    let f = |v: f64| format!("{v:.4}");
    for r in rows {
        let c = &r.cell;
        let (status, cv, rs, te) = match &r.result {
            Ok(m) => ("ok", f(m.cv_macro_f1), m.resubstitution_macro_f1.map_or("-".into(), f), f(m.test_macro_f1)),
            Err(_) => ("failed", "-".into(), "-".into(), "-".into()),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {status} | {cv} | {rs} | {te} |",
            c.labeled_size,
            c.mode,
            c.model,
            c.embedding.as_str()
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub probability: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    /// `None` for the total row.
    pub cohort: Option<Cohort>,
    pub tweets: usize,
    pub deputies: usize,
    pub average_per_deputy: f64,
    pub political_percent: f64,
    pub political: usize,
}

#[derive(Debug, Clone)]
pub struct Classified {
    pub predictions: Vec<Prediction>,
    pub cohorts: Vec<CohortRow>,
}

impl Classified {
    pub fn ids(&self, label: Label) -> impl Iterator<Item = &str> {
        self.predictions.iter().filter(move |p| p.label == label).map(|p| p.id.as_str())
    }
}

/// Label every tweet with the checkpoint's model. The embedding vocabulary
/// must be the one the checkpoint was trained against.
pub fn classify_corpus(
    ck: &Checkpoint,
    emb: &Embeddings,
    tweets: &[Tweet],
    deputies: &BTreeMap<String, Deputy>,
) -> Result<Classified> {
    ck.check_vocabulary(&emb.vocab)?;
    let model = ck.model();
    let tuned = ck.fine_tuned_embeddings();
    let matrix = tuned.as_ref().unwrap_or(&emb.matrix);
    let min_len = model.arch.min_len();
    let mut predictions = Vec::with_capacity(tweets.len());
    for t in tweets {
        let seq = encode(&t.tokens, &emb.vocab, ck.max_len, min_len);
        let p = model.predict(&seq, matrix)?;
        predictions.push(Prediction { id: t.id.clone(), probability: p.probability, label: p.label });
    }
    let labels: Vec<Label> = predictions.iter().map(|p| p.label).collect();
    Ok(Classified { cohorts: cohort_table(tweets, &labels, deputies), predictions })
}

/// Per-cohort volume and political share, rows in the order Reelected,
/// Newcomers, Losers, then the total. Tweets by unknown deputies count only
/// towards the total.
pub fn cohort_table(tweets: &[Tweet], labels: &[Label], deputies: &BTreeMap<String, Deputy>) -> Vec<CohortRow> {
    let order = [Cohort::Reelected, Cohort::Newcomer, Cohort::Loser];
    let mut counts: BTreeMap<Option<Cohort>, (usize, usize, HashSet<&str>)> = BTreeMap::new();
    for (t, l) in tweets.iter().zip(labels) {
        let cohort = deputies.get(&t.deputy_id).map(|d| d.cohort);
        let keys = if cohort.is_some() { vec![cohort, None] } else { vec![None] };
        for key in keys {
            let e = counts.entry(key).or_default();
            e.0 += 1;
            e.1 += usize::from(*l == Label::Political);
            e.2.insert(&t.deputy_id);
        }
    }
    let row = |cohort: Option<Cohort>| {
        let (n, pol, deps) = counts.get(&cohort).map_or((0, 0, 0), |(n, p, d)| (*n, *p, d.len()));
        CohortRow {
            cohort,
            tweets: n,
            deputies: deps,
            average_per_deputy: if deps == 0 { 0.0 } else { n as f64 / deps as f64 },
            political_percent: if n == 0 { 0.0 } else { 100.0 * pol as f64 / n as f64 },
            political: pol,
        }
    };
    order.iter().map(|&c| row(Some(c))).chain(std::iter::once(row(None))).collect()
}

fn cohort_name(c: Option<Cohort>) -> &'static str {
    c.map_or("total", Cohort::as_str)
}

pub fn write_cohort_csv<W: Write>(mut out: W, rows: &[CohortRow]) -> Result<()> {
    writeln!(out, "cohort,tweets,deputies,average_per_deputy,political_percent,political_tweets")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            cohort_name(r.cohort),
            r.tweets,
            r.deputies,
            r.average_per_deputy,
            r.political_percent,
            r.political
        )?;
    }
    Ok(())
}

pub fn cohort_markdown(rows: &[CohortRow]) -> String {
    let mut s = String::from(
        "| | # tweets | # deputies | average | % political tweets | # political tweets |\n|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.0} | {:.0} | {} |",
            cohort_name(r.cohort),
            r.tweets,
            r.deputies,
            r.average_per_deputy,
            r.political_percent,
            r.political
        );
    }
    s
}

pub fn write_predictions_csv<W: Write>(mut out: W, preds: &[Prediction]) -> Result<()> {
    writeln!(out, "id,probability,label")?;
    for p in preds {
        writeln!(out, "{},{},{}", csv_field(&p.id), p.probability, p.label.as_str())?;
    }
    Ok(())
}

/// Token counts over tweets posted within `[start, end]` (whole days,
/// inclusive), sorted by count descending then token.
pub fn word_frequencies<'a>(
    tweets: impl IntoIterator<Item = &'a Tweet>,
    start: NaiveDate,
    end: NaiveDate,
) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tweets {
        let day = t.posted_at.date_naive();
        if day < start || day > end {
            continue;
        }
        for tok in &t.tokens {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut rows: Vec<(String, usize)> = counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

/// `token,count` CSV; returns false (after writing the header) when the
/// selection is empty.
pub fn write_word_frequencies<W: Write>(mut out: W, rows: &[(String, usize)]) -> Result<bool> {
    writeln!(out, "token,count")?;
    for (t, c) in rows {
        writeln!(out, "{},{c}", csv_field(t))?;
    }
    Ok(!rows.is_empty())
}
