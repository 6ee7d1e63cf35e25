//! Vocabularies, embedding matrices, text-format loaders and a word2vec
//! trainer (C-BoW and Skip-Gram with negative sampling).
//!
//! Index 0 is always PAD (an all-zero row) and index 1 is always UNK. Tokens
//! are NFC-normalized and lowercased on load, matching the corpus normalizer.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<PAD>";
pub const UNK_TOKEN: &str = "<UNK>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let index = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Vocabulary { tokens, index }
    }

    /// Insert a token, returning its index. Existing tokens keep their index.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or UNK.
    pub fn lookup(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, idx: usize) -> Option<&str> {
        self.tokens.get(idx).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Hex SHA-256 over the tokens in index order, newline-separated.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Row-major `rows x dim` matrix of word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingMatrix { dim, data: vec![0.0; rows * dim] }
    }

    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!("{} values do not form rows of {dim}", data.len())));
        }
        Ok(EmbeddingMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A vocabulary and its matrix; `matrix.rows() == vocab.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub vocab: Vocabulary,
    pub matrix: EmbeddingMatrix,
}

impl Embeddings {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.vocab.get(token).map(|i| self.matrix.row(i))
    }

    /// Write word2vec text format. PAD is omitted; UNK is written as `<UNK>`.
    pub fn write_word2vec_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.vocab.len() - 1, self.dim())?;
        for (i, tok) in self.vocab.tokens().iter().enumerate().skip(1) {
            out.write_all(tok.as_bytes())?;
            for v in self.matrix.row(i) {
                write!(out, " {v}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn canonical(s: &str) -> String {
    s.nfc().collect::<String>().to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextFormat {
    Word2Vec,
    Glove,
}

impl std::str::FromStr for TextFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word2vec" => Ok(TextFormat::Word2Vec),
            "glove" => Ok(TextFormat::Glove),
            _ => Err(Error::invalid(format!("unknown embedding format `{s}`"))),
        }
    }
}

/// Upper bound on a declared word2vec dimension; guards allocation on bad headers.
pub const MAX_DIM: usize = 1 << 16;

struct Loader<'a> {
    restrict_to: Option<&'a HashSet<String>>,
    dim: Option<usize>,
    vocab: Vocabulary,
    data: Vec<f64>,
    unk: Option<Vec<f64>>,
    rows_read: usize,
}

impl<'a> Loader<'a> {
    fn new(restrict_to: Option<&'a HashSet<String>>, dim: Option<usize>) -> Self {
        Loader { restrict_to, dim, vocab: Vocabulary::new(), data: Vec::new(), unk: None, rows_read: 0 }
    }

    fn row(&mut self, line: usize, text: &str) -> Result<()> {
        let mut parts = text.split_ascii_whitespace();
        let Some(word) = parts.next() else {
            return Err(Error::format(line, "empty row"));
        };
        let mut values = Vec::new();
        for p in parts {
            let v: f64 = p.parse().map_err(|_| Error::format(line, format!("cannot parse `{p}` as a number")))?;
            if !v.is_finite() {
                return Err(Error::format(line, "non-finite value"));
            }
            values.push(v);
        }
        let dim = *self.dim.get_or_insert(values.len());
        if dim == 0 {
            return Err(Error::format(line, "cannot infer dimension: row has no values"));
        }
        if values.len() != dim {
            return Err(Error::format(line, format!("expected {dim} values, found {}", values.len())));
        }
        self.rows_read += 1;
        let word = canonical(word);
        if word == canonical(PAD_TOKEN) {
            return Ok(());
        }
        if word == canonical(UNK_TOKEN) {
            self.unk.get_or_insert(values);
            return Ok(());
        }
        if let Some(keep) = self.restrict_to {
            if !keep.contains(&word) {
                return Ok(());
            }
        }
        if self.vocab.get(&word).is_some() {
            return Ok(());
        }
        self.vocab.insert(&word);
        self.data.extend(values);
        Ok(())
    }

    fn finish(self) -> Result<Embeddings> {
        let dim = self.dim.ok_or_else(|| Error::format(1, "cannot infer dimension from an empty file"))?;
        let n = self.vocab.len() - 2;
        let unk = match self.unk {
            Some(u) => u,
            None if n == 0 => vec![0.0; dim],
            None => {
                let mut mean = vec![0.0; dim];
                for row in self.data.chunks(dim) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                mean
            }
        };
        let mut data = vec![0.0; dim];
        data.extend(unk);
        data.extend(self.data);
        Ok(Embeddings { vocab: self.vocab, matrix: EmbeddingMatrix { dim, data } })
    }
}

fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader.split(b'\n').enumerate().map(|(i, l)| {
        let bytes = l?;
        let s = String::from_utf8(bytes).map_err(|_| Error::format(i + 1, "invalid UTF-8"))?;
        Ok((i + 1, s.trim_end_matches('\r').to_string()))
    })
}

/// Stream a word2vec text file (`vocab_size dim` header line).
///
/// With `restrict_to`, rows for other tokens are parsed and validated but
/// not retained. UNK is the file's `<UNK>` row if present, else the mean of
/// the loaded vectors.
pub fn load_word2vec_text<R: BufRead>(reader: R, restrict_to: Option<&HashSet<String>>) -> Result<Embeddings> {
    let mut it = lines(reader);
    let (_, header) = it.next().transpose()?.ok_or_else(|| Error::format(1, "missing header line"))?;
    let mut h = header.split_ascii_whitespace();
    let parse = |s: Option<&str>, what: &str| -> Result<usize> {
        s.and_then(|s| s.parse().ok()).ok_or_else(|| Error::format(1, format!("header: cannot parse {what}")))
    };
    let count = parse(h.next(), "vocabulary size")?;
    let dim = parse(h.next(), "dimension")?;
    if h.next().is_some() {
        return Err(Error::format(1, "header: expected `vocab_size dim`"));
    }
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::format(1, format!("header: dimension must be in 1..={MAX_DIM}")));
    }
    let mut loader = Loader::new(restrict_to, Some(dim));
    let mut last = 1;
    for l in it {
        let (line, text) = l?;
        last = line;
        if text.trim().is_empty() {
            continue;
        }
        if loader.rows_read == count {
            return Err(Error::format(line, format!("more rows than the {count} declared in the header")));
        }
        loader.row(line, &text)?;
    }
    if loader.rows_read != count {
        return Err(Error::format(last, format!("header declares {count} rows, file has {}", loader.rows_read)));
    }
    loader.finish()
}

/// Stream a GloVe text file (no header; dimension taken from the first row).
pub fn load_glove_text<R: BufRead>(reader: R, restrict_to: Option<&HashSet<String>>) -> Result<Embeddings> {
    let mut loader = Loader::new(restrict_to, None);
    for l in lines(reader) {
        let (line, text) = l?;
        if text.trim().is_empty() {
            continue;
        }
        loader.row(line, &text)?;
    }
    loader.finish()
}

pub fn load_text<R: BufRead>(
    reader: R,
    format: TextFormat,
    restrict_to: Option<&HashSet<String>>,
) -> Result<Embeddings> {
    match format {
        TextFormat::Word2Vec => load_word2vec_text(reader, restrict_to),
        TextFormat::Glove => load_glove_text(reader, restrict_to),
    }
}

pub fn load_path(
    path: impl AsRef<std::path::Path>,
    format: TextFormat,
    restrict_to: Option<&HashSet<String>>,
) -> Result<Embeddings> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    load_text(f, format, restrict_to)
}

/// Map tokens to indices (UNK for unknown), truncate to `max_len`, then
/// right-pad with PAD up to `max(max_len, min_len)`.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize, min_len: usize) -> Vec<usize> {
    let mut out: Vec<usize> = tokens.iter().take(max_len).map(|t| vocab.lookup(t.as_ref())).collect();
    out.resize(max_len.max(min_len), PAD);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    Cbow,
    SkipGram,
}

impl std::str::FromStr for EmbeddingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbow" => Ok(EmbeddingMode::Cbow),
            "skipgram" | "skip-gram" => Ok(EmbeddingMode::SkipGram),
            _ => Err(Error::invalid(format!("unknown embedding mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingTrainConfig {
    pub mode: EmbeddingMode,
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for EmbeddingTrainConfig {
    fn default() -> Self {
        EmbeddingTrainConfig {
            mode: EmbeddingMode::Cbow,
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
            seed: 0,
        }
    }
}

impl EmbeddingTrainConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 || self.epochs == 0 || self.min_count == 0 {
            return Err(Error::Config("embedding training parameters must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("embedding learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedEmbeddings {
    pub embeddings: Embeddings,
    /// Output-side (context) vectors, same shape as `embeddings.matrix`.
    pub context: EmbeddingMatrix,
    /// Mean negative-sampling loss per prediction, one entry per epoch.
    pub loss_history: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Train word vectors on tokenized sentences with negative sampling.
///
/// Tokens below `min_count` are trained as UNK. Noise words follow the
/// unigram distribution raised to 0.75. The learning rate decays linearly
/// over all epochs. Input-side vectors are returned.
pub fn train_embeddings<S: AsRef<str>>(
    sentences: &[Vec<S>],
    config: &EmbeddingTrainConfig,
) -> Result<TrainedEmbeddings> {
    config.validate()?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in sentences {
        for t in s {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> =
        counts.iter().filter(|(_, &c)| c >= config.min_count).map(|(t, c)| (*t, *c)).collect();
    if kept.is_empty() {
        return Err(Error::invalid("no token reaches the minimum count"));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut vocab = Vocabulary::new();
    for (t, _) in &kept {
        vocab.insert(t);
    }
    let mut freq = vec![0usize; vocab.len()];
    let encoded: Vec<Vec<usize>> =
        sentences.iter().map(|s| s.iter().map(|t| vocab.lookup(t.as_ref())).collect()).collect();
    for s in &encoded {
        for &i in s {
            freq[i] += 1;
        }
    }
    let noise = WeightedIndex::new(freq.iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;

    let dim = config.dim;
    let rows = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Uniform::new(-0.5 / dim as f64, 0.5 / dim as f64);
    let mut input = vec![0.0; rows * dim];
    for v in input.iter_mut().skip(dim) {
        *v = init.sample(&mut rng);
    }
    let mut output = vec![0.0; rows * dim];

    let total_words: usize = encoded.iter().map(Vec::len).sum::<usize>() * config.epochs;
    let mut processed = 0usize;
    let mut hidden = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut loss_history = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let mut loss = 0.0;
        let mut predictions = 0usize;
        for sent in &encoded {
            for pos in 0..sent.len() {
                let progress = processed as f64 / total_words.max(1) as f64;
                let lr = config.learning_rate * (1.0 - progress).max(1e-4);
                processed += 1;
                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window + 1).min(sent.len());
                let center = sent[pos];
                let context = (lo..hi).filter(|&j| j != pos).map(|j| sent[j]);
                match config.mode {
                    EmbeddingMode::Cbow => {
                        let ctx: Vec<usize> = context.collect();
                        if ctx.is_empty() {
                            continue;
                        }
                        hidden.iter_mut().for_each(|h| *h = 0.0);
                        for &c in &ctx {
                            for (h, v) in hidden.iter_mut().zip(&input[c * dim..(c + 1) * dim]) {
                                *h += v;
                            }
                        }
                        hidden.iter_mut().for_each(|h| *h /= ctx.len() as f64);
                        grad.iter_mut().for_each(|g| *g = 0.0);
                        loss += negative_step(
                            &hidden,
                            center,
                            &mut output,
                            &mut grad,
                            &noise,
                            config.negatives,
                            lr,
                            dim,
                            &mut rng,
                        );
                        predictions += 1;
                        for &c in &ctx {
                            for (v, g) in input[c * dim..(c + 1) * dim].iter_mut().zip(&grad) {
                                *v += g;
                            }
                        }
                    }
                    EmbeddingMode::SkipGram => {
                        for c in context {
                            hidden.copy_from_slice(&input[center * dim..(center + 1) * dim]);
                            grad.iter_mut().for_each(|g| *g = 0.0);
                            loss += negative_step(
                                &hidden,
                                c,
                                &mut output,
                                &mut grad,
                                &noise,
                                config.negatives,
                                lr,
                                dim,
                                &mut rng,
                            );
                            predictions += 1;
                            for (v, g) in input[center * dim..(center + 1) * dim].iter_mut().zip(&grad) {
                                *v += g;
                            }
                        }
                    }
                }
            }
        }
        loss_history.push(if predictions == 0 { 0.0 } else { loss / predictions as f64 });
    }

    let matrix = EmbeddingMatrix { dim, data: input };
    debug_assert!(matrix.row(PAD).iter().all(|&v| v == 0.0));
    let context = EmbeddingMatrix { dim, data: output };
    Ok(TrainedEmbeddings { embeddings: Embeddings { vocab, matrix }, context, loss_history })
}

/// One positive target plus `negatives` noise words. Updates output vectors
/// in place, accumulates the input-side gradient into `grad`, returns the loss.
#[allow(clippy::too_many_arguments)]
fn negative_step(
    hidden: &[f64],
    target: usize,
    output: &mut [f64],
    grad: &mut [f64],
    noise: &WeightedIndex<f64>,
    negatives: usize,
    lr: f64,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut loss = 0.0;
    for k in 0..=negatives {
        let (word, label) = if k == 0 {
            (target, 1.0)
        } else {
            let w = noise.sample(rng);
            if w == target {
                continue;
            }
            (w, 0.0)
        };
        let out = &mut output[word * dim..(word + 1) * dim];
        let score: f64 = hidden.iter().zip(out.iter()).map(|(h, o)| h * o).sum();
        let p = sigmoid(score);
        loss -= if label == 1.0 { p.max(1e-12).ln() } else { (1.0 - p).max(1e-12).ln() };
        let g = (label - p) * lr;
        for ((gr, o), h) in grad.iter_mut().zip(out.iter_mut()).zip(hidden) {
            *gr += g * *o;
            *o += g * h;
        }
    }
    loss
}
