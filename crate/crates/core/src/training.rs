//! Mini-batch RMSProp training on binary cross-entropy, plus the
//! finite-difference gradient checker used to verify every backward pass.
//!
//! Training is single-threaded and bit-for-bit reproducible for a fixed
//! seed: the per-epoch shuffle and the dropout masks come from two separate
//! streams of one seeded ChaCha8 generator.

use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, YearMonth};
use crate::embeddings::{EmbeddingMatrix, PAD};
use crate::error::{Error, Result};
use crate::models::{Backward, Gradients, Model, PROB_CLIP};

/// An encoded, labeled example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub deputy_id: String,
    pub month: YearMonth,
    pub tokens: Vec<usize>,
    pub label: Label,
}

/// Binary cross-entropy with `p` clipped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStop {
    /// Epochs without improvement before stopping.
    pub patience: usize,
    /// Minimum decrease in epoch loss that counts as improvement.
    pub min_delta: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        EarlyStop { patience: 3, min_delta: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Update embedding rows too (UNK included, PAD never).
    pub fine_tune_embeddings: bool,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-8,
            seed: 0,
            shuffle: true,
            fine_tune_embeddings: false,
            early_stop: None,
        }
    }
}

impl TrainConfig {
    /// A learning rate of exactly zero is accepted and leaves every
    /// parameter untouched; negative rates are rejected.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        Ok(())
    }
}

/// One RMSProp update over a flat buffer.
pub fn rmsprop_update(param: &mut [f64], grad: &[f64], cache: &mut [f64], lr: f64, rho: f64, eps: f64) {
    for ((p, &g), c) in param.iter_mut().zip(grad).zip(cache.iter_mut()) {
        *c = rho * *c + (1.0 - rho) * g * g;
        *p -= lr * g / (*c + eps).sqrt();
    }
}

/// Running mean-square cache, one buffer per parameter tensor plus one for
/// the embedding matrix when it is trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub cache: Vec<Vec<f64>>,
    pub embedding_cache: Option<Vec<f64>>,
}

impl RmspropState {
    pub fn new(model: &Model, embeddings: Option<&EmbeddingMatrix>) -> Self {
        RmspropState {
            cache: model.params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect(),
            embedding_cache: embeddings.map(|e| vec![0.0; e.as_slice().len()]),
        }
    }
}

/// Apply one RMSProp step to the model (and to `embeddings` when given).
/// Embedding rows without a gradient still have their cache decayed; the
/// PAD row is never touched.
pub fn rmsprop_step(
    model: &mut Model,
    embeddings: Option<&mut EmbeddingMatrix>,
    grads: &Gradients,
    state: &mut RmspropState,
    cfg: &TrainConfig,
) {
    for ((t, g), c) in model.params.tensors.iter_mut().zip(&grads.params.tensors).zip(&mut state.cache) {
        rmsprop_update(&mut t.data, &g.data, c, cfg.learning_rate, cfg.rho, cfg.epsilon);
    }
    let (Some(emb), Some(cache)) = (embeddings, state.embedding_cache.as_mut()) else {
        return;
    };
    let d = emb.dim();
    let zero = vec![0.0; d];
    let sparse = grads.embeddings.as_ref();
    for r in 0..emb.rows() {
        if r == PAD {
            continue;
        }
        let g = sparse.and_then(|m| m.get(&r)).map_or(&zero[..], |v| &v[..]);
        rmsprop_update(emb.row_mut(r), g, &mut cache[r * d..(r + 1) * d], cfg.learning_rate, cfg.rho, cfg.epsilon);
    }
}

/// Gradient of the mean batch BCE, accumulated into `grads` (cleared
/// first). Returns the mean clipped loss of the batch.
pub fn backward(
    model: &Model,
    batch: &[&Example],
    emb: &EmbeddingMatrix,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
    grads: &mut Gradients,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    grads.clear();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for ex in batch {
        let target = ex.label.target();
        let p = model.run(&ex.tokens, emb, dropout_rng.as_deref_mut(), Some(Backward { target, scale, grads }))?;
        loss += bce_loss(p, target);
    }
    if let Some(name) = grads.non_finite() {
        return Err(Error::NonFiniteGradient(name));
    }
    Ok(loss * scale)
}

/// Mean eval-mode loss over a dataset.
pub fn mean_loss(model: &Model, data: &[Example], emb: &EmbeddingMatrix) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        total += bce_loss(model.forward(&ex.tokens, emb, None)?, ex.label.target());
    }
    Ok(total / data.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Eval-mode mean BCE over the training set after the epoch.
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    /// The updated matrix when embeddings were fine-tuned.
    pub embeddings: Option<EmbeddingMatrix>,
    pub history: Vec<EpochStats>,
}

pub fn check_both_classes(data: &[Example]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let pos = data.iter().filter(|e| e.label == Label::Political).count();
    if pos == 0 || pos == data.len() {
        return Err(Error::invalid("training set must contain both classes"));
    }
    Ok(())
}

/// Train `model` in place on `data`.
pub fn train(mut model: Model, data: &[Example], emb: &EmbeddingMatrix, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    check_both_classes(data)?;
    model.validate()?;

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);

    let mut tuned = cfg.fine_tune_embeddings.then(|| emb.clone());
    let mut state = RmspropState::new(&model, tuned.as_ref());
    let mut grads = Gradients::for_model(&model, cfg.fine_tune_embeddings);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut order_rng);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let current = tuned.as_ref().unwrap_or(emb);
            backward(&model, &batch, current, Some(&mut dropout_rng), &mut grads)?;
            rmsprop_step(&mut model, tuned.as_mut(), &grads, &mut state, cfg);
        }
        let loss = mean_loss(&model, data, tuned.as_ref().unwrap_or(emb))?;
        log::debug!("epoch {epoch}: loss {loss:.6}");
        history.push(EpochStats { epoch, mean_loss: loss });
        if let Some(es) = &cfg.early_stop {
            if loss < best - es.min_delta {
                best = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= es.patience {
                    log::info!("early stop after epoch {epoch}");
                    break;
                }
            }
        }
    }
    Ok(Trained { model, embeddings: tuned, history })
}

pub fn write_history_csv<W: Write>(mut out: W, history: &[EpochStats]) -> Result<()> {
    writeln!(out, "epoch,mean_loss")?;
    for h in history {
        writeln!(out, "{},{}", h.epoch, h.mean_loss)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub delta: f64,
    /// Check every coordinate when the model has at most this many;
    /// otherwise a seeded random subset of this size.
    pub max_coordinates: usize,
    pub seed: u64,
    /// Also check the embedding rows the example uses.
    pub embeddings: bool,
    /// Denominator floor for the relative error.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { delta: 1e-4, max_coordinates: 2000, seed: 0, embeddings: false, floor: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Name of the worst coordinate's tensor and its flat index.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Relative error `|a - n| / max(|a| + |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

/// Compare analytic gradients of one example's loss with central
/// differences. Architectures with a random forward pass are rejected.
pub fn gradient_check(
    model: &Model,
    example: &Example,
    emb: &EmbeddingMatrix,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if model.arch.is_stochastic() {
        return Err(Error::StochasticForward);
    }
    let y = example.label.target();
    let mut grads = Gradients::for_model(model, cfg.embeddings);
    model.run(&example.tokens, emb, None, Some(Backward { target: y, scale: 1.0, grads: &mut grads }))?;

    // (tensor index or None for embeddings, flat index)
    let mut coords: Vec<(Option<usize>, usize)> = Vec::new();
    for (ti, t) in model.params.tensors.iter().enumerate() {
        coords.extend((0..t.data.len()).map(|i| (Some(ti), i)));
    }
    if cfg.embeddings {
        let d = emb.dim();
        let mut rows: Vec<usize> = example.tokens.iter().copied().filter(|&r| r != PAD).collect();
        rows.sort_unstable();
        rows.dedup();
        for r in rows {
            coords.extend((r * d..(r + 1) * d).map(|i| (None, i)));
        }
    }
    if coords.len() > cfg.max_coordinates {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picked = index::sample(&mut rng, coords.len(), cfg.max_coordinates.max(200)).into_vec();
        picked.sort_unstable();
        coords = picked.into_iter().map(|i| coords[i]).collect();
    }

    let mut probe = model.clone();
    let mut probe_emb = emb.clone();
    let loss_at = |which: Option<usize>, i: usize, v: f64, probe: &mut Model, pe: &mut EmbeddingMatrix| {
        let slot = match which {
            Some(ti) => &mut probe.params.tensors[ti].data[i],
            None => &mut pe.as_mut_slice()[i],
        };
        let saved = *slot;
        *slot = v;
        let l = probe.forward(&example.tokens, pe, None).map(|p| bce_loss(p, y));
        let slot = match which {
            Some(ti) => &mut probe.params.tensors[ti].data[i],
            None => &mut pe.as_mut_slice()[i],
        };
        *slot = saved;
        l
    };

    let d = emb.dim();
    let mut worst = None;
    let mut max_err = 0.0f64;
    for &(which, i) in &coords {
        let (x, analytic, name) = match which {
            Some(ti) => {
                let t = &model.params.tensors[ti];
                (t.data[i], grads.params.tensors[ti].data[i], t.name.clone())
            }
            None => {
                let row = i / d;
                let g = grads.embeddings.as_ref().and_then(|m| m.get(&row)).map_or(0.0, |v| v[i % d]);
                (emb.as_slice()[i], g, "embeddings".to_string())
            }
        };
        let up = loss_at(which, i, x + cfg.delta, &mut probe, &mut probe_emb)?;
        let down = loss_at(which, i, x - cfg.delta, &mut probe, &mut probe_emb)?;
        let numeric = (up - down) / (2.0 * cfg.delta);
        let err = relative_error(analytic, numeric, cfg.floor);
        if err > max_err || worst.is_none() {
            max_err = max_err.max(err);
            worst = Some((name, i));
        }
    }
    Ok(GradCheckReport { max_relative_error: max_err, worst, coordinates: coords.len() })
}
