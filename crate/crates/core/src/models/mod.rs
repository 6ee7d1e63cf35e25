//! Classifier architectures: a multi-width convolutional network, a
//! single-layer LSTM and a FastText-style mean-of-embeddings model.
//!
//! Every model maps an encoded token sequence to one sigmoid probability of
//! the political class. The forward pass of each architecture optionally
//! runs the matching backward pass in the same call, accumulating exact
//! BCE gradients into a [`Gradients`] buffer.

mod cnn;
mod fasttext;
mod lstm;

pub mod checkpoint;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::embeddings::{EmbeddingMatrix, PAD};
use crate::error::{Error, Result};

pub use checkpoint::Checkpoint;

/// Lower clip bound applied to probabilities entering the loss.
pub const PROB_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        Tensor { name: name.to_string(), shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn zeros_like(&self) -> Self {
        ParamSet { tensors: self.tensors.iter().map(|t| Tensor::zeros(&t.name, &t.shape)).collect() }
    }

    pub fn get(&self, name: &str) -> &[f64] {
        &self.tensor(name).data
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [f64] {
        &mut self.tensors.iter_mut().find(|t| t.name == name).unwrap_or_else(|| panic!("no tensor named `{name}`")).data
    }

    pub fn tensor(&self, name: &str) -> &Tensor {
        self.tensors.iter().find(|t| t.name == name).unwrap_or_else(|| panic!("no tensor named `{name}`"))
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fill(&mut self, v: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Lstm,
    FastText,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
            ModelKind::FastText => "fasttext",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(ModelKind::Cnn),
            "lstm" => Ok(ModelKind::Lstm),
            "fasttext" => Ok(ModelKind::FastText),
            _ => Err(Error::invalid(format!("unknown model `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    /// Filter widths, ascending.
    pub widths: Vec<usize>,
    pub filters: usize,
    /// Dropout on the pooled vector, train mode only.
    pub dropout: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig { widths: vec![3, 4, 5], filters: 100, dropout: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub hidden: usize,
    pub forget_bias: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig { hidden: 128, forget_bias: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FastTextConfig {
    /// Hashed bigram buckets; `None` disables bigram features.
    pub bigram_buckets: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "hyperparameters", rename_all = "lowercase")]
pub enum Architecture {
    Cnn(CnnConfig),
    Lstm(LstmConfig),
    FastText(FastTextConfig),
}

impl Architecture {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Cnn => Architecture::Cnn(CnnConfig::default()),
            ModelKind::Lstm => Architecture::Lstm(LstmConfig::default()),
            ModelKind::FastText => Architecture::FastText(FastTextConfig::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Architecture::Cnn(_) => ModelKind::Cnn,
            Architecture::Lstm(_) => ModelKind::Lstm,
            Architecture::FastText(_) => ModelKind::FastText,
        }
    }

    /// Shortest sequence the architecture accepts.
    pub fn min_len(&self) -> usize {
        match self {
            Architecture::Cnn(c) => c.widths.iter().copied().max().unwrap_or(1),
            _ => 1,
        }
    }

    /// True when the train-mode forward pass draws random numbers.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Architecture::Cnn(c) if c.dropout > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match self {
            Architecture::Cnn(c) => {
                if c.widths.is_empty() || c.widths.contains(&0) {
                    return bad("cnn widths must be non-empty and positive");
                }
                if c.widths.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("cnn widths must be strictly ascending");
                }
                if c.filters == 0 {
                    return bad("cnn filters must be positive");
                }
                if !(0.0..1.0).contains(&c.dropout) {
                    return bad("cnn dropout must lie in [0, 1)");
                }
            }
            Architecture::Lstm(l) => {
                if l.hidden == 0 {
                    return bad("lstm hidden size must be positive");
                }
                if !l.forget_bias.is_finite() {
                    return bad("lstm forget bias must be finite");
                }
            }
            Architecture::FastText(f) => {
                if f.bigram_buckets == Some(0) {
                    return bad("fasttext bigram buckets must be positive");
                }
            }
        }
        Ok(())
    }

    /// Tensor names and shapes for an input dimension `dim`.
    pub fn shapes(&self, dim: usize) -> Vec<(String, Vec<usize>)> {
        match self {
            Architecture::Cnn(c) => {
                let mut v = Vec::new();
                for &h in &c.widths {
                    v.push((format!("conv{h}.weight"), vec![h, dim, c.filters]));
                    v.push((format!("conv{h}.bias"), vec![c.filters]));
                }
                v.push(("dense.weight".into(), vec![c.widths.len() * c.filters]));
                v.push(("dense.bias".into(), vec![1]));
                v
            }
            Architecture::Lstm(l) => {
                let h = l.hidden;
                let mut v = Vec::new();
                for g in lstm::GATES {
                    v.push((format!("w_{g}"), vec![dim, h]));
                    v.push((format!("u_{g}"), vec![h, h]));
                    v.push((format!("b_{g}"), vec![h]));
                }
                v.push(("dense.weight".into(), vec![h]));
                v.push(("dense.bias".into(), vec![1]));
                v
            }
            Architecture::FastText(f) => {
                let mut v = vec![("linear.weight".into(), vec![dim]), ("linear.bias".into(), vec![1])];
                if let Some(b) = f.bigram_buckets {
                    v.push(("bigram.embedding".into(), vec![b, dim]));
                }
                v
            }
        }
    }
}

/// Gradient buffer: one tensor per parameter plus sparse rows for the
/// embedding matrix when embeddings are trainable. PAD never gets a row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: ParamSet,
    pub embeddings: Option<BTreeMap<usize, Vec<f64>>>,
}

impl Gradients {
    pub fn for_model(model: &Model, track_embeddings: bool) -> Self {
        Gradients { params: model.params.zeros_like(), embeddings: track_embeddings.then(BTreeMap::new) }
    }

    pub fn clear(&mut self) {
        self.params.fill(0.0);
        if let Some(e) = &mut self.embeddings {
            e.clear();
        }
    }

    pub(crate) fn add_input(&mut self, row: usize, grad: &[f64], scale: f64) {
        if row == PAD {
            return;
        }
        if let Some(e) = &mut self.embeddings {
            let slot = e.entry(row).or_insert_with(|| vec![0.0; grad.len()]);
            for (s, g) in slot.iter_mut().zip(grad) {
                *s += scale * g;
            }
        }
    }

    /// First parameter holding a non-finite value, if any.
    pub fn non_finite(&self) -> Option<String> {
        for t in &self.params.tensors {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Some(t.name.clone());
            }
        }
        if let Some(e) = &self.embeddings {
            if e.values().any(|r| r.iter().any(|v| !v.is_finite())) {
                return Some("embeddings".into());
            }
        }
        None
    }
}

/// Backward request: target in {0, 1}, the scale applied to this example's
/// gradient (1/batch for a batch mean), and the buffer to accumulate into.
pub struct Backward<'g> {
    pub target: f64,
    pub scale: f64,
    pub grads: &'g mut Gradients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub dim: usize,
    pub params: ParamSet,
}

impl Model {
    /// Uniform(-0.05, 0.05) weights, zero biases, LSTM forget bias from config.
    pub fn init(arch: Architecture, dim: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-0.05, 0.05);
        let tensors = arch
            .shapes(dim)
            .into_iter()
            .map(|(name, shape)| {
                let mut t = Tensor::zeros(&name, &shape);
                let is_bias = name.ends_with(".bias") || name.starts_with("b_");
                if !is_bias {
                    t.data.iter_mut().for_each(|v| *v = u.sample(&mut rng));
                }
                if let (Architecture::Lstm(l), "b_f") = (&arch, name.as_str()) {
                    t.data.iter_mut().for_each(|v| *v = l.forget_bias);
                }
                t
            })
            .collect();
        Ok(Model { arch, dim, params: ParamSet { tensors } })
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind()
    }

    /// Check tensor names, shapes and finiteness against the architecture.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let want = self.arch.shapes(self.dim);
        if want.len() != self.params.tensors.len() {
            return Err(Error::Dimension(format!(
                "expected {} tensors, found {}",
                want.len(),
                self.params.tensors.len()
            )));
        }
        for ((name, shape), t) in want.iter().zip(&self.params.tensors) {
            if &t.name != name || &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Dimension(format!(
                    "tensor `{}` does not match expected `{name}` {shape:?}",
                    t.name
                )));
            }
        }
        if !self.params.is_finite() {
            return Err(Error::invalid("non-finite weight"));
        }
        Ok(())
    }

    fn check_input(&self, seq: &[usize], emb: &EmbeddingMatrix) -> Result<()> {
        if emb.dim() != self.dim {
            return Err(Error::Dimension(format!("model dim {} vs embedding dim {}", self.dim, emb.dim())));
        }
        if let Some(&i) = seq.iter().find(|&&i| i >= emb.rows()) {
            return Err(Error::Dimension(format!("token index {i} outside {} embedding rows", emb.rows())));
        }
        if seq.len() < self.arch.min_len() {
            return Err(Error::Dimension(format!(
                "sequence length {} shorter than widest filter {}",
                seq.len(),
                self.arch.min_len()
            )));
        }
        Ok(())
    }

    /// Political probability. `dropout_rng: Some(..)` selects train mode.
    pub fn forward(&self, seq: &[usize], emb: &EmbeddingMatrix, dropout_rng: Option<&mut ChaCha8Rng>) -> Result<f64> {
        self.run(seq, emb, dropout_rng, None)
    }

    /// Forward pass; with `backward`, also accumulates the gradient of this
    /// example's BCE loss. Returns the unclipped probability.
    pub fn run(
        &self,
        seq: &[usize],
        emb: &EmbeddingMatrix,
        dropout_rng: Option<&mut ChaCha8Rng>,
        backward: Option<Backward<'_>>,
    ) -> Result<f64> {
        self.check_input(seq, emb)?;
        let p = match &self.arch {
            Architecture::Cnn(c) => cnn::run(c, &self.params, seq, emb, dropout_rng, backward),
            Architecture::Lstm(l) => lstm::run(l, &self.params, seq, emb, backward),
            Architecture::FastText(f) => fasttext::run(f, &self.params, seq, emb, backward),
        };
        Ok(p)
    }

    pub fn predict(&self, seq: &[usize], emb: &EmbeddingMatrix) -> Result<Prediction> {
        let p = self.forward(seq, emb, None)?;
        Ok(Prediction { probability: p, label: predict(p, 0.5) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub label: Label,
}

/// Political iff `p >= threshold`.
pub fn predict(p: f64, threshold: f64) -> Label {
    if p >= threshold {
        Label::Political
    } else {
        Label::NonPolitical
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::UNK;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn emb(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-1.0, 1.0);
        let mut m = EmbeddingMatrix::zeros(rows, dim);
        for r in 1..rows {
            m.row_mut(r).iter_mut().for_each(|v| *v = u.sample(&mut rng));
        }
        m
    }

    fn zeroed(mut m: Model) -> Model {
        m.params.fill(0.0);
        m
    }

    #[test]
    fn predict_threshold() {
        assert_eq!(predict(0.9, 0.5), Label::Political);
        assert_eq!(predict(0.5, 0.5), Label::Political);
        assert_eq!(predict(0.1, 0.5), Label::NonPolitical);
    }

    #[test]
    fn cnn_shapes() {
        let m = Model::init(Architecture::default_for(ModelKind::Cnn), 300, 1).unwrap();
        assert_eq!(m.params.tensor("conv3.weight").shape, vec![3, 300, 100]);
        assert_eq!(m.params.tensor("dense.weight").shape, vec![300]);
        let e = emb(20, 300, 2);
        let seq: Vec<usize> = (2..12).collect();
        let p = m.forward(&seq, &e, None).unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(cnn::feature_map_lengths(&[3, 4, 5], seq.len()), vec![8, 7, 6]);
    }

    #[test]
    fn zero_weights_give_half() {
        let e = emb(10, 4, 3);
        let seq = vec![2, 3, 4, 5, 0, 0];
        for kind in [ModelKind::Cnn, ModelKind::Lstm, ModelKind::FastText] {
            let m = zeroed(Model::init(Architecture::default_for(kind), 4, 0).unwrap());
            assert_eq!(m.forward(&seq, &e, None).unwrap(), 0.5, "{kind}");
        }
    }

    #[test]
    fn cnn_width_one_selects_coordinate() {
        let arch = Architecture::Cnn(CnnConfig { widths: vec![1], filters: 1, dropout: 0.0 });
        let mut m = zeroed(Model::init(arch, 3, 0).unwrap());
        m.params.get_mut("conv1.weight")[1] = 1.0;
        m.params.get_mut("dense.weight")[0] = 2.0;
        m.params.get_mut("dense.bias")[0] = -0.5;
        let mut e = EmbeddingMatrix::zeros(5, 3);
        e.row_mut(2).copy_from_slice(&[9.0, 0.3, -1.0]);
        e.row_mut(3).copy_from_slice(&[0.0, 0.7, 4.0]);
        e.row_mut(4).copy_from_slice(&[-2.0, 0.1, 0.0]);
        // max_t e[t][1] = 0.7
        let want = 1.0 / (1.0 + (-(2.0 * 0.7 - 0.5f64)).exp());
        let got = m.forward(&[2, 3, 4], &e, None).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn cnn_rejects_short_sequence_and_bad_index() {
        let m = Model::init(Architecture::default_for(ModelKind::Cnn), 4, 0).unwrap();
        let e = emb(10, 4, 3);
        assert!(matches!(m.forward(&[2, 3, 4, 5], &e, None), Err(Error::Dimension(_))));
        assert!(matches!(m.forward(&[2, 3, 4, 5, 99], &e, None), Err(Error::Dimension(_))));
        let e5 = emb(10, 5, 3);
        assert!(matches!(m.forward(&[2, 3, 4, 5, 6], &e5, None), Err(Error::Dimension(_))));
    }

    #[test]
    fn lstm_single_step_matches_hand_computation() {
        let arch = Architecture::Lstm(LstmConfig { hidden: 1, forget_bias: 0.0 });
        let mut m = zeroed(Model::init(arch, 1, 0).unwrap());
        let set = |m: &mut Model, n: &str, v: f64| m.params.get_mut(n)[0] = v;
        set(&mut m, "w_i", 0.5);
        set(&mut m, "b_i", 0.1);
        set(&mut m, "w_f", -0.3);
        set(&mut m, "b_f", 1.0);
        set(&mut m, "w_o", 0.8);
        set(&mut m, "b_o", -0.2);
        set(&mut m, "w_g", 1.5);
        set(&mut m, "b_g", 0.05);
        set(&mut m, "dense.weight", 2.0);
        set(&mut m, "dense.bias", -0.1);
        let mut e = EmbeddingMatrix::zeros(3, 1);
        e.row_mut(2)[0] = 0.9;
        let x = 0.9f64;
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let i = s(0.5 * x + 0.1);
        let o = s(0.8 * x - 0.2);
        let g = (1.5 * x + 0.05f64).tanh();
        let c = i * g; // c_prev = 0
        let h = o * c.tanh();
        let want = s(2.0 * h - 0.1);
        let got = m.forward(&[2, 0, 0], &e, None).unwrap();
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }

    #[test]
    fn lstm_all_pad_is_bias_only() {
        let mut m = Model::init(Architecture::Lstm(LstmConfig { hidden: 4, forget_bias: 1.0 }), 3, 9).unwrap();
        m.params.get_mut("dense.bias")[0] = 0.7;
        let e = emb(5, 3, 1);
        let got = m.forward(&[PAD; 4], &e, None).unwrap();
        assert!((got - sigmoid(0.7)).abs() < 1e-15);
    }

    #[test]
    fn lstm_zero_input_weights_ignore_token_identity() {
        let mut m = Model::init(Architecture::Lstm(LstmConfig { hidden: 5, forget_bias: 1.0 }), 4, 4).unwrap();
        for g in lstm::GATES {
            m.params.get_mut(&format!("w_{g}")).iter_mut().for_each(|v| *v = 0.0);
        }
        let e = emb(10, 4, 2);
        let a = m.forward(&[2, 3, 4, 0], &e, None).unwrap();
        let b = m.forward(&[9, 8, UNK, 0], &e, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fasttext_hand_arithmetic() {
        let mut m = zeroed(Model::init(Architecture::default_for(ModelKind::FastText), 2, 0).unwrap());
        m.params.get_mut("linear.weight").copy_from_slice(&[0.5, -1.0]);
        m.params.get_mut("linear.bias")[0] = 0.25;
        let mut e = EmbeddingMatrix::zeros(4, 2);
        e.row_mut(2).copy_from_slice(&[1.0, 2.0]);
        e.row_mut(3).copy_from_slice(&[3.0, -2.0]);
        let one = m.forward(&[2, 0], &e, None).unwrap();
        assert!((one - sigmoid(0.5 - 2.0 + 0.25)).abs() < 1e-15);
        // mean = (2, 0)
        let two = m.forward(&[2, 3, 0], &e, None).unwrap();
        assert!((two - sigmoid(1.0 + 0.25)).abs() < 1e-15);
        let none = m.forward(&[0, 0], &e, None).unwrap();
        assert!((none - sigmoid(0.25)).abs() < 1e-15);
    }

    #[test]
    fn dropout_is_seeded() {
        let arch = Architecture::Cnn(CnnConfig { widths: vec![2, 3], filters: 8, dropout: 0.5 });
        let m = Model::init(arch, 4, 1).unwrap();
        let e = emb(10, 4, 3);
        let seq = vec![2, 3, 4, 5, 6];
        let run = |s| m.forward(&seq, &e, Some(&mut ChaCha8Rng::seed_from_u64(s))).unwrap();
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
        assert_eq!(m.forward(&seq, &e, None).unwrap(), m.forward(&seq, &e, None).unwrap());
    }

    #[test]
    fn init_validates() {
        assert!(Model::init(Architecture::Cnn(CnnConfig { widths: vec![4, 3], ..Default::default() }), 4, 0).is_err());
        assert!(Model::init(Architecture::Cnn(CnnConfig { dropout: 1.0, ..Default::default() }), 4, 0).is_err());
        assert!(Model::init(Architecture::Lstm(LstmConfig { hidden: 0, ..Default::default() }), 4, 0).is_err());
        let m = Model::init(Architecture::default_for(ModelKind::Lstm), 4, 0).unwrap();
        assert!(m.params.get("b_f").iter().all(|&v| v == 1.0));
        m.validate().unwrap();
    }

    proptest! {
        #[test]
        fn outputs_strictly_inside_unit_interval(seed in 0u64..1000, len in 5usize..12) {
            let e = emb(30, 6, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seq: Vec<usize> = (0..len).map(|_| rand::Rng::gen_range(&mut rng, 0..30)).collect();
            for kind in [ModelKind::Cnn, ModelKind::Lstm, ModelKind::FastText] {
                let arch = match kind {
                    ModelKind::Cnn => Architecture::Cnn(CnnConfig { widths: vec![2, 3], filters: 4, dropout: 0.0 }),
                    ModelKind::Lstm => Architecture::Lstm(LstmConfig { hidden: 4, forget_bias: 1.0 }),
                    ModelKind::FastText => Architecture::FastText(FastTextConfig { bigram_buckets: Some(7) }),
                };
                let m = Model::init(arch, 6, seed).unwrap();
                let p = m.forward(&seq, &e, None).unwrap();
                prop_assert!(p > 0.0 && p < 1.0);
            }
        }

        #[test]
        fn order_invariance(seed in 0u64..1000) {
            let e = emb(30, 5, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
            let seq: Vec<usize> = (0..8).map(|_| rand::Rng::gen_range(&mut rng, 1..30)).collect();
            let mut shuffled = seq.clone();
            shuffled.shuffle(&mut rng);
            let cnn = Model::init(Architecture::Cnn(CnnConfig { widths: vec![1], filters: 6, dropout: 0.0 }), 5, seed).unwrap();
            let ft = Model::init(Architecture::default_for(ModelKind::FastText), 5, seed).unwrap();
            for m in [cnn, ft] {
                let a = m.forward(&seq, &e, None).unwrap();
                let b = m.forward(&shuffled, &e, None).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
