//! Biterm topic model fitted by collapsed Gibbs sampling.
//!
//! A biterm is an unordered pair of word occurrences from one document's
//! context window. Every biterm carries one topic; the sampler resamples
//! each in turn from
//!
//! ```text
//! P(z | b, rest) ∝ (n_z + α) · (n_{w1|z} + β) · (n_{w2|z} + β + [w1 = w2])
//!                  / ((2 n_z + M β) · (2 n_z + M β + 1))
//! ```
//!
//! with the current biterm's counts removed. The `[w1 = w2]` term accounts
//! for the first word already having joined the topic when the second is
//! drawn; without it the chain would not target the collapsed posterior for
//! repeated-word biterms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::csv_field;

pub const FORMAT: &str = "poltweet-btm";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BtmConfig {
    pub k: usize,
    /// Topic prior; `None` means 50 / K.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Pair words closer than this many positions; `None` pairs every two
    /// words in a document.
    pub window: Option<usize>,
}

impl Default for BtmConfig {
    fn default() -> Self {
        BtmConfig { k: 10, alpha: None, beta: 0.005, iterations: 1000, seed: 0, window: None }
    }
}

impl BtmConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.k < 2 {
            return bad("k must be at least 2");
        }
        let a = self.alpha();
        if !(a > 0.0 && a.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Biterm {
    /// Word indices with `w1 <= w2`.
    pub w1: usize,
    pub w2: usize,
    pub doc: usize,
}

impl Biterm {
    pub fn new(a: usize, b: usize, doc: usize) -> Self {
        Biterm { w1: a.min(b), w2: a.max(b), doc }
    }
}

/// Biterms of one document.
pub fn document_biterms(doc: &[usize], doc_index: usize, window: Option<usize>, out: &mut Vec<Biterm>) {
    for i in 0..doc.len() {
        for j in i + 1..doc.len() {
            if window.is_some_and(|w| j - i >= w) {
                break;
            }
            out.push(Biterm::new(doc[i], doc[j], doc_index));
        }
    }
}

/// All biterms of a corpus, in document order.
pub fn extract_biterms(docs: &[Vec<usize>], window: Option<usize>) -> Vec<Biterm> {
    let mut out = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        document_biterms(doc, d, window, &mut out);
    }
    out
}

/// Token documents encoded against a lexicographically sorted vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct BtmCorpus {
    pub vocabulary: Vec<String>,
    pub docs: Vec<Vec<usize>>,
}

impl BtmCorpus {
    pub fn from_tokens<S: AsRef<str>>(docs: &[Vec<S>]) -> Self {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for d in docs {
            for t in d {
                index.insert(t.as_ref(), 0);
            }
        }
        for (i, v) in index.values_mut().enumerate() {
            *v = i;
        }
        let encoded = docs.iter().map(|d| d.iter().map(|t| index[t.as_ref()]).collect()).collect();
        BtmCorpus { vocabulary: index.keys().map(|s| s.to_string()).collect(), docs: encoded }
    }
}

/// Collapsed Gibbs state.
#[derive(Debug, Clone)]
pub struct Sampler {
    biterms: Vec<Biterm>,
    z: Vec<usize>,
    n_z: Vec<usize>,
    /// `n_wz[w * k + z]`
    n_wz: Vec<usize>,
    k: usize,
    m: usize,
    alpha: f64,
    beta: f64,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
}

impl Sampler {
    /// Seeded uniform initial assignment.
    pub fn new(biterms: Vec<Biterm>, vocabulary_size: usize, cfg: &BtmConfig) -> Result<Self> {
        cfg.validate()?;
        if biterms.is_empty() {
            return Err(Error::invalid("no biterms to fit"));
        }
        if let Some(b) = biterms.iter().find(|b| b.w2 >= vocabulary_size) {
            return Err(Error::invalid(format!("word index {} outside vocabulary of {vocabulary_size}", b.w2)));
        }
        let k = cfg.k;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut s = Sampler {
            z: Vec::with_capacity(biterms.len()),
            n_z: vec![0; k],
            n_wz: vec![0; vocabulary_size * k],
            k,
            m: vocabulary_size,
            alpha: cfg.alpha(),
            beta: cfg.beta,
            weights: vec![0.0; k],
            rng: ChaCha8Rng::seed_from_u64(0),
            biterms,
        };
        for i in 0..s.biterms.len() {
            let z = rng.gen_range(0..k);
            s.z.push(z);
            s.add(i, z);
        }
        s.rng = rng;
        Ok(s)
    }

    fn add(&mut self, i: usize, z: usize) {
        let b = self.biterms[i];
        self.n_z[z] += 1;
        self.n_wz[b.w1 * self.k + z] += 1;
        self.n_wz[b.w2 * self.k + z] += 1;
    }

    fn remove(&mut self, i: usize, z: usize) {
        let b = self.biterms[i];
        self.n_z[z] -= 1;
        self.n_wz[b.w1 * self.k + z] -= 1;
        self.n_wz[b.w2 * self.k + z] -= 1;
    }

    /// One pass over every biterm in order.
    pub fn sweep(&mut self) {
        let mb = self.m as f64 * self.beta;
        for i in 0..self.biterms.len() {
            let old = self.z[i];
            self.remove(i, old);
            let b = self.biterms[i];
            let same = if b.w1 == b.w2 { 1.0 } else { 0.0 };
            let mut total = 0.0;
            for z in 0..self.k {
                let nz = self.n_z[z] as f64;
                let n1 = self.n_wz[b.w1 * self.k + z] as f64;
                let n2 = self.n_wz[b.w2 * self.k + z] as f64;
                let denom = (2.0 * nz + mb) * (2.0 * nz + mb + 1.0);
                let w = (nz + self.alpha) * (n1 + self.beta) * (n2 + self.beta + same) / denom;
                total += w;
                self.weights[z] = total;
            }
            let u = self.rng.gen::<f64>() * total;
            let new = self.weights.iter().position(|&c| u < c).unwrap_or(self.k - 1);
            self.z[i] = new;
            self.add(i, new);
        }
    }

    /// Σ n_z = |B| and Σ_w n_{w|z} = 2 n_z for every topic, recomputed
    /// from the assignments.
    pub fn check_invariants(&self) -> Result<()> {
        let mut nz = vec![0usize; self.k];
        let mut nwz = vec![0usize; self.m * self.k];
        for (b, &z) in self.biterms.iter().zip(&self.z) {
            nz[z] += 1;
            nwz[b.w1 * self.k + z] += 1;
            nwz[b.w2 * self.k + z] += 1;
        }
        if nz != self.n_z || nwz != self.n_wz {
            return Err(Error::invalid("btm counters disagree with assignments"));
        }
        if self.n_z.iter().sum::<usize>() != self.biterms.len() {
            return Err(Error::invalid("topic counts do not sum to the number of biterms"));
        }
        for z in 0..self.k {
            let words: usize = (0..self.m).map(|w| self.n_wz[w * self.k + z]).sum();
            if words != 2 * self.n_z[z] {
                return Err(Error::invalid(format!("topic {z}: word counts do not equal twice its biterms")));
            }
        }
        Ok(())
    }

    pub fn assignments(&self) -> &[usize] {
        &self.z
    }

    pub fn topic_counts(&self) -> &[usize] {
        &self.n_z
    }

    pub fn word_topic_count(&self, w: usize, z: usize) -> usize {
        self.n_wz[w * self.k + z]
    }

    pub fn biterms(&self) -> &[Biterm] {
        &self.biterms
    }

    /// φ and θ from the current counts.
    pub fn estimate(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mb = self.m as f64 * self.beta;
        let phi = (0..self.k)
            .map(|z| {
                let denom = 2.0 * self.n_z[z] as f64 + mb;
                (0..self.m).map(|w| (self.n_wz[w * self.k + z] as f64 + self.beta) / denom).collect()
            })
            .collect();
        let nb = self.biterms.len() as f64;
        let ka = self.k as f64 * self.alpha;
        let theta = self.n_z.iter().map(|&n| (n as f64 + self.alpha) / (nb + ka)).collect();
        (phi, theta)
    }
}

/// Per-topic document shares of one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicShares {
    pub documents: usize,
    /// Documents whose most probable topic is `z`.
    pub counts: Vec<usize>,
    /// Exact percentages.
    pub percent: Vec<f64>,
}

impl TopicShares {
    /// Integer percentages for display (half away from zero).
    pub fn rounded(&self) -> Vec<u64> {
        self.percent.iter().map(|p| p.round() as u64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BtmModel {
    pub format: String,
    pub version: u32,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub window: Option<usize>,
    pub biterms: usize,
    pub vocabulary: Vec<String>,
    /// K × M topic-word distributions.
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    /// Shares of the fitting corpus, when computed.
    pub shares: Option<TopicShares>,
}

/// Fit a model on encoded documents. Count conservation is asserted after
/// every sweep in debug builds and once at the end in all builds.
pub fn gibbs_fit(corpus: &BtmCorpus, cfg: &BtmConfig) -> Result<(BtmModel, Sampler)> {
    let biterms = extract_biterms(&corpus.docs, cfg.window);
    let mut s = Sampler::new(biterms, corpus.vocabulary.len(), cfg)?;
    for it in 0..cfg.iterations {
        s.sweep();
        #[cfg(debug_assertions)]
        s.check_invariants()?;
        if (it + 1) % 100 == 0 {
            log::debug!("btm sweep {}/{}", it + 1, cfg.iterations);
        }
    }
    s.check_invariants()?;
    let (phi, theta) = s.estimate();
    let mut model = BtmModel {
        format: FORMAT.into(),
        version: VERSION,
        k: cfg.k,
        alpha: cfg.alpha(),
        beta: cfg.beta,
        iterations: cfg.iterations,
        seed: cfg.seed,
        window: cfg.window,
        biterms: s.biterms.len(),
        vocabulary: corpus.vocabulary.clone(),
        phi,
        theta,
        shares: None,
    };
    model.shares = Some(model.corpus_topic_shares(&corpus.docs));
    Ok((model, s))
}

impl BtmModel {
    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let m: BtmModel = serde_json::from_reader(r)?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        Self::read(bytes)
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::invalid(format!("not a btm model v{VERSION}")));
        }
        let m = self.vocabulary.len();
        if self.k < 2 || self.phi.len() != self.k || self.theta.len() != self.k || m == 0 {
            return Err(Error::Dimension("btm model shape is inconsistent".into()));
        }
        let is_dist =
            |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-6;
        if self.phi.iter().any(|row| row.len() != m || !is_dist(row)) || !is_dist(&self.theta) {
            return Err(Error::invalid("phi rows and theta must be probability distributions"));
        }
        if let Some(s) = &self.shares {
            if s.counts.len() != self.k || s.percent.len() != self.k || s.counts.iter().sum::<usize>() != s.documents {
                return Err(Error::invalid("topic shares are inconsistent"));
            }
        }
        Ok(())
    }

    /// Encode tokens against the model vocabulary, dropping unknown words.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.vocabulary.binary_search_by(|v| v.as_str().cmp(t.as_ref())).ok()).collect()
    }

    /// Top `n` words of topic `z` by φ, ties broken lexicographically.
    pub fn top_words(&self, z: usize, n: usize) -> Result<Vec<(String, f64)>> {
        let row = self.phi.get(z).ok_or_else(|| Error::invalid(format!("topic {z} out of range 0..{}", self.k)))?;
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then_with(|| self.vocabulary[a].cmp(&self.vocabulary[b])));
        Ok(idx.into_iter().take(n).map(|w| (self.vocabulary[w].clone(), row[w])).collect())
    }

    /// P(z | b) ∝ θ_z φ_{w1|z} φ_{w2|z}.
    pub fn biterm_posterior(&self, w1: usize, w2: usize) -> Vec<f64> {
        let mut p: Vec<f64> = (0..self.k).map(|z| self.theta[z] * self.phi[z][w1] * self.phi[z][w2]).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }

    /// P(z | d) as the uniform mixture of its biterm posteriors; θ when the
    /// document has no biterms.
    pub fn infer_document(&self, doc: &[usize]) -> Vec<f64> {
        let mut bs = Vec::new();
        document_biterms(doc, 0, self.window, &mut bs);
        if bs.is_empty() {
            return self.theta.clone();
        }
        let mut out = vec![0.0; self.k];
        for b in &bs {
            for (o, p) in out.iter_mut().zip(self.biterm_posterior(b.w1, b.w2)) {
                *o += p;
            }
        }
        let n = bs.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }

    /// Attribute each document to its most probable topic (lowest index on
    /// ties).
    pub fn corpus_topic_shares(&self, docs: &[Vec<usize>]) -> TopicShares {
        let mut counts = vec![0usize; self.k];
        for d in docs {
            let p = self.infer_document(d);
            let mut best = 0;
            for z in 1..self.k {
                if p[z] > p[best] {
                    best = z;
                }
            }
            counts[best] += 1;
        }
        let n = docs.len();
        let percent = counts.iter().map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 }).collect();
        TopicShares { documents: n, counts, percent }
    }
}

/// One labeled model in a topic report.
pub struct ReportEntry<'a> {
    pub corpus: String,
    pub model: &'a BtmModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub corpus: String,
    pub topic: usize,
    pub words: Vec<String>,
    pub documents: Option<usize>,
    /// Share of this corpus's documents.
    pub corpus_percent: Option<f64>,
    /// Share of all documents over every corpus in the report.
    pub overall_percent: Option<f64>,
}

/// Rows for a Table-shaped topic report: top words per topic, plus shares
/// both within each corpus and over the union of all corpora.
pub fn report_rows(entries: &[ReportEntry<'_>], top: usize) -> Result<Vec<ReportRow>> {
    let all_docs: usize = entries.iter().filter_map(|e| e.model.shares.as_ref()).map(|s| s.documents).sum();
    let mut rows = Vec::new();
    for e in entries {
        for z in 0..e.model.k {
            let words = e.model.top_words(z, top)?.into_iter().map(|(w, _)| w).collect();
            let share = e.model.shares.as_ref();
            rows.push(ReportRow {
                corpus: e.corpus.clone(),
                topic: z + 1,
                words,
                documents: share.map(|s| s.counts[z]),
                corpus_percent: share.map(|s| s.percent[z]),
                overall_percent: share.filter(|_| all_docs > 0).map(|s| 100.0 * s.counts[z] as f64 / all_docs as f64),
            });
        }
    }
    Ok(rows)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |p| format!("{}", p.round() as u64))
}

pub fn report_markdown(rows: &[ReportRow], shares: bool) -> String {
    let mut s = String::new();
    let mut current: Option<&str> = None;
    for r in rows {
        if current != Some(r.corpus.as_str()) {
            current = Some(&r.corpus);
            let _ = writeln!(s, "\n## {}\n", r.corpus);
            if shares {
                let _ = writeln!(s, "| topic | top words | % tweets (corpus) | % tweets (all) |\n|---|---|---|---|");
            } else {
                let _ = writeln!(s, "| topic | top words |\n|---|---|");
            }
        }
        if shares {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} |",
                r.topic,
                r.words.join(" "),
                pct(r.corpus_percent),
                pct(r.overall_percent)
            );
        } else {
            let _ = writeln!(s, "| {} | {} |", r.topic, r.words.join(" "));
        }
    }
    s.trim_start().to_string()
}

/// `corpus,topic,words,documents,corpus_percent,overall_percent`, with exact
/// percentages.
pub fn write_report_csv<W: Write>(mut out: W, rows: &[ReportRow]) -> Result<()> {
    writeln!(out, "corpus,topic,words,documents,corpus_percent,overall_percent")?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |p| p.to_string());
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&r.corpus),
            r.topic,
            csv_field(&r.words.join(" ")),
            r.documents.map_or_else(String::new, |d| d.to_string()),
            opt(r.corpus_percent),
            opt(r.overall_percent)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::BTreeSet;

    fn pairs(bs: &[Biterm]) -> BTreeSet<(usize, usize)> {
        bs.iter().map(|b| (b.w1, b.w2)).collect()
    }

    #[test]
    fn biterm_windows() {
        let all = extract_biterms(&[vec![0, 1, 2]], None);
        assert_eq!(pairs(&all), BTreeSet::from([(0, 1), (0, 2), (1, 2)]));
        assert!(extract_biterms(&[vec![0]], None).is_empty());
        let w2 = extract_biterms(&[vec![0, 1, 2, 3]], Some(2));
        assert_eq!(pairs(&w2), BTreeSet::from([(0, 1), (1, 2), (2, 3)]));
        assert_eq!(extract_biterms(&[vec![3, 1]], None)[0], Biterm { w1: 1, w2: 3, doc: 0 });
    }

    fn two_groups(seed: u64) -> BtmCorpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs: Vec<Vec<&str>> = (0..60)
            .map(|i| {
                let words: &[&str] = if i % 2 == 0 { &["a", "b"] } else { &["c", "d"] };
                (0..4).map(|_| words[rng.gen_range(0..2)]).collect()
            })
            .collect();
        BtmCorpus::from_tokens(&docs)
    }

    #[test]
    fn separates_disjoint_groups() {
        let corpus = two_groups(1);
        let cfg = BtmConfig { k: 2, iterations: 100, seed: 3, ..Default::default() };
        let (model, s) = gibbs_fit(&corpus, &cfg).unwrap();
        s.check_invariants().unwrap();
        let tops: Vec<BTreeSet<String>> =
            (0..2).map(|z| model.top_words(z, 2).unwrap().into_iter().map(|(w, _)| w).collect()).collect();
        let g1: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let g2: BTreeSet<String> = ["c", "d"].iter().map(|s| s.to_string()).collect();
        assert!((tops[0] == g1 && tops[1] == g2) || (tops[0] == g2 && tops[1] == g1), "{tops:?}");
        for row in &model.phi {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(model.theta.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn fit_is_deterministic() {
        let corpus = two_groups(2);
        let cfg = BtmConfig { k: 3, iterations: 20, seed: 7, ..Default::default() };
        let (a, sa) = gibbs_fit(&corpus, &cfg).unwrap();
        let (b, sb) = gibbs_fit(&corpus, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa.assignments(), sb.assignments());
    }

    #[test]
    fn zero_biterms_is_an_error() {
        let corpus = BtmCorpus::from_tokens(&[vec!["solo"]]);
        assert!(gibbs_fit(&corpus, &BtmConfig::default()).is_err());
    }

    #[test]
    fn default_alpha_depends_on_k() {
        assert_eq!(BtmConfig::default().alpha(), 5.0);
        assert_eq!(BtmConfig { k: 4, ..Default::default() }.alpha(), 12.5);
        assert!(BtmConfig { k: 1, ..Default::default() }.validate().is_err());
    }

    fn hand_model() -> BtmModel {
        BtmModel {
            format: FORMAT.into(),
            version: VERSION,
            k: 2,
            alpha: 1.0,
            beta: 0.1,
            iterations: 1,
            seed: 0,
            window: None,
            biterms: 0,
            vocabulary: vec!["x".into(), "y".into(), "z".into()],
            phi: vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.2, 0.7]],
            theta: vec![0.6, 0.4],
            shares: None,
        }
    }

    #[test]
    fn inference_by_hand() {
        let m = hand_model();
        // single biterm (x, y): 0.6*0.5*0.3 = 0.09 vs 0.4*0.1*0.2 = 0.008
        let p = m.infer_document(&[0, 1]);
        assert_abs_diff_eq!(p[0], 0.09 / 0.098, epsilon = 1e-12);
        assert_eq!(p, m.biterm_posterior(0, 1));
        let mut w = m.clone();
        w.window = Some(2);
        // window 2 over [x, y, z] keeps (x, y) and (y, z); (y,z) -> 0.6*0.3*0.2 = 0.036 vs 0.4*0.2*0.7 = 0.056
        let p = w.infer_document(&[0, 1, 2]);
        let expected0 = (0.09 / 0.098 + 0.036 / 0.092) / 2.0;
        assert_abs_diff_eq!(p[0], expected0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0] + p[1], 1.0, epsilon = 1e-12);
        assert_eq!(m.infer_document(&[2]), m.theta);
    }

    #[test]
    fn top_words_ties_and_bounds() {
        let mut m = hand_model();
        m.phi[0] = vec![1.0 / 3.0; 3];
        let words: Vec<String> = m.top_words(0, 10).unwrap().into_iter().map(|(w, _)| w).collect();
        assert_eq!(words, ["x", "y", "z"]);
        assert_eq!(m.top_words(1, 1).unwrap()[0].0, "z");
        assert!(m.top_words(2, 1).is_err());
    }

    #[test]
    fn identical_documents_share_one_topic() {
        let m = hand_model();
        let s = m.corpus_topic_shares(&vec![vec![0, 1]; 5]);
        assert_eq!(s.counts, vec![5, 0]);
        assert_eq!(s.rounded(), vec![100, 0]);
    }

    #[test]
    fn model_round_trip_and_validation() {
        let corpus = two_groups(3);
        let (model, _) = gibbs_fit(&corpus, &BtmConfig { k: 2, iterations: 5, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        assert_eq!(BtmModel::from_slice(&buf).unwrap(), model);
        let mut bad = model.clone();
        bad.phi[0][0] += 0.5;
        let mut buf = Vec::new();
        bad.write(&mut buf).unwrap();
        assert!(BtmModel::from_slice(&buf).is_err());
        assert!(BtmModel::from_slice(b"[]").is_err());
    }

    #[test]
    fn report_layout() {
        let corpus = two_groups(4);
        let (model, _) = gibbs_fit(&corpus, &BtmConfig { k: 2, iterations: 30, ..Default::default() }).unwrap();
        let entries = [
            ReportEntry { corpus: "political".into(), model: &model },
            ReportEntry { corpus: "non-political".into(), model: &model },
        ];
        let rows = report_rows(&entries, 2).unwrap();
        assert_eq!(rows.len(), 4);
        let corpus_total: f64 = rows[..2].iter().map(|r| r.corpus_percent.unwrap()).sum();
        assert_abs_diff_eq!(corpus_total, 100.0, epsilon = 1e-9);
        let overall: f64 = rows.iter().map(|r| r.overall_percent.unwrap()).sum();
        assert_abs_diff_eq!(overall, 100.0, epsilon = 1e-9);
        let md = report_markdown(&rows, true);
        assert!(md.starts_with("## political"));
        assert_eq!(md.matches("| 1 |").count(), 2);
        let mut csv = Vec::new();
        write_report_csv(&mut csv, &rows).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }

    proptest! {
        #[test]
        fn inferred_distribution_normalized(doc in prop::collection::vec(0usize..3, 0..8)) {
            let p = hand_model().infer_document(&doc);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn rounded_shares_near_hundred(docs in prop::collection::vec(prop::collection::vec(0usize..3, 0..5), 1..30)) {
            let s = hand_model().corpus_topic_shares(&docs);
            let total: u64 = s.rounded().iter().sum();
            // at most K/2 = 1 point of rounding slack
            prop_assert!((total as i64 - 100).unsigned_abs() <= 1);
        }

        #[test]
        fn counts_conserved(docs in prop::collection::vec(prop::collection::vec(0usize..5, 0..6), 1..10), seed in any::<u64>()) {
            let bs = extract_biterms(&docs, None);
            prop_assume!(!bs.is_empty());
            let mut s = Sampler::new(bs, 5, &BtmConfig { k: 3, seed, ..Default::default() }).unwrap();
            for _ in 0..3 {
                s.sweep();
                prop_assert!(s.check_invariants().is_ok());
            }
        }
    }
}
