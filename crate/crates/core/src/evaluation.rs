//! Macro F1, stratified k-fold cross-validation, external-test evaluation
//! and the per-deputy / per-month breakdown.
//!
//! A class whose F1 has a zero denominator (no true and no predicted
//! members) contributes 0 to the macro average.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::models::{predict, Architecture, Model};
use crate::training::{train, Example, TrainConfig};

pub const DEFAULT_MIN_GROUP_SIZE: usize = 5;

/// Binary confusion counts with Political as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn f1(hit: usize, miss_a: usize, miss_b: usize) -> f64 {
    let denom = 2 * hit + miss_a + miss_b;
    if denom == 0 {
        0.0
    } else {
        2.0 * hit as f64 / denom as f64
    }
}

impl ConfusionMatrix {
    pub fn from_pairs(truths: &[Label], preds: &[Label]) -> Result<Self> {
        if truths.len() != preds.len() {
            return Err(Error::invalid(format!("{} truths vs {} predictions", truths.len(), preds.len())));
        }
        let mut m = ConfusionMatrix::default();
        for (t, p) in truths.iter().zip(preds) {
            match (t, p) {
                (Label::Political, Label::Political) => m.tp += 1,
                (Label::NonPolitical, Label::Political) => m.fp += 1,
                (Label::Political, Label::NonPolitical) => m.fn_ += 1,
                (Label::NonPolitical, Label::NonPolitical) => m.tn += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn f1_political(&self) -> f64 {
        f1(self.tp, self.fp, self.fn_)
    }

    pub fn f1_non_political(&self) -> f64 {
        f1(self.tn, self.fn_, self.fp)
    }

    pub fn macro_f1(&self) -> f64 {
        (self.f1_political() + self.f1_non_political()) / 2.0
    }
}

/// Unweighted mean of the two per-class F1 scores.
pub fn macro_f1(truths: &[Label], preds: &[Label]) -> Result<f64> {
    if truths.is_empty() {
        return Err(Error::invalid("macro F1 of an empty list"));
    }
    Ok(ConfusionMatrix::from_pairs(truths, preds)?.macro_f1())
}

/// Seeded stratified fold index for each example. Each class is shuffled
/// and dealt round-robin; the second class continues where the first
/// stopped so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config("k must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for class in [Label::Political, Label::NonPolitical] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::invalid(format!(
                "{} {} examples cannot fill {k} stratified folds",
                idx.len(),
                class.as_str()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

/// Seeded stratified split: `fraction` of each class goes to the test side
/// (rounded half up). Returns `(train, test)` indices, each ascending.
pub fn stratified_holdout(labels: &[Label], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config("holdout fraction must lie in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [Label::Political, Label::NonPolitical] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn predict_all(model: &Model, data: &[Example], emb: &EmbeddingMatrix) -> Result<Vec<Label>> {
    data.iter().map(|e| Ok(predict(model.forward(&e.tokens, emb, None)?, 0.5))).collect()
}

pub fn score(model: &Model, data: &[Example], emb: &EmbeddingMatrix) -> Result<f64> {
    let truths: Vec<Label> = data.iter().map(|e| e.label).collect();
    macro_f1(&truths, &predict_all(model, data, emb)?)
}

/// What a model is trained from: architecture, training recipe and the
/// seed for weight initialization. The input dimension comes from the
/// embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub train: TrainConfig,
    pub init_seed: u64,
}

impl ModelSpec {
    pub fn fit(&self, data: &[Example], emb: &EmbeddingMatrix, seed_offset: u64) -> Result<(Model, EmbeddingMatrix)> {
        let model = Model::init(self.arch.clone(), emb.dim(), self.init_seed.wrapping_add(seed_offset))?;
        let cfg = TrainConfig { seed: self.train.seed.wrapping_add(seed_offset), ..self.train.clone() };
        let t = train(model, data, emb, &cfg)?;
        let tuned = t.embeddings.unwrap_or_else(|| emb.clone());
        Ok((t.model, tuned))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    /// Score of a model trained on the whole set and scored on that same set.
    pub resubstitution: Option<f64>,
}

/// Stratified k-fold cross-validation. Fold `i` trains with seeds offset by
/// `i + 1`; the resubstitution model uses offset 0.
pub fn kfold_cv(
    data: &[Example],
    k: usize,
    spec: &ModelSpec,
    emb: &EmbeddingMatrix,
    seed: u64,
    resubstitution: bool,
) -> Result<CvReport> {
    if data.len() < k {
        return Err(Error::invalid(format!("{} examples cannot fill {k} folds", data.len())));
    }
    let labels: Vec<Label> = data.iter().map(|e| e.label).collect();
    let folds = stratified_folds(&labels, k, seed)?;
    let mut fold_scores = Vec::with_capacity(k);
    for fold in 0..k {
        let (held, rest): (Vec<_>, Vec<_>) = (0..data.len()).partition(|&i| folds[i] == fold);
        let train_set: Vec<Example> = rest.iter().map(|&i| data[i].clone()).collect();
        let test_set: Vec<Example> = held.iter().map(|&i| data[i].clone()).collect();
        let (model, tuned) = spec.fit(&train_set, emb, fold as u64 + 1)?;
        let s = score(&model, &test_set, &tuned)?;
        log::info!("fold {}/{k}: macro F1 {s:.4}", fold + 1);
        fold_scores.push(s);
    }
    let mean = fold_scores.iter().sum::<f64>() / k as f64;
    let resubstitution = if resubstitution {
        let (model, tuned) = spec.fit(data, emb, 0)?;
        Some(score(&model, data, &tuned)?)
    } else {
        None
    };
    Ok(CvReport { k, fold_scores, mean, resubstitution })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub group: String,
    pub n: usize,
    /// `None` when the group has fewer than the minimum number of examples.
    pub macro_f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub groups: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    pub fn of(scores: &[f64]) -> Option<Summary> {
        if scores.is_empty() {
            return None;
        }
        let mut s = scores.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Summary {
            groups: s.len(),
            min: s[0],
            q1: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q3: quantile(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub min_group_size: usize,
    pub groups: Vec<GroupScore>,
    /// Over scored groups only.
    pub summary: Option<Summary>,
}

/// Macro F1 within each group (sorted by key) having at least
/// `min_group_size` examples.
pub fn per_group_f1(truths: &[Label], preds: &[Label], keys: &[String], min_group_size: usize) -> Result<GroupReport> {
    if truths.len() != preds.len() || truths.len() != keys.len() {
        return Err(Error::invalid("truths, predictions and group keys differ in length"));
    }
    let mut by: BTreeMap<&str, (Vec<Label>, Vec<Label>)> = BTreeMap::new();
    for ((t, p), k) in truths.iter().zip(preds).zip(keys) {
        let e = by.entry(k).or_default();
        e.0.push(*t);
        e.1.push(*p);
    }
    let mut groups = Vec::with_capacity(by.len());
    for (group, (t, p)) in by {
        let score = if t.len() >= min_group_size.max(1) { Some(macro_f1(&t, &p)?) } else { None };
        groups.push(GroupScore { group: group.to_string(), n: t.len(), macro_f1: score });
    }
    let scored: Vec<f64> = groups.iter().filter_map(|g| g.macro_f1).collect();
    Ok(GroupReport { min_group_size, summary: Summary::of(&scored), groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    pub cross_validation: Option<CvReport>,
    pub per_deputy: GroupReport,
    pub per_month: GroupReport,
}

/// Ids present in both sets, sorted.
pub fn id_overlap<'a>(train_ids: impl IntoIterator<Item = &'a str>, test: &[Example]) -> Vec<String> {
    let train: HashSet<&str> = train_ids.into_iter().collect();
    let mut both: Vec<String> = test.iter().filter(|e| train.contains(e.id.as_str())).map(|e| e.id.clone()).collect();
    both.sort();
    both.dedup();
    both
}

/// Score `model` on an external test set disjoint from `train_ids`.
pub fn evaluate_test<'a>(
    model: &Model,
    emb: &EmbeddingMatrix,
    test: &[Example],
    train_ids: impl IntoIterator<Item = &'a str>,
    min_group_size: usize,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let overlap = id_overlap(train_ids, test);
    if !overlap.is_empty() {
        return Err(Error::Overlap(overlap));
    }
    let truths: Vec<Label> = test.iter().map(|e| e.label).collect();
    let preds = predict_all(model, test, emb)?;
    let confusion = ConfusionMatrix::from_pairs(&truths, &preds)?;
    let deputies: Vec<String> = test.iter().map(|e| e.deputy_id.clone()).collect();
    let months: Vec<String> = test.iter().map(|e| e.month.to_string()).collect();
    Ok(EvalReport {
        n: test.len(),
        macro_f1: confusion.macro_f1(),
        confusion,
        cross_validation: None,
        per_deputy: per_group_f1(&truths, &preds, &deputies, min_group_size)?,
        per_month: per_group_f1(&truths, &preds, &months, min_group_size)?,
    })
}

fn fmt_score(v: Option<f64>) -> String {
    v.map_or_else(|| "insufficient".to_string(), |s| format!("{s:.4}"))
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Evaluation\n");
        let _ = writeln!(s, "| metric | value |\n|---|---|");
        let _ = writeln!(s, "| test examples | {} |", self.n);
        let _ = writeln!(s, "| test macro F1 | {:.4} |", self.macro_f1);
        if let Some(cv) = &self.cross_validation {
            let _ = writeln!(s, "| {}-fold CV mean macro F1 | {:.4} |", cv.k, cv.mean);
            if let Some(r) = cv.resubstitution {
                let _ = writeln!(s, "| training-set (resubstitution) macro F1 | {r:.4} |");
            }
        }
        let c = &self.confusion;
        let _ = writeln!(s, "\n| | predicted political | predicted non-political |\n|---|---|---|");
        let _ = writeln!(s, "| political | {} | {} |", c.tp, c.fn_);
        let _ = writeln!(s, "| non-political | {} | {} |", c.fp, c.tn);
        for (title, g) in [("deputy", &self.per_deputy), ("month", &self.per_month)] {
            let _ = writeln!(s, "\n## Macro F1 per {title}\n");
            match &g.summary {
                Some(su) => {
                    let _ = writeln!(s, "| groups | min | q1 | median | q3 | max |\n|---|---|---|---|---|---|");
                    let _ = writeln!(
                        s,
                        "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
                        su.groups, su.min, su.q1, su.median, su.q3, su.max
                    );
                }
                None => {
                    let _ = writeln!(s, "No group reached {} examples.", g.min_group_size);
                }
            }
            let insufficient = g.groups.iter().filter(|x| x.macro_f1.is_none()).count();
            if insufficient > 0 {
                let _ = writeln!(s, "\n{insufficient} group(s) below {} examples: insufficient.", g.min_group_size);
            }
        }
        s
    }
}

/// `group,n,macro_f1` rows; unscored groups carry `insufficient`.
pub fn write_group_csv<W: Write>(mut out: W, report: &GroupReport) -> Result<()> {
    writeln!(out, "group,n,macro_f1")?;
    for g in &report.groups {
        let score = g.macro_f1.map_or_else(|| "insufficient".to_string(), |v| v.to_string());
        writeln!(out, "{},{},{}", csv_field(&g.group), g.n, score)?;
    }
    Ok(())
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl GroupReport {
    pub fn score_table(&self) -> String {
        let mut s = String::from("| group | n | macro F1 |\n|---|---|---|\n");
        for g in &self.groups {
            let _ = writeln!(s, "| {} | {} | {} |", g.group, g.n, fmt_score(g.macro_f1));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::YearMonth;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use Label::{NonPolitical as N, Political as P};

    #[test]
    fn macro_f1_examples() {
        assert_eq!(macro_f1(&[P, P, N, N], &[P, P, N, N]).unwrap(), 1.0);
        let m = ConfusionMatrix::from_pairs(&[P, P, N, N], &[P, P, P, N]).unwrap();
        assert_abs_diff_eq!(m.f1_political(), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(m.f1_non_political(), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.macro_f1(), 0.733333, epsilon = 1e-6);
        assert_eq!(macro_f1(&[P, N], &[N, P]).unwrap(), 0.0);
        assert!(macro_f1(&[P], &[P, N]).is_err());
        assert!(macro_f1(&[], &[]).is_err());
        // constant political on a balanced set
        assert_abs_diff_eq!(macro_f1(&[P, P, N, N], &[P, P, P, P]).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_division_convention() {
        // only one class present and predicted perfectly: the absent class scores 0
        assert_eq!(macro_f1(&[P, P], &[P, P]).unwrap(), 0.5);
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<Label> = (0..2000).map(|i| if i % 2 == 0 { P } else { N }).collect();
        let folds = stratified_folds(&labels, 10, 4).unwrap();
        for f in 0..10 {
            let pos = (0..2000).filter(|&i| folds[i] == f && labels[i] == P).count();
            let neg = (0..2000).filter(|&i| folds[i] == f && labels[i] == N).count();
            assert_eq!((pos, neg), (100, 100));
        }
        let small = stratified_folds(&[P, P, N, N], 2, 0).unwrap();
        for f in 0..2 {
            let members: Vec<Label> = (0..4).filter(|&i| small[i] == f).map(|i| [P, P, N, N][i]).collect();
            assert_eq!(members.len(), 2);
            assert!(members.contains(&P) && members.contains(&N));
        }
        assert_eq!(stratified_folds(&labels, 10, 4).unwrap(), folds);
        assert!(stratified_folds(&[P, N, N], 2, 0).is_err());
    }

    #[test]
    fn holdout_is_stratified_and_disjoint() {
        let labels: Vec<Label> = (0..50).map(|i| if i < 30 { P } else { N }).collect();
        let (tr, te) = stratified_holdout(&labels, 0.2, 1).unwrap();
        assert_eq!(te.iter().filter(|&&i| labels[i] == P).count(), 6);
        assert_eq!(te.iter().filter(|&&i| labels[i] == N).count(), 4);
        let all: HashSet<usize> = tr.iter().chain(&te).copied().collect();
        assert_eq!(all.len(), 50);
    }

    #[test]
    fn groups_match_hand_counts() {
        let truths = [P, P, N, N, P, N, N];
        let preds = [P, N, N, N, P, P, N];
        let keys: Vec<String> = ["a", "a", "a", "a", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
        let r = per_group_f1(&truths, &preds, &keys, 3).unwrap();
        // a: tp1 fn1 tn2 -> F1(P)=2/3, F1(N)=4/5
        assert_abs_diff_eq!(r.groups[0].macro_f1.unwrap(), (2.0 / 3.0 + 0.8) / 2.0, epsilon = 1e-12);
        // b: tp1 fp1 tn1 -> F1(P)=2/3, F1(N)=2/3
        assert_abs_diff_eq!(r.groups[1].macro_f1.unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        let insufficient = per_group_f1(&truths, &preds, &keys, 4).unwrap();
        assert_eq!(insufficient.groups[1].macro_f1, None);
        assert_eq!(insufficient.summary.unwrap().groups, 1);
    }

    #[test]
    fn single_group_all_correct() {
        let keys = vec!["d1".to_string(); 6];
        let t = [P, N, P, N, P, N];
        let r = per_group_f1(&t, &t, &keys, 5).unwrap();
        assert_eq!(r.summary.unwrap().median, 1.0);
    }

    #[test]
    fn overlap_is_rejected() {
        let e = Example {
            id: "t1".into(),
            deputy_id: "d".into(),
            month: YearMonth::new(2014, 1),
            tokens: vec![2],
            label: P,
        };
        let model = Model::init(Architecture::default_for(crate::models::ModelKind::FastText), 2, 0).unwrap();
        let emb = EmbeddingMatrix::zeros(3, 2);
        match evaluate_test(&model, &emb, &[e], ["t1"], 5) {
            Err(Error::Overlap(ids)) => assert_eq!(ids, vec!["t1".to_string()]),
            other => panic!("{other:?}"),
        }
        assert!(evaluate_test(&model, &emb, &[], ["x"], 5).is_err());
    }

    #[test]
    fn group_csv_format() {
        let r = GroupReport {
            min_group_size: 5,
            groups: vec![
                GroupScore { group: "2014-01".into(), n: 7, macro_f1: Some(0.5) },
                GroupScore { group: "a,b".into(), n: 1, macro_f1: None },
            ],
            summary: None,
        };
        let mut buf = Vec::new();
        write_group_csv(&mut buf, &r).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "group,n,macro_f1\n2014-01,7,0.5\n\"a,b\",1,insufficient\n");
    }

    fn label_vec() -> impl Strategy<Value = Vec<Label>> {
        prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { P } else { N }), 2..60)
    }

    proptest! {
        #[test]
        fn macro_f1_bounds(t in label_vec(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = t.clone();
            p.shuffle(&mut rng);
            let s = macro_f1(&t, &p).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            if t.contains(&P) && t.contains(&N) {
                prop_assert_eq!(s == 1.0, p == t);
            }
        }

        #[test]
        fn summary_reproduces_from_list(scores in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            let su = Summary::of(&scores).unwrap();
            let mut s = scores.clone();
            s.sort_by(f64::total_cmp);
            prop_assert_eq!(su.min, s[0]);
            prop_assert_eq!(su.max, *s.last().unwrap());
            prop_assert!(su.min <= su.q1 && su.q1 <= su.median && su.median <= su.q3 && su.q3 <= su.max);
        }

        #[test]
        fn folds_partition(n_pos in 3usize..40, n_neg in 3usize..40, k in 2usize..4, seed in any::<u64>()) {
            let labels: Vec<Label> = (0..n_pos).map(|_| P).chain((0..n_neg).map(|_| N)).collect();
            let folds = stratified_folds(&labels, k, seed).unwrap();
            for f in 0..k {
                let pos = (0..labels.len()).filter(|&i| folds[i] == f && labels[i] == P).count() as f64;
                let size = folds.iter().filter(|&&x| x == f).count() as f64;
                let expected = size * n_pos as f64 / labels.len() as f64;
                prop_assert!((pos - expected).abs() <= 1.0);
            }
        }
    }
}
