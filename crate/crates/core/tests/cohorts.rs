//! Per-cohort political shares from a good classifier track the generator's
//! ground truth.

use std::collections::{BTreeMap, HashMap};

use poltweet::corpus::{normalize, Cohort, Label, Stopwords};
use poltweet::embeddings::{train_embeddings, EmbeddingMode, EmbeddingTrainConfig};
use poltweet::models::{Checkpoint, CnnConfig, FastTextConfig, LstmConfig, ModelKind};
use poltweet::pipeline::{classify_corpus, prepare, run_cell, Cell, EmbeddingSource, ExperimentSettings, ModelSection};
use poltweet::sampling::{BiasConfig, SampleMode};
use poltweet::synth::{background_text, generate, BackgroundConfig, SynthConfig};
use poltweet::training::TrainConfig;

#[test]
fn cohort_shares_within_two_points_of_truth() {
    let seed = 3;
    let sc = SynthConfig { seed, ..Default::default() };
    let mut corpus = generate(&sc).unwrap();
    let stop = Stopwords::bundled();
    for t in &mut corpus.tweets {
        t.tokens = normalize(&t.raw_text, &stop);
    }
    let background = background_text(&sc, &BackgroundConfig::default()).unwrap();
    let ec = EmbeddingTrainConfig { mode: EmbeddingMode::Cbow, dim: 32, seed, ..Default::default() };
    let emb = train_embeddings(&background, &ec).unwrap().embeddings;

    let settings = ExperimentSettings {
        seed,
        holdout_fraction: 0.2,
        bias: BiasConfig::default(),
        folds: 2,
        resubstitution: false,
        min_group_size: 5,
        max_len: 20,
        models: ModelSection {
            kind: ModelKind::Cnn,
            max_len: 20,
            cnn: CnnConfig { filters: 32, ..Default::default() },
            lstm: LstmConfig::default(),
            fasttext: FastTextConfig::default(),
        },
        training: TrainConfig {
            epochs: 10,
            learning_rate: 0.01,
            seed,
            fine_tune_embeddings: true,
            ..Default::default()
        },
    };
    let prep = prepare(&corpus.tweets, 0.2, seed).unwrap();
    let cell = Cell {
        labeled_size: 2000,
        mode: SampleMode::Unbiased,
        model: ModelKind::Cnn,
        embedding: EmbeddingSource::Trained,
    };
    let run = run_cell(&prep, &emb, &cell, &settings).unwrap();
    assert!(run.metrics.test_macro_f1 >= 0.95, "test macro F1 {:.4}", run.metrics.test_macro_f1);

    let ck = Checkpoint::new(&run.model, settings.max_len, &emb.vocab, Some(&run.embeddings));
    let deputies: BTreeMap<_, _> = corpus.deputies.iter().map(|d| (d.id.clone(), d.clone())).collect();
    let classified = classify_corpus(&ck, &emb, &corpus.tweets, &deputies).unwrap();
    assert_eq!(classified.predictions.len(), corpus.tweets.len());

    // ground truth straight from the generator's labels
    let mut truth: HashMap<Cohort, (usize, usize)> = HashMap::new();
    for t in &corpus.tweets {
        let e = truth.entry(deputies[&t.deputy_id].cohort).or_default();
        e.0 += 1;
        e.1 += usize::from(t.label == Some(Label::Political));
    }
    let mut checked = 0;
    for row in &classified.cohorts {
        let Some(cohort) = row.cohort else { continue };
        let (n, pol) = truth[&cohort];
        assert_eq!(row.tweets, n, "{cohort:?}");
        let expected = 100.0 * pol as f64 / n as f64;
        assert!(
            (row.political_percent - expected).abs() <= 2.0,
            "{cohort:?}: predicted {:.2}% vs truth {expected:.2}%",
            row.political_percent
        );
        checked += 1;
    }
    assert_eq!(checked, Cohort::ALL.len());
}
