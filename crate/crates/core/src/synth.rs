//! Seeded synthetic corpus generator.
//!
//! Stands in for a real tweet collection, which cannot be redistributed.
//! Every tweet carries its ground-truth label. The structure is chosen so
//! the usual failure modes of small or skewed labeled pools show up:
//!
//! * two class vocabularies sharing a tunable fraction of their words,
//!   drawn with Zipf weights, so rare class words need more labeled data;
//! * per-month topical words for each class, so a pool skewed towards a
//!   few months learns topics that do not carry over to other months;
//! * per-deputy signature words and a per-deputy political propensity set
//!   by cohort, so a pool skewed towards a few deputies learns who is
//!   speaking rather than what is said;
//! * class-neutral filler, plus URLs, mentions, hashtags, stopwords and
//!   punctuation for the normalizer to remove.

use std::collections::BTreeSet;

use chrono::{Duration, TimeZone, Utc};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Cohort, Deputy, Label, Stopwords, Tweet, YearMonth};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub tweets: usize,
    pub deputies: usize,
    pub start: YearMonth,
    pub months: usize,
    /// Relative monthly volume; empty gives a profile peaking in the
    /// tenth month.
    pub volume_profile: Vec<f64>,
    /// Words per class vocabulary, shared words included.
    pub class_words: usize,
    /// Fraction of each class vocabulary shared with the other class.
    pub overlap: f64,
    /// Topical words per class per month.
    pub month_words: usize,
    pub deputy_words: usize,
    pub filler_words: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Per-token source probabilities; the remainder is filler.
    pub class_rate: f64,
    pub month_rate: f64,
    pub deputy_rate: f64,
    /// Zipf exponent of the class vocabularies.
    pub zipf: f64,
    /// Base political propensity per cohort (Reelected, Losers, Newcomers).
    pub political_share: [f64; 3],
    /// Half-width of the uniform per-deputy jitter around the cohort base.
    pub propensity_jitter: f64,
    /// Probability of each decoration (URL, mention, hashtag, stopword,
    /// punctuation) per tweet.
    pub decoration: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            tweets: 20_000,
            deputies: 60,
            start: YearMonth::new(2014, 1),
            months: 12,
            volume_profile: Vec::new(),
            class_words: 600,
            overlap: 0.3,
            month_words: 25,
            deputy_words: 6,
            filler_words: 300,
            min_tokens: 6,
            max_tokens: 14,
            class_rate: 0.25,
            month_rate: 0.25,
            deputy_rate: 0.15,
            zipf: 1.0,
            political_share: [0.5, 0.4, 0.3],
            propensity_jitter: 0.1,
            decoration: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.tweets == 0 || self.deputies == 0 || self.months == 0 {
            return bad("tweets, deputies and months must be positive");
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad("overlap must lie in [0, 1)");
        }
        if self.class_words < 2 || self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return bad("need at least 2 class words and 1 <= min_tokens <= max_tokens");
        }
        let rates = self.class_rate + self.month_rate + self.deputy_rate;
        if [self.class_rate, self.month_rate, self.deputy_rate].iter().any(|r| *r < 0.0) || rates > 1.0 {
            return bad("token source rates must be non-negative and sum to at most 1");
        }
        if rates < 1.0 && self.filler_words == 0 {
            return bad("filler words needed when source rates sum below 1");
        }
        if !self.volume_profile.is_empty()
            && (self.volume_profile.len() != self.months || self.volume_profile.iter().any(|v| !(*v >= 0.0)))
        {
            return bad("volume_profile needs one non-negative weight per month");
        }
        if self.political_share.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("political shares must lie in [0, 1]");
        }
        Ok(())
    }

    fn profile(&self) -> Vec<f64> {
        if !self.volume_profile.is_empty() {
            return self.volume_profile.clone();
        }
        (0..self.months)
            .map(|m| {
                let x = m as f64 - 9.0;
                1.0 + 1.5 * (-x * x / 4.0).exp()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub tweets: Vec<Tweet>,
    pub deputies: Vec<Deputy>,
}

const ONSETS: &[&str] = &["b", "c", "d", "f", "g", "j", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "br", "tr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ã", "é", "ó", "ê"];

/// Distinct pseudo-words that survive normalization unchanged.
fn word_pool(n: usize, rng: &mut ChaCha8Rng, stop: &Stopwords) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syl = rng.gen_range(2..=4);
        let mut w = String::new();
        for _ in 0..syl {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        if rng.gen_bool(0.3) {
            w.push(['s', 'r', 'l', 'm'][rng.gen_range(0..4)]);
        }
        if !stop.contains(&w) && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (1..=n).map(|r| 1.0 / (r as f64).powf(s)).collect()
}

struct ClassVocab {
    words: Vec<String>,
    dist: WeightedIndex<f64>,
}

struct Lexicon {
    class_vocab: Vec<ClassVocab>,
    /// `[class][month]`
    month_vocab: Vec<Vec<Vec<String>>>,
    deputy_vocab: Vec<Vec<String>>,
    filler: Vec<String>,
}

impl Lexicon {
    fn build(cfg: &SynthConfig, rng: &mut ChaCha8Rng, stop: &Stopwords) -> Lexicon {
        let shared_n = (cfg.class_words as f64 * cfg.overlap).round() as usize;
        let own_n = cfg.class_words - shared_n;
        let total_words = shared_n
            + 2 * own_n
            + 2 * cfg.months * cfg.month_words
            + cfg.deputies * cfg.deputy_words
            + cfg.filler_words;
        let mut pool = word_pool(total_words, rng, stop).into_iter();
        let mut take = |n: usize| -> Vec<String> { pool.by_ref().take(n).collect() };

        let shared = take(shared_n);
        let mut class_vocab = Vec::new();
        for _ in 0..2 {
            let mut words = take(own_n);
            words.extend(shared.iter().cloned());
            words.shuffle(rng);
            let dist = WeightedIndex::new(zipf_weights(words.len(), cfg.zipf)).expect("positive weights");
            class_vocab.push(ClassVocab { words, dist });
        }
        let month_vocab = (0..2).map(|_| (0..cfg.months).map(|_| take(cfg.month_words)).collect()).collect();
        let deputy_vocab = (0..cfg.deputies).map(|_| take(cfg.deputy_words)).collect();
        let filler = take(cfg.filler_words);
        Lexicon { class_vocab, month_vocab, deputy_vocab, filler }
    }

    /// Every distinct word, in a fixed order.
    fn words(&self) -> Vec<String> {
        let all: BTreeSet<&String> = self
            .class_vocab
            .iter()
            .flat_map(|c| &c.words)
            .chain(self.month_vocab.iter().flatten().flatten())
            .chain(self.deputy_vocab.iter().flatten())
            .chain(&self.filler)
            .collect();
        all.into_iter().cloned().collect()
    }
}

/// Generate a corpus. Identical configs give identical corpora.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let stop = Stopwords::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let Lexicon { class_vocab, month_vocab, deputy_vocab, filler } = Lexicon::build(cfg, &mut rng, &stop);
    let stop_words: Vec<&str> = ["de", "que", "para", "com", "uma", "os", "no", "na"].to_vec();

    let mut deputies = Vec::with_capacity(cfg.deputies);
    let mut propensity = Vec::with_capacity(cfg.deputies);
    let mut activity = Vec::with_capacity(cfg.deputies);
    for i in 0..cfg.deputies {
        let cohort = match i % 4 {
            0 | 1 => Cohort::Reelected,
            2 => Cohort::Loser,
            _ => Cohort::Newcomer,
        };
        let (before, after) = match cohort {
            Cohort::Reelected => (true, true),
            Cohort::Loser => (true, false),
            Cohort::Newcomer => (false, true),
        };
        let base = cfg.political_share[match cohort {
            Cohort::Reelected => 0,
            Cohort::Loser => 1,
            Cohort::Newcomer => 2,
        }];
        let j = cfg.propensity_jitter;
        propensity.push((base + rng.gen_range(-j..=j)).clamp(0.0, 1.0));
        activity.push(rng.gen_range(0.5..1.5));
        deputies.push(Deputy {
            id: format!("dep{i:03}"),
            handle: format!("deputado{i:03}"),
            seated_before_election: before,
            seated_after_election: after,
            cohort,
        });
    }
    let dep_dist = WeightedIndex::new(&activity).expect("positive activity");
    // exact per-month volumes, then a shuffled posting order
    let mut month_of: Vec<usize> = apportion(&cfg.profile(), cfg.tweets)?
        .into_iter()
        .enumerate()
        .flat_map(|(m, c)| std::iter::repeat_n(m, c))
        .collect();
    month_of.shuffle(&mut rng);

    let rates = [cfg.class_rate, cfg.month_rate, cfg.deputy_rate];
    let mut tweets = Vec::with_capacity(cfg.tweets);
    for (i, &m) in month_of.iter().enumerate() {
        let d = dep_dist.sample(&mut rng);
        let class = if rng.gen_bool(propensity[d]) { 0 } else { 1 };
        let label = if class == 0 { Label::Political } else { Label::NonPolitical };
        let n_tokens = rng.gen_range(cfg.min_tokens..=cfg.max_tokens);
        let mut words: Vec<String> = Vec::with_capacity(n_tokens + 4);
        for _ in 0..n_tokens {
            let u: f64 = rng.gen();
            let w = if u < rates[0] {
                let cv = &class_vocab[class];
                cv.words[cv.dist.sample(&mut rng)].clone()
            } else if u < rates[0] + rates[1] && cfg.month_words > 0 {
                month_vocab[class][m].choose(&mut rng).unwrap().clone()
            } else if u < rates[0] + rates[1] + rates[2] && cfg.deputy_words > 0 {
                deputy_vocab[d].choose(&mut rng).unwrap().clone()
            } else {
                filler.choose(&mut rng).unwrap().clone()
            };
            words.push(w);
        }
        let text = decorate(words, &deputies, &stop_words, cfg.decoration, &mut rng);

        let ym = month_at(cfg.start, m);
        let start = Utc.from_utc_datetime(&ym.first_day().and_hms_opt(0, 0, 0).unwrap());
        let end = Utc.from_utc_datetime(&ym.succ().first_day().and_hms_opt(0, 0, 0).unwrap());
        let secs = rng.gen_range(0..(end - start).num_seconds());
        tweets.push(Tweet {
            id: format!("syn{:07}", i + 1),
            deputy_id: deputies[d].id.clone(),
            posted_at: start + Duration::seconds(secs),
            raw_text: text,
            tokens: Vec::new(),
            label: Some(label),
        });
    }
    tweets.sort_by(|a, b| a.posted_at.cmp(&b.posted_at).then_with(|| a.id.cmp(&b.id)));
    Ok(SynthCorpus { tweets, deputies })
}

/// Unlabeled background text over the same word inventory, for training
/// word vectors the way a general-purpose pretrained model would be: words
/// co-occur within random topics that ignore the political/non-political
/// split, so the vectors tell words apart without encoding the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub seed: u64,
    pub sentences: usize,
    pub topics: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Probability that a token comes from the sentence's topic rather than
    /// the whole inventory.
    pub topic_rate: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig { seed: 1, sentences: 40_000, topics: 40, min_tokens: 8, max_tokens: 14, topic_rate: 0.8 }
    }
}

pub fn background_text(cfg: &SynthConfig, bg: &BackgroundConfig) -> Result<Vec<Vec<String>>> {
    cfg.validate()?;
    if bg.topics == 0 || bg.min_tokens == 0 || bg.min_tokens > bg.max_tokens || !(0.0..=1.0).contains(&bg.topic_rate) {
        return Err(Error::Config(
            "background needs topics > 0, 1 <= min_tokens <= max_tokens, topic_rate in [0, 1]".into(),
        ));
    }
    // same inventory as `generate` with this config
    let lexicon = Lexicon::build(cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed), &Stopwords::bundled());
    let mut words = lexicon.words();
    let mut rng = ChaCha8Rng::seed_from_u64(bg.seed);
    words.shuffle(&mut rng);
    let topics: Vec<&[String]> = words.chunks(words.len().div_ceil(bg.topics)).collect();
    let mut out = Vec::with_capacity(bg.sentences);
    for _ in 0..bg.sentences {
        let topic = topics[rng.gen_range(0..topics.len())];
        let n = rng.gen_range(bg.min_tokens..=bg.max_tokens);
        out.push(
            (0..n)
                .map(|_| {
                    let src = if rng.gen_bool(bg.topic_rate) { topic } else { &words[..] };
                    src[rng.gen_range(0..src.len())].clone()
                })
                .collect(),
        );
    }
    Ok(out)
}

/// Largest-remainder split of `n` by real weights; ties to the earlier slot.
fn apportion(weights: &[f64], n: usize) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Config("volume profile must have positive total".into()));
    }
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - counts[b] as f64).total_cmp(&(exact[a] - counts[a] as f64)).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    Ok(counts)
}

fn month_at(start: YearMonth, offset: usize) -> YearMonth {
    (0..offset).fold(start, |m, _| m.succ())
}

fn decorate(mut words: Vec<String>, deputies: &[Deputy], stop_words: &[&str], p: f64, rng: &mut ChaCha8Rng) -> String {
    if let Some(first) = words.first_mut() {
        if rng.gen_bool(p) {
            let mut c = first.chars();
            if let Some(h) = c.next() {
                *first = h.to_uppercase().chain(c).collect();
            }
        }
    }
    if rng.gen_bool(p) {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, stop_words.choose(rng).unwrap().to_string());
    }
    if rng.gen_bool(p) {
        let at = rng.gen_range(0..words.len());
        words[at].push(*[',', '!', '.', '?'].choose(rng).unwrap());
    }
    if rng.gen_bool(p * 0.5) {
        words.insert(0, format!("@{}", deputies.choose(rng).unwrap().handle));
    }
    if rng.gen_bool(p * 0.5) {
        words.push(format!("#{}", words[0].trim_start_matches('@')));
    }
    if rng.gen_bool(p) {
        words.push(format!("https://t.co/{:08x}", rng.gen::<u32>()));
    }
    words.join(" ")
}
