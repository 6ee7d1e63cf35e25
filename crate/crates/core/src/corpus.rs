//! Message ingestion, text normalization, deduplication and deputy cohorts.
//!
//! Input files are JSONL. Each tweet line carries `id`, `deputy_id`,
//! `posted_at` (ISO 8601 with offset), `text`, and optionally `label`
//! (`"political"` or `"non_political"`). Each deputy line carries `id`,
//! `handle`, `seated_before_election` and `seated_after_election`.
//!
//! Malformed lines never abort ingestion; they are collected into a
//! [`LineError`] list alongside the parsed corpus.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_pt.txt");

/// Version tag of the bundled stopword list. Bump whenever the file changes.
pub const STOPWORDS_VERSION: &str = "pt-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Political,
    NonPolitical,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Political => "political",
            Label::NonPolitical => "non_political",
        }
    }

    /// 1.0 for political, 0.0 otherwise. Used as the BCE target.
    pub fn target(self) -> f64 {
        match self {
            Label::Political => 1.0,
            Label::NonPolitical => 0.0,
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Political => Label::NonPolitical,
            Label::NonPolitical => Label::Political,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "political" => Ok(Label::Political),
            "non_political" | "non-political" => Ok(Label::NonPolitical),
            other => Err(Error::invalid(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Manual,
    Predicted,
}

/// A tweet together with the label attached to it and where that label came from.
#[derive(Debug, Clone, Copy)]
pub struct LabeledTweet<'a> {
    pub tweet: &'a Tweet,
    pub label: Label,
    pub source: LabelSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cohort {
    Reelected,
    Loser,
    Newcomer,
}

impl Cohort {
    pub const ALL: [Cohort; 3] = [Cohort::Reelected, Cohort::Newcomer, Cohort::Loser];

    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::Reelected => "Reelected",
            Cohort::Loser => "Losers",
            Cohort::Newcomer => "Newcomers",
        }
    }
}

/// Cohort from the deputy's seat before and after the election.
///
/// A person seated neither before nor after is outside the study population.
pub fn assign_cohort(seated_before: bool, seated_after: bool) -> Result<Cohort> {
    match (seated_before, seated_after) {
        (true, true) => Ok(Cohort::Reelected),
        (true, false) => Ok(Cohort::Loser),
        (false, true) => Ok(Cohort::Newcomer),
        (false, false) => Err(Error::invalid("deputy seated neither before nor after the election")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deputy {
    pub id: String,
    pub handle: String,
    pub seated_before_election: bool,
    pub seated_after_election: bool,
    pub cohort: Cohort,
}

/// Calendar month, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month out of range: {month}");
        YearMonth { year, month }
    }

    pub fn of(ts: &DateTime<Utc>) -> Self {
        YearMonth { year: ts.year(), month: ts.month() }
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            YearMonth { year: self.year + 1, month: 1 }
        } else {
            YearMonth { year: self.year, month: self.month + 1 }
        }
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("expected YYYY-MM, got `{s}`"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(YearMonth { year, month })
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tweet {
    pub id: String,
    pub deputy_id: String,
    pub posted_at: DateTime<Utc>,
    pub raw_text: String,
    /// Normalized tokens; empty until [`Corpus::normalize`] runs.
    pub tokens: Vec<String>,
    /// Label carried by the input file, if any.
    pub label: Option<Label>,
}

impl Tweet {
    pub fn month(&self) -> YearMonth {
        YearMonth::of(&self.posted_at)
    }
}

/// On-disk tweet line. `tokens` is only present in normalized corpus output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TweetRecord {
    pub id: String,
    pub deputy_id: String,
    pub posted_at: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
}

impl TweetRecord {
    pub fn into_tweet(self) -> Result<Tweet> {
        let posted_at = DateTime::parse_from_rfc3339(&self.posted_at)
            .map_err(|e| Error::invalid(format!("bad posted_at `{}`: {e}", self.posted_at)))?
            .with_timezone(&Utc);
        if self.id.is_empty() {
            return Err(Error::invalid("empty id"));
        }
        Ok(Tweet {
            id: self.id,
            deputy_id: self.deputy_id,
            posted_at,
            raw_text: self.text,
            tokens: self.tokens.unwrap_or_default(),
            label: self.label,
        })
    }

    pub fn from_tweet(t: &Tweet, label: Option<Label>, with_tokens: bool) -> Self {
        TweetRecord {
            id: t.id.clone(),
            deputy_id: t.deputy_id.clone(),
            posted_at: t.posted_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            text: t.raw_text.clone(),
            label,
            tokens: with_tokens.then(|| t.tokens.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeputyRecord {
    pub id: String,
    pub handle: String,
    pub seated_before_election: bool,
    pub seated_after_election: bool,
}

impl DeputyRecord {
    pub fn into_deputy(self) -> Result<Deputy> {
        let cohort = assign_cohort(self.seated_before_election, self.seated_after_election)?;
        Ok(Deputy {
            id: self.id,
            handle: self.handle,
            seated_before_election: self.seated_before_election,
            seated_after_election: self.seated_after_election,
            cohort,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFile {
    Tweets,
    Deputies,
}

/// One rejected input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub file: InputFile,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub tweets: Vec<Tweet>,
    pub deputies: BTreeMap<String, Deputy>,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub corpus: Corpus,
    pub errors: Vec<LineError>,
}

fn parse_lines<R, T, F>(reader: R, file: InputFile, errors: &mut Vec<LineError>, mut f: F) -> Result<()>
where
    R: BufRead,
    T: for<'de> Deserialize<'de>,
    F: FnMut(T, usize) -> std::result::Result<(), String>,
{
    for (i, line) in reader.split(b'\n').enumerate() {
        let lineno = i + 1;
        let bytes = line?;
        let text = match std::str::from_utf8(&bytes) {
            Ok(t) => t.trim_end_matches('\r'),
            Err(_) => {
                errors.push(LineError { file, line: lineno, message: "invalid UTF-8".into() });
                continue;
            }
        };
        if text.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<T>(text).map_err(|e| e.to_string()).and_then(|rec| f(rec, lineno));
        if let Err(message) = outcome {
            errors.push(LineError { file, line: lineno, message });
        }
    }
    Ok(())
}

/// Parse a deputies file. Bad lines and duplicate ids go to the error list.
pub fn read_deputies<R: BufRead>(reader: R) -> Result<(BTreeMap<String, Deputy>, Vec<LineError>)> {
    let mut deputies = BTreeMap::new();
    let mut errors = Vec::new();
    parse_lines(reader, InputFile::Deputies, &mut errors, |rec: DeputyRecord, _| {
        let dep = rec.into_deputy().map_err(|e| e.to_string())?;
        if deputies.contains_key(&dep.id) {
            return Err(format!("duplicate deputy id `{}`", dep.id));
        }
        deputies.insert(dep.id.clone(), dep);
        Ok(())
    })?;
    Ok((deputies, errors))
}

/// Parse a tweets file without checking deputies.
///
/// Repeated ids are accepted only when they repeat the same deputy and text
/// (a re-downloaded message, later removed by [`dedupe`]).
pub fn read_tweets<R: BufRead>(reader: R) -> Result<(Vec<Tweet>, Vec<LineError>)> {
    read_tweets_where(reader, |_| Ok(()))
}

fn read_tweets_where<R, F>(reader: R, accept: F) -> Result<(Vec<Tweet>, Vec<LineError>)>
where
    R: BufRead,
    F: Fn(&Tweet) -> std::result::Result<(), String>,
{
    let mut tweets: Vec<Tweet> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut errors = Vec::new();
    parse_lines(reader, InputFile::Tweets, &mut errors, |rec: TweetRecord, _| {
        let tweet = rec.into_tweet().map_err(|e| e.to_string())?;
        accept(&tweet)?;
        if let Some(&prev) = seen.get(&tweet.id) {
            let p = &tweets[prev];
            if p.deputy_id != tweet.deputy_id || p.raw_text != tweet.raw_text {
                return Err(format!("duplicate id `{}` with different content", tweet.id));
            }
        } else {
            seen.insert(tweet.id.clone(), tweets.len());
        }
        tweets.push(tweet);
        Ok(())
    })?;
    Ok((tweets, errors))
}

/// Parse both files; tweets that reference an unknown deputy are rejected.
pub fn ingest<T: BufRead, D: BufRead>(tweets: T, deputies: D) -> Result<Ingested> {
    let (deputies, mut errors) = read_deputies(deputies)?;
    let (tweets, tweet_errors) = read_tweets_where(tweets, |t| {
        if deputies.contains_key(&t.deputy_id) {
            Ok(())
        } else {
            Err(format!("unknown deputy_id `{}`", t.deputy_id))
        }
    })?;
    errors.extend(tweet_errors);
    Ok(Ingested { corpus: Corpus { tweets, deputies }, errors })
}

pub fn ingest_paths(tweets: impl AsRef<std::path::Path>, deputies: impl AsRef<std::path::Path>) -> Result<Ingested> {
    let t = std::io::BufReader::new(std::fs::File::open(tweets)?);
    let d = std::io::BufReader::new(std::fs::File::open(deputies)?);
    ingest(t, d)
}

/// Keep one tweet per `(deputy_id, raw_text)`: the earliest, first occurrence
/// on ties. Survivors keep their relative order.
pub fn dedupe(tweets: Vec<Tweet>) -> Vec<Tweet> {
    let mut winner: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, t) in tweets.iter().enumerate() {
        winner
            .entry((t.deputy_id.as_str(), t.raw_text.as_str()))
            .and_modify(|w| {
                if t.posted_at < tweets[*w].posted_at {
                    *w = i;
                }
            })
            .or_insert(i);
    }
    let keep: HashSet<usize> = winner.into_values().collect();
    tweets.into_iter().enumerate().filter_map(|(i, t)| keep.contains(&i).then_some(t)).collect()
}

impl Corpus {
    pub fn dedupe(&mut self) {
        self.tweets = dedupe(std::mem::take(&mut self.tweets));
    }

    pub fn normalize(&mut self, stopwords: &Stopwords) {
        for t in &mut self.tweets {
            t.tokens = normalize(&t.raw_text, stopwords);
        }
    }

    pub fn cohort_of(&self, tweet: &Tweet) -> Option<Cohort> {
        self.deputies.get(&tweet.deputy_id).map(|d| d.cohort)
    }
}

pub fn write_tweets<W: Write>(mut out: W, tweets: &[Tweet], with_tokens: bool) -> Result<()> {
    for t in tweets {
        let rec = TweetRecord::from_tweet(t, t.label, with_tokens);
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Lowercased, NFC-normalized stopword set.
#[derive(Debug, Clone, Default)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    pub fn bundled() -> Self {
        Self::from_str_lines(BUNDLED_STOPWORDS)
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut words = HashSet::new();
        for line in reader.lines() {
            let w = canonical(line?.trim());
            if !w.is_empty() {
                words.insert(w);
            }
        }
        Ok(Stopwords { words })
    }

    pub fn from_str_lines(text: &str) -> Self {
        Self::from_reader(text.as_bytes()).expect("in-memory read")
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stopwords { words: words.into_iter().map(|w| canonical(w.as_ref())).collect() }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn canonical(s: &str) -> String {
    s.nfc().collect::<String>().to_lowercase()
}

fn strip_class() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // punctuation, symbols (emoji included), format characters, variation selectors
    RE.get_or_init(|| Regex::new(r"[\p{P}\p{S}\p{Cf}\x{FE00}-\x{FE0F}]").expect("valid regex"))
}

fn is_strippable(c: char) -> bool {
    let mut buf = [0u8; 4];
    strip_class().is_match(c.encode_utf8(&mut buf))
}

fn is_entity(token: &str) -> bool {
    let core = token.trim_start_matches(|c: char| c != '#' && c != '@' && is_strippable(c));
    core.starts_with('#')
        || core.starts_with('@')
        || core.starts_with("http://")
        || core.starts_with("https://")
        || core.starts_with("www.")
}

/// Tokenize and filter one message.
///
/// Order: NFC + lowercase, split on whitespace, drop URLs, mentions and
/// hashtags, strip punctuation/symbol characters, drop tokens shorter than
/// two characters, drop stopwords.
pub fn normalize(raw_text: &str, stopwords: &Stopwords) -> Vec<String> {
    let text = canonical(raw_text);
    text.split_whitespace()
        .filter(|tok| !is_entity(tok))
        .map(|tok| strip_class().replace_all(tok, "").nfc().collect::<String>())
        .filter(|tok| tok.chars().count() >= 2)
        .filter(|tok| !stopwords.contains(tok))
        .collect()
}
