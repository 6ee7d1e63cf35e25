//! Construction of labeling pools.
//!
//! An unbiased pool allocates each class a per-month quota proportional to
//! the corpus's monthly volume (largest-remainder apportionment, earlier
//! month wins ties). The two biased pools force at least a fixed fraction of
//! each class onto a few randomly chosen months or deputies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Tweet, YearMonth};
use crate::error::{Error, Result};

/// Labeled-set sizes offered by the CLI. Each is split evenly between classes.
pub const LABELED_SIZES: [usize; 4] = [100, 500, 1000, 2000];

/// Tweet counts per calendar month, with empty months in the covered window present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MonthlyHistogram {
    counts: BTreeMap<YearMonth, usize>,
}

impl MonthlyHistogram {
    pub fn from_months<I: IntoIterator<Item = YearMonth>>(months: I) -> Result<Self> {
        let mut counts: BTreeMap<YearMonth, usize> = BTreeMap::new();
        for m in months {
            *counts.entry(m).or_default() += 1;
        }
        let (first, last) = match (counts.keys().next(), counts.keys().next_back()) {
            (Some(&f), Some(&l)) => (f, l),
            _ => return Err(Error::invalid("monthly histogram of an empty corpus")),
        };
        let mut m = first;
        while m < last {
            m = m.succ();
            counts.entry(m).or_default();
        }
        Ok(MonthlyHistogram { counts })
    }

    pub fn counts(&self) -> &BTreeMap<YearMonth, usize> {
        &self.counts
    }

    pub fn get(&self, m: &YearMonth) -> usize {
        self.counts.get(m).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

pub fn monthly_histogram(tweets: &[Tweet]) -> Result<MonthlyHistogram> {
    MonthlyHistogram::from_months(tweets.iter().map(Tweet::month))
}

/// Hamilton apportionment of `n` seats over `weights`. Ties on the remainder
/// go to the earlier position. Exact integer arithmetic.
pub fn largest_remainder(weights: &[usize], n: usize) -> Vec<usize> {
    let total: u128 = weights.iter().map(|&w| w as u128).sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let n128 = n as u128;
    let mut seats: Vec<usize> = weights.iter().map(|&w| (n128 * w as u128 / total) as usize).collect();
    let mut rest = n - seats.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // descending remainder, stable on index
    order.sort_by_key(|&i| std::cmp::Reverse(n128 * weights[i] as u128 % total));
    for &i in &order {
        if rest == 0 {
            break;
        }
        seats[i] += 1;
        rest -= 1;
    }
    seats
}

/// Largest-remainder quotas of `n` per class, proportional to the histogram.
pub fn proportional_quotas(hist: &MonthlyHistogram, n: usize) -> Result<BTreeMap<YearMonth, usize>> {
    if n == 0 {
        return Err(Error::invalid("per-class sample size must be at least 1"));
    }
    if n > hist.total() {
        return Err(Error::invalid(format!("per-class size {n} exceeds the {} available tweets", hist.total())));
    }
    let months: Vec<YearMonth> = hist.counts.keys().copied().collect();
    let weights: Vec<usize> = hist.counts.values().copied().collect();
    let seats = largest_remainder(&weights, n);
    Ok(months.into_iter().zip(seats).collect())
}

/// Clamp quotas to capacity, moving the excess to the buckets with the
/// largest weight that still have room (earlier bucket on ties).
fn spill<K: Ord + Copy + fmt::Display>(
    quotas: &mut BTreeMap<K, usize>,
    capacity: &BTreeMap<K, usize>,
    weight: &BTreeMap<K, usize>,
    warnings: &mut Vec<String>,
) -> Result<()> {
    let mut deficit = 0;
    for (k, q) in quotas.iter_mut() {
        let cap = capacity.get(k).copied().unwrap_or(0);
        if *q > cap {
            warnings.push(format!("bucket {k}: quota {q} exceeds {cap} available, spilling {}", *q - cap));
            deficit += *q - cap;
            *q = cap;
        }
    }
    if deficit == 0 {
        return Ok(());
    }
    let mut order: Vec<K> = quotas.keys().copied().collect();
    order.sort_by_key(|k| std::cmp::Reverse(weight.get(k).copied().unwrap_or(0)));
    for k in order {
        let cap = capacity.get(&k).copied().unwrap_or(0);
        let q = quotas.get_mut(&k).expect("key from quotas");
        let take = deficit.min(cap - *q);
        *q += take;
        deficit -= take;
        if deficit == 0 {
            return Ok(());
        }
    }
    Err(Error::invalid(format!("candidate pool exhausted: {deficit} tweets short")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    Unbiased,
    BiasedMonths,
    BiasedDeputies,
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMode::Unbiased => "unbiased",
            SampleMode::BiasedMonths => "biased-months",
            SampleMode::BiasedDeputies => "biased-deputies",
        })
    }
}

impl FromStr for SampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unbiased" => Ok(SampleMode::Unbiased),
            "biased-months" => Ok(SampleMode::BiasedMonths),
            "biased-deputies" => Ok(SampleMode::BiasedDeputies),
            _ => Err(Error::invalid(format!("unknown sample mode `{s}`"))),
        }
    }
}

/// How skewed the biased pools are.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    pub k_months: usize,
    pub k_deputies: usize,
    /// Minimum fraction of each class drawn from the chosen months/deputies.
    pub concentration: f64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig { k_months: 3, k_deputies: 10, concentration: 0.5 }
    }
}

impl BiasConfig {
    pub fn forced(&self, n: usize) -> usize {
        ((self.concentration * n as f64).ceil() as usize).min(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePlan {
    pub per_class: usize,
    pub quotas: BTreeMap<YearMonth, usize>,
    pub mode: SampleMode,
    pub seed: u64,
    pub bias: BiasConfig,
}

impl SamplePlan {
    pub fn new(hist: &MonthlyHistogram, per_class: usize, mode: SampleMode, seed: u64) -> Result<Self> {
        Ok(SamplePlan {
            per_class,
            quotas: proportional_quotas(hist, per_class)?,
            mode,
            seed,
            bias: BiasConfig::default(),
        })
    }

    /// Plan for a total labeled size such as 500 (250 per class).
    pub fn for_labeled_size(hist: &MonthlyHistogram, size: usize, mode: SampleMode, seed: u64) -> Result<Self> {
        if size < 2 || !size.is_multiple_of(2) {
            return Err(Error::invalid(format!("labeled size {size} must be even and at least 2")));
        }
        Self::new(hist, size / 2, mode, seed)
    }

    pub fn with_bias(mut self, bias: BiasConfig) -> Self {
        self.bias = bias;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Political,
    NonPolitical,
    /// Worksheet row awaiting a human label.
    Unlabeled,
}

impl From<Label> for Slot {
    fn from(l: Label) -> Self {
        match l {
            Label::Political => Slot::Political,
            Label::NonPolitical => Slot::NonPolitical,
        }
    }
}

/// One output line of a sample plan file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub id: String,
    pub slot: Slot,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Sample {
    pub political: Vec<String>,
    pub non_political: Vec<String>,
    /// Filled for worksheets drawn from an unlabeled pool.
    pub unlabeled: Vec<String>,
    pub chosen_months: Vec<YearMonth>,
    pub chosen_deputies: Vec<String>,
    pub warnings: Vec<String>,
}

impl Sample {
    pub fn entries(&self) -> Vec<PlanEntry> {
        let tag = |ids: &[String], slot: Slot| {
            ids.iter().map(move |id| PlanEntry { id: id.clone(), slot }).collect::<Vec<_>>()
        };
        let mut out = tag(&self.political, Slot::Political);
        out.extend(tag(&self.non_political, Slot::NonPolitical));
        out.extend(tag(&self.unlabeled, Slot::Unlabeled));
        out
    }

    pub fn ids(&self, label: Label) -> &[String] {
        match label {
            Label::Political => &self.political,
            Label::NonPolitical => &self.non_political,
        }
    }
}

fn by_month<'a>(pool: &[&'a Tweet]) -> BTreeMap<YearMonth, Vec<&'a Tweet>> {
    let mut m: BTreeMap<YearMonth, Vec<&Tweet>> = BTreeMap::new();
    for t in pool {
        m.entry(t.month()).or_default().push(t);
    }
    m
}

/// Draw `quotas[m]` tweets uniformly without replacement from each month.
fn draw_by_quota(
    pool: &[&Tweet],
    quotas: &BTreeMap<YearMonth, usize>,
    weight: &BTreeMap<YearMonth, usize>,
    rng: &mut ChaCha8Rng,
    warnings: &mut Vec<String>,
) -> Result<Vec<String>> {
    let groups = by_month(pool);
    let capacity: BTreeMap<YearMonth, usize> = quotas.keys().map(|m| (*m, groups.get(m).map_or(0, Vec::len))).collect();
    let mut quotas = quotas.clone();
    spill(&mut quotas, &capacity, weight, warnings)?;
    let mut out = Vec::new();
    for (m, q) in quotas {
        if q == 0 {
            continue;
        }
        let mut cands = groups[&m].clone();
        let (picked, _) = cands.partial_shuffle(rng, q);
        out.extend(picked.iter().map(|t| t.id.clone()));
    }
    Ok(out)
}

fn draw_uniform(pool: &[&Tweet], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<String>> {
    if pool.len() < n {
        return Err(Error::invalid(format!("candidate pool exhausted: need {n}, have {}", pool.len())));
    }
    let mut cands = pool.to_vec();
    let (picked, _) = cands.partial_shuffle(rng, n);
    Ok(picked.iter().map(|t| t.id.clone()).collect())
}

fn draw_class(
    pool: &[&Tweet],
    plan: &SamplePlan,
    hist: &MonthlyHistogram,
    chosen_months: &BTreeSet<YearMonth>,
    chosen_deputies: &BTreeSet<&str>,
    rng: &mut ChaCha8Rng,
    warnings: &mut Vec<String>,
) -> Result<Vec<String>> {
    let n = plan.per_class;
    let weight = hist.counts();
    match plan.mode {
        SampleMode::Unbiased => draw_by_quota(pool, &plan.quotas, weight, rng, warnings),
        SampleMode::BiasedMonths => {
            let forced = plan.bias.forced(n);
            let (inside, outside): (Vec<&Tweet>, Vec<&Tweet>) =
                pool.iter().partition(|t| chosen_months.contains(&t.month()));
            let in_weights: Vec<usize> = chosen_months.iter().map(|m| hist.get(m)).collect();
            let in_quotas: BTreeMap<YearMonth, usize> =
                chosen_months.iter().copied().zip(largest_remainder(&in_weights, forced)).collect();
            let mut ids = draw_by_quota(&inside, &in_quotas, weight, rng, warnings)?;
            let rest_months: Vec<YearMonth> = weight.keys().filter(|m| !chosen_months.contains(m)).copied().collect();
            let rest = n - forced;
            if rest_months.is_empty() {
                // nothing outside the chosen months; top up from inside
                let used: BTreeSet<&String> = ids.iter().collect();
                let left: Vec<&Tweet> = inside.iter().filter(|t| !used.contains(&t.id)).copied().collect();
                ids.extend(draw_uniform(&left, rest, rng)?);
            } else {
                let rw: Vec<usize> = rest_months.iter().map(|m| hist.get(m)).collect();
                let rq: BTreeMap<YearMonth, usize> =
                    rest_months.iter().copied().zip(largest_remainder(&rw, rest)).collect();
                ids.extend(draw_by_quota(&outside, &rq, weight, rng, warnings)?);
            }
            Ok(ids)
        }
        SampleMode::BiasedDeputies => {
            let forced = plan.bias.forced(n);
            let (inside, outside): (Vec<&Tweet>, Vec<&Tweet>) =
                pool.iter().partition(|t| chosen_deputies.contains(t.deputy_id.as_str()));
            let mut ids = draw_uniform(&inside, forced, rng)?;
            let rest = n - forced;
            if rest > 0 {
                let quotas = proportional_quotas(hist, rest)?;
                ids.extend(draw_by_quota(&outside, &quotas, weight, rng, warnings)?);
            }
            Ok(ids)
        }
    }
}

/// Draw the labeled pools described by `plan`.
///
/// Tweets that carry a label form the per-class candidate pools. When no
/// tweet is labeled, a worksheet of `2 * per_class` unlabeled ids is drawn
/// instead, with quotas proportional to the same histogram.
pub fn draw_sample(tweets: &[Tweet], plan: &SamplePlan) -> Result<Sample> {
    let hist = monthly_histogram(tweets)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut sample = Sample::default();

    let chosen_months: BTreeSet<YearMonth> = if plan.mode == SampleMode::BiasedMonths {
        let mut months: Vec<YearMonth> = hist.counts().iter().filter(|(_, &c)| c > 0).map(|(m, _)| *m).collect();
        months.shuffle(&mut rng);
        months.into_iter().take(plan.bias.k_months.max(1)).collect()
    } else {
        BTreeSet::new()
    };
    let chosen_deputies: BTreeSet<&str> = if plan.mode == SampleMode::BiasedDeputies {
        let mut deps: Vec<&str> =
            tweets.iter().map(|t| t.deputy_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
        deps.shuffle(&mut rng);
        deps.into_iter().take(plan.bias.k_deputies.max(1)).collect()
    } else {
        BTreeSet::new()
    };
    sample.chosen_months = chosen_months.iter().copied().collect();
    sample.chosen_deputies = chosen_deputies.iter().map(|d| d.to_string()).collect();

    let labeled = tweets.iter().any(|t| t.label.is_some());
    if labeled {
        for label in [Label::Political, Label::NonPolitical] {
            let pool: Vec<&Tweet> = tweets.iter().filter(|t| t.label == Some(label)).collect();
            let ids = draw_class(&pool, plan, &hist, &chosen_months, &chosen_deputies, &mut rng, &mut sample.warnings)?;
            match label {
                Label::Political => sample.political = ids,
                Label::NonPolitical => sample.non_political = ids,
            }
        }
    } else {
        let pool: Vec<&Tweet> = tweets.iter().collect();
        let mut doubled = plan.clone();
        doubled.per_class = 2 * plan.per_class;
        doubled.quotas = proportional_quotas(&hist, doubled.per_class)?;
        sample.unlabeled =
            draw_class(&pool, &doubled, &hist, &chosen_months, &chosen_deputies, &mut rng, &mut sample.warnings)?;
    }
    Ok(sample)
}
