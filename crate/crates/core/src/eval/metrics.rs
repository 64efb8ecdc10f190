use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::exact_sum;
use crate::parser::record::{GoldEntity, Section};
use crate::parser::EntityMention;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("{candidates} candidates against {references} references")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

/// What entity-linking F1 compares: spans are deliberately left out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkKey<'a> {
    pub section: Section,
    pub node_id: &'a str,
    pub negated: bool,
}

impl<'a> From<&'a EntityMention> for LinkKey<'a> {
    fn from(m: &'a EntityMention) -> Self {
        LinkKey {
            section: m.section,
            node_id: &m.node_id,
            negated: m.negated,
        }
    }
}

impl<'a> From<&'a GoldEntity> for LinkKey<'a> {
    fn from(g: &'a GoldEntity) -> Self {
        LinkKey {
            section: g.section,
            node_id: &g.node_id,
            negated: g.negated,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCounts {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl LinkCounts {
    /// Multiset matching of one document's keys.
    pub fn of<'a>(
        predicted: impl IntoIterator<Item = LinkKey<'a>>,
        gold: impl IntoIterator<Item = LinkKey<'a>>,
    ) -> Self {
        let mut bag: BTreeMap<LinkKey<'a>, usize> = BTreeMap::new();
        let mut n_gold = 0;
        for g in gold {
            *bag.entry(g).or_default() += 1;
            n_gold += 1;
        }
        let mut tp = 0;
        let mut n_pred = 0;
        for p in predicted {
            n_pred += 1;
            if let Some(c) = bag.get_mut(&p).filter(|c| **c > 0) {
                *c -= 1;
                tp += 1;
            }
        }
        LinkCounts {
            true_positives: tp,
            predicted: n_pred,
            gold: n_gold,
        }
    }

    pub fn add(self, other: LinkCounts) -> LinkCounts {
        LinkCounts {
            true_positives: self.true_positives + other.true_positives,
            predicted: self.predicted + other.predicted,
            gold: self.gold + other.gold,
        }
    }

    /// `(precision, recall, f1)`. A ratio with a zero denominator is 0,
    /// except that two empty lists agree perfectly.
    pub fn scores(self) -> (f64, f64, f64) {
        if self.predicted == 0 && self.gold == 0 {
            return (1.0, 1.0, 1.0);
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        (
            ratio(self.true_positives, self.predicted),
            ratio(self.true_positives, self.gold),
            ratio(2 * self.true_positives, self.predicted + self.gold),
        )
    }
}

/// Micro-averaged linking precision, recall and F1 over one mention list.
pub fn ner_f1<'a>(
    predicted: impl IntoIterator<Item = LinkKey<'a>>,
    gold: impl IntoIterator<Item = LinkKey<'a>>,
) -> (f64, f64, f64) {
    LinkCounts::of(predicted, gold).scores()
}

fn ngrams(tokens: &[&str], n: usize) -> BTreeMap<Vec<String>, usize> {
    let mut out = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(|t| t.to_string()).collect()).or_default() += 1;
        }
    }
    out
}

/// Corpus BLEU-4 over whitespace tokens, scaled to [0, 100]. Precisions for
/// n > 1 use add-one smoothing; the unigram precision does not, so a corpus
/// with no shared word scores 0.
pub fn bleu4<S: AsRef<str>, T: AsRef<str>>(candidates: &[S], references: &[T]) -> Result<f64, MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        let ct: Vec<&str> = c.as_ref().split_whitespace().collect();
        let rt: Vec<&str> = r.as_ref().split_whitespace().collect();
        c_len += ct.len();
        r_len += rt.len();
        for n in 1..=4 {
            let cg = ngrams(&ct, n);
            let rg = ngrams(&rt, n);
            for (g, count) in &cg {
                matches[n - 1] += (*count).min(rg.get(g).copied().unwrap_or(0));
                totals[n - 1] += count;
            }
        }
    }
    if c_len == 0 || matches[0] == 0 {
        return Ok(0.0);
    }
    let mut log_p = matches[0] as f64 / totals[0] as f64;
    log_p = log_p.ln();
    for n in 1..4 {
        log_p += ((matches[n] + 1) as f64 / (totals[n] + 1) as f64).ln();
    }
    let bp = if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    Ok(100.0 * bp * (log_p / 4.0).exp())
}

/// Jaccard overlap of cited and gold evidence; 1 when both are empty.
pub fn eas<S: AsRef<str>, T: AsRef<str>>(cited: &[S], gold: &[T]) -> f64 {
    let a: BTreeSet<&str> = cited.iter().map(AsRef::as_ref).collect();
    let b: BTreeSet<&str> = gold.iter().map(AsRef::as_ref).collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / a.union(&b).count() as f64
}

pub fn mean(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    exact_sum(samples.iter().copied()) / samples.len() as f64
}

/// Percentile bootstrap interval of the mean.
///
/// Bounds are clamped to the sample range, which the mean can never leave,
/// so constant samples give a degenerate interval exactly.
pub fn bootstrap_ci(samples: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64), MetricError> {
    if samples.len() < 2 {
        return Err(MetricError::TooFewSamples(samples.len()));
    }
    let resamples = resamples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let draw: Vec<f64> = (0..n).map(|_| samples[rng.gen_range(0..n)]).collect();
            mean(&draw)
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level.clamp(0.0, 1.0)) / 2.0;
    let at = |q: f64| {
        let idx = ((resamples as f64 * q).ceil() as usize).clamp(1, resamples) - 1;
        means[idx]
    };
    let lo_bound = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_bound = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((
        at(tail).clamp(lo_bound, hi_bound),
        at(1.0 - tail).clamp(lo_bound, hi_bound),
    ))
}
