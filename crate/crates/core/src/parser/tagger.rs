//! Linear-softmax BIO token tagger.
//!
//! Each token is described by a sparse feature vector: the signed hash
//! bucket of the token itself, the signed hash bucket of the previous token
//! in the same section, a bit that is set when the token occurs in a
//! Condition or Symptom lexicon phrase, and a bias. The tagger is a
//! `TAGS x FEATURES` weight matrix; a token's tag distribution is the
//! softmax of the matrix-vector product.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::record::{ClinicalRecord, GoldAnnotation, Section};
use super::tokenize::{raw_tokens, Tokenizer};
use crate::embedding::{hash_feature, DIM};
use crate::kg::{KnowledgeGraph, NodeKind};
use crate::numeric::{exact_sum, log_sum_exp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BioTag {
    O,
    BCondition,
    ICondition,
    BSymptom,
    ISymptom,
}

impl BioTag {
    pub const ALL: [BioTag; 5] = [
        BioTag::O,
        BioTag::BCondition,
        BioTag::ICondition,
        BioTag::BSymptom,
        BioTag::ISymptom,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

pub const TAGS: usize = BioTag::ALL.len();
/// Current-token buckets, previous-token buckets, lexicon bit, bias.
pub const FEATURES: usize = 2 * DIM + 2;
const LEXICON_FEATURE: usize = 2 * DIM;
const BIAS_FEATURE: usize = 2 * DIM + 1;

#[derive(Debug, Error, PartialEq)]
pub enum TaggerError {
    #[error("record `{0}` has no gold annotation")]
    MissingGold(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
}

/// One token's sparse features and gold tag.
#[derive(Debug, Clone, PartialEq)]
struct TokenRow {
    cur: (usize, f64),
    prev: Option<(usize, f64)>,
    in_lexicon: bool,
    gold: BioTag,
}

impl TokenRow {
    fn features(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        std::iter::once(self.cur)
            .chain(self.prev.map(|(i, s)| (DIM + i, s)))
            .chain(self.in_lexicon.then_some((LEXICON_FEATURE, 1.0)))
            .chain(std::iter::once((BIAS_FEATURE, 1.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTagger {
    /// Row-major `TAGS x FEATURES`.
    weights: Vec<f64>,
    /// Tokens appearing in any Condition or Symptom phrase.
    lexicon: BTreeSet<String>,
    /// Entity class of each taggable node id (true = Condition).
    entity_is_condition: BTreeMap<String, bool>,
}

impl TokenTagger {
    /// Zero-weight tagger, i.e. uniform over tags, with lexicon features
    /// drawn from `graph`.
    pub fn uniform(graph: &KnowledgeGraph) -> Self {
        let mut lexicon = BTreeSet::new();
        let mut entity_is_condition = BTreeMap::new();
        for node in graph.nodes() {
            let is_condition = match node.kind {
                NodeKind::Condition => true,
                NodeKind::Symptom => false,
                _ => continue,
            };
            entity_is_condition.insert(node.id.clone(), is_condition);
            lexicon.extend(raw_tokens(&node.lexical_text()).into_iter().map(|t| t.text));
        }
        TokenTagger {
            weights: vec![0.0; TAGS * FEATURES],
            lexicon,
            entity_is_condition,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn logits(&self, row: &TokenRow) -> [f64; TAGS] {
        let mut z = [0.0; TAGS];
        for (k, zk) in z.iter_mut().enumerate() {
            let w = &self.weights[k * FEATURES..(k + 1) * FEATURES];
            *zk = row.features().map(|(f, v)| w[f] * v).sum();
        }
        z
    }

    /// Most likely tag per token of each section, in section order.
    pub fn predict(&self, record: &ClinicalRecord) -> Vec<BioTag> {
        let empty = GoldAnnotation::default();
        self.rows(record, &empty)
            .iter()
            .map(|row| {
                let z = self.logits(row);
                let best = (0..TAGS).fold(0, |b, k| if z[k] > z[b] { k } else { b });
                BioTag::ALL[best]
            })
            .collect()
    }

    fn rows(&self, record: &ClinicalRecord, gold: &GoldAnnotation) -> Vec<TokenRow> {
        let tokenizer = Tokenizer::bundled();
        let mut rows = Vec::new();
        for section in Section::ALL {
            let tokens = tokenizer.tokenize(record.section(section));
            let mut prev: Option<(usize, f64)> = None;
            let mut open: Option<(usize, usize)> = None;
            for tok in &tokens {
                // A token belongs to the first gold entity of its section
                // whose span contains it.
                let entity = gold.entities.iter().find_map(|e| {
                    let cls = *self.entity_is_condition.get(&e.node_id)?;
                    (e.section == section && e.span.start <= tok.start && tok.end <= e.span.end)
                        .then_some((e.span.start, e.span.end, cls))
                });
                let tag = match entity {
                    None => BioTag::O,
                    Some((s, e, cls)) => {
                        let inside = open == Some((s, e));
                        open = Some((s, e));
                        match (cls, inside) {
                            (true, false) => BioTag::BCondition,
                            (true, true) => BioTag::ICondition,
                            (false, false) => BioTag::BSymptom,
                            (false, true) => BioTag::ISymptom,
                        }
                    }
                };
                if entity.is_none() {
                    open = None;
                }
                let cur = hash_feature(&tok.text);
                rows.push(TokenRow {
                    cur,
                    prev,
                    in_lexicon: self.lexicon.contains(&tok.text),
                    gold: tag,
                });
                prev = Some(cur);
            }
        }
        rows
    }

    fn row_nll(&self, row: &TokenRow) -> f64 {
        let z = self.logits(row);
        log_sum_exp(&z) - z[row.gold.index()]
    }
}

/// Summed negative log-likelihood of the record's gold tag sequence.
pub fn tagger_nll(tagger: &TokenTagger, record: &ClinicalRecord) -> Result<f64, TaggerError> {
    let gold = record
        .gold
        .as_ref()
        .ok_or_else(|| TaggerError::MissingGold(record.record_id.clone()))?;
    let rows = tagger.rows(record, gold);
    Ok(exact_sum(rows.iter().map(|r| tagger.row_nll(r))))
}

/// NLL and its gradient with respect to the weights (row-major, like
/// [`TokenTagger::weights`]).
pub fn nll_and_grad(
    tagger: &TokenTagger,
    record: &ClinicalRecord,
) -> Result<(f64, Vec<f64>), TaggerError> {
    let gold = record
        .gold
        .as_ref()
        .ok_or_else(|| TaggerError::MissingGold(record.record_id.clone()))?;
    let rows = tagger.rows(record, gold);
    let mut grad = vec![0.0; TAGS * FEATURES];
    let mut losses = Vec::with_capacity(rows.len());
    for row in &rows {
        accumulate(tagger, row, &mut grad, &mut losses);
    }
    Ok((exact_sum(losses), grad))
}

fn accumulate(tagger: &TokenTagger, row: &TokenRow, grad: &mut [f64], losses: &mut Vec<f64>) {
    let z = tagger.logits(row);
    let lse = log_sum_exp(&z);
    losses.push(lse - z[row.gold.index()]);
    for k in 0..TAGS {
        let p = (z[k] - lse).exp();
        let delta = p - f64::from(u8::from(k == row.gold.index()));
        for (f, v) in row.features() {
            grad[k * FEATURES + f] += delta * v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggerTraining {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TaggerTraining {
    fn default() -> Self {
        TaggerTraining {
            epochs: 100,
            learning_rate: 1.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedTagger {
    pub tagger: TokenTagger,
    /// Mean per-record NLL before training (index 0) and after each epoch.
    pub epoch_nll: Vec<f64>,
}

/// Full-batch gradient descent on the per-token mean NLL of the corpus.
/// The seed only fixes the order in which token gradients are accumulated.
pub fn train_tagger(
    graph: &KnowledgeGraph,
    corpus: &[ClinicalRecord],
    config: TaggerTraining,
) -> Result<TrainedTagger, TaggerError> {
    if corpus.is_empty() {
        return Err(TaggerError::EmptyCorpus);
    }
    let mut tagger = TokenTagger::uniform(graph);
    let mut rows = Vec::new();
    for record in corpus {
        let gold = record
            .gold
            .as_ref()
            .ok_or_else(|| TaggerError::MissingGold(record.record_id.clone()))?;
        rows.extend(tagger.rows(record, gold));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rows.shuffle(&mut rng);
    let n_records = corpus.len() as f64;
    let n_tokens = rows.len().max(1) as f64;

    let corpus_nll = |t: &TokenTagger| exact_sum(rows.iter().map(|r| t.row_nll(r)));
    let mut epoch_nll = vec![corpus_nll(&tagger) / n_records];
    for _ in 0..config.epochs {
        let mut grad = vec![0.0; TAGS * FEATURES];
        let mut losses = Vec::with_capacity(rows.len());
        for row in &rows {
            accumulate(&tagger, row, &mut grad, &mut losses);
        }
        for (w, g) in tagger.weights.iter_mut().zip(&grad) {
            *w -= config.learning_rate * g / n_tokens;
        }
        epoch_nll.push(corpus_nll(&tagger) / n_records);
    }
    Ok(TrainedTagger { tagger, epoch_nll })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::parser::record::{GoldEntity, PatientProfile, Span};

    fn annotated(text: &str, entities: &[(&str, &str)]) -> ClinicalRecord {
        let mut r = ClinicalRecord::new("r", text, "", "", PatientProfile::new(60, 20.0)).unwrap();
        let gold = GoldAnnotation {
            entities: entities
                .iter()
                .map(|(surface, id)| {
                    let start = text.find(surface).unwrap();
                    GoldEntity {
                        section: Section::ChiefComplaint,
                        span: Span {
                            start,
                            end: start + surface.len(),
                        },
                        node_id: id.to_string(),
                        negated: false,
                    }
                })
                .collect(),
            ..Default::default()
        };
        r.gold = Some(gold);
        r
    }

    #[test]
    fn uniform_nll_is_t_ln5() {
        let g = fixtures::kg_mini();
        let t = TokenTagger::uniform(&g);
        let r = annotated("spontaneous pain and swelling near tooth #85", &[("spontaneous pain", "spontaneous_pain")]);
        assert_eq!(tagger_nll(&t, &r).unwrap(), 7.0 * 5f64.ln());
    }

    #[test]
    fn bio_tags_from_spans() {
        let g = fixtures::kg_mini();
        let t = TokenTagger::uniform(&g);
        let r = annotated(
            "acute pulpitis with spontaneous pain",
            &[("acute pulpitis", "acute_pulpitis"), ("spontaneous pain", "spontaneous_pain")],
        );
        let tags: Vec<_> = t.rows(&r, r.gold.as_ref().unwrap()).iter().map(|x| x.gold).collect();
        assert_eq!(
            tags,
            [BioTag::BCondition, BioTag::ICondition, BioTag::O, BioTag::BSymptom, BioTag::ISymptom]
        );
    }

    #[test]
    fn missing_gold_and_empty_corpus() {
        let g = fixtures::kg_mini();
        let t = TokenTagger::uniform(&g);
        let r = ClinicalRecord::new("x", "pain", "", "", PatientProfile::new(60, 20.0)).unwrap();
        assert_eq!(tagger_nll(&t, &r), Err(TaggerError::MissingGold("x".into())));
        assert_eq!(
            train_tagger(&g, &[], TaggerTraining::default()).unwrap_err(),
            TaggerError::EmptyCorpus
        );
    }

    #[test]
    fn zero_epochs_is_identity() {
        let g = fixtures::kg_mini();
        let r = annotated("pain", &[("pain", "pain")]);
        let cfg = TaggerTraining {
            epochs: 0,
            ..Default::default()
        };
        let out = train_tagger(&g, &[r], cfg).unwrap();
        assert_eq!(out.tagger, TokenTagger::uniform(&g));
        assert_eq!(out.epoch_nll.len(), 1);
    }
}
