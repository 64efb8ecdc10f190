//! Turns clinical record text into negation-aware, graph-linked findings.
//!
//! Extraction is a longest-match scan of each section against the graph's
//! phrase lexicon. `#NN` tokens are resolved as FDI tooth codes. Each
//! mention is checked for a preceding negation trigger, and the surviving
//! symptom mentions vote for conditions through `indicates` edges.

pub mod negation;
pub mod record;
pub mod tagger;
pub mod tokenize;
pub mod tooth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kg::{KnowledgeGraph, NodeKind, Relation};

pub use negation::{detect_negation, NegationRules};
pub use record::{
    parse_records_jsonl, ClinicalRecord, FieldViolation, GoldAnnotation, GoldEntity,
    GoldPrescription, PatientProfile, Section, Span, MAX_AGE_MONTHS,
};
pub use tokenize::{raw_tokens, Abbreviations, Token, Tokenizer};
pub use tooth::resolve_tooth_notation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub section: Section,
    pub span: Span,
    pub surface: String,
    pub node_id: String,
    pub negated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Mild,
    Moderate,
    Severe,
    Unknown,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
            Severity::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisCandidate {
    pub condition: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredFindings {
    pub mentions: Vec<EntityMention>,
    /// Descending by score, ties by condition id.
    pub diagnosis_candidates: Vec<DiagnosisCandidate>,
    pub tooth_sites: Vec<String>,
    pub prior_antibiotics: Vec<String>,
    pub severity: Severity,
}

impl StructuredFindings {
    pub fn top_diagnosis(&self) -> Option<&str> {
        self.diagnosis_candidates.first().map(|d| d.condition.as_str())
    }

    /// Distinct non-negated symptom ids in order of first mention.
    pub fn active_symptoms<'a>(&'a self, graph: &'a KnowledgeGraph) -> Vec<&'a str> {
        let mut out: Vec<&str> = Vec::new();
        for m in &self.mentions {
            if !m.negated
                && graph.node(&m.node_id).is_some_and(|n| n.kind == NodeKind::Symptom)
                && !out.contains(&m.node_id.as_str())
            {
                out.push(&m.node_id);
            }
        }
        out
    }
}

/// Tokenizer, negation rules and severity rubric bundled for extraction.
#[derive(Debug, Clone)]
pub struct RecordParser {
    pub tokenizer: Tokenizer,
    pub negation: NegationRules,
    /// Symptom ids that make a presentation severe.
    pub severe_symptoms: Vec<String>,
}

impl Default for RecordParser {
    fn default() -> Self {
        RecordParser {
            tokenizer: Tokenizer::bundled(),
            negation: NegationRules::default(),
            severe_symptoms: ["facial_swelling", "fever", "trismus"]
                .map(String::from)
                .to_vec(),
        }
    }
}

/// A lexicon hit over a token range of one section.
#[derive(Debug, Clone)]
pub(crate) struct LexiconHit {
    pub tokens: std::ops::Range<usize>,
    pub node_id: String,
}

impl RecordParser {
    /// Longest-match scan of an already tokenized section. Phrases do not
    /// cross sentence boundaries; `#NN` tokens go through tooth resolution.
    pub(crate) fn scan(&self, graph: &KnowledgeGraph, tokens: &[Token]) -> Vec<LexiconHit> {
        let mut hits = Vec::new();
        let max_len = graph.max_phrase_tokens();
        let mut i = 0;
        while i < tokens.len() {
            if tokens[i].text.starts_with('#') {
                if let Some(node) = resolve_tooth_notation(graph, &tokens[i].text) {
                    hits.push(LexiconHit {
                        tokens: i..i + 1,
                        node_id: node.id.clone(),
                    });
                }
                i += 1;
                continue;
            }
            let sentence = tokens[i].sentence;
            let mut limit = 0;
            while limit < max_len
                && i + limit < tokens.len()
                && tokens[i + limit].sentence == sentence
            {
                limit += 1;
            }
            let found = (1..=limit).rev().find_map(|len| {
                let key: Vec<String> = tokens[i..i + len].iter().map(|t| t.text.clone()).collect();
                graph
                    .lookup_phrase(&key)
                    .and_then(|ids| ids.first())
                    .map(|&idx| (len, graph.node_at(idx).id.clone()))
            });
            match found {
                Some((len, node_id)) => {
                    hits.push(LexiconHit {
                        tokens: i..i + len,
                        node_id,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        hits
    }

    /// Mentions of one section's text.
    pub fn section_mentions(
        &self,
        graph: &KnowledgeGraph,
        section: Section,
        text: &str,
    ) -> Vec<EntityMention> {
        let tokens = self.tokenizer.tokenize(text);
        self.scan(graph, &tokens)
            .into_iter()
            .map(|hit| {
                let start = tokens[hit.tokens.start].start;
                let end = tokens[hit.tokens.end - 1].end;
                EntityMention {
                    section,
                    span: Span { start, end },
                    surface: text[start..end].to_owned(),
                    node_id: hit.node_id,
                    negated: self.negation.is_negated(&tokens, hit.tokens.clone()),
                }
            })
            .collect()
    }

    pub fn extract(&self, record: &ClinicalRecord, graph: &KnowledgeGraph) -> StructuredFindings {
        let mentions: Vec<EntityMention> = Section::ALL
            .iter()
            .flat_map(|&s| self.section_mentions(graph, s, record.section(s)))
            .collect();
        self.findings_from_mentions(mentions, graph)
    }

    /// Derives diagnosis candidates, tooth sites, prior antibiotics and
    /// severity from a mention list.
    pub fn findings_from_mentions(
        &self,
        mentions: Vec<EntityMention>,
        graph: &KnowledgeGraph,
    ) -> StructuredFindings {
        let mut symptoms: Vec<&str> = Vec::new();
        let mut tooth_sites: Vec<String> = Vec::new();
        let mut prior_antibiotics: Vec<String> = Vec::new();
        for m in mentions.iter().filter(|m| !m.negated) {
            let Some(node) = graph.node(&m.node_id) else {
                continue;
            };
            let bucket: Option<&mut Vec<String>> = match node.kind {
                NodeKind::Symptom => {
                    if !symptoms.contains(&node.id.as_str()) {
                        symptoms.push(&node.id);
                    }
                    None
                }
                NodeKind::ToothSite => Some(&mut tooth_sites),
                NodeKind::Drug => Some(&mut prior_antibiotics),
                _ => None,
            };
            if let Some(list) = bucket {
                if !list.contains(&node.id) {
                    list.push(node.id.clone());
                }
            }
        }

        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &symptoms {
            for (_, cond) in graph.neighbors(s, Some(Relation::Indicates)).unwrap_or_default() {
                *votes.entry(cond.id.as_str()).or_default() += 1;
            }
        }
        let total = symptoms.len() as f64;
        let mut diagnosis_candidates: Vec<DiagnosisCandidate> = votes
            .into_iter()
            .map(|(c, n)| DiagnosisCandidate {
                condition: c.to_owned(),
                score: n as f64 / total,
            })
            .collect();
        // BTreeMap order already sorts ids; a stable sort keeps it for ties.
        diagnosis_candidates.sort_by(|a, b| b.score.total_cmp(&a.score));

        let severity = if symptoms.is_empty() {
            Severity::Unknown
        } else if symptoms
            .iter()
            .any(|s| self.severe_symptoms.iter().any(|x| x == s))
        {
            Severity::Severe
        } else if symptoms.len() >= 2 {
            Severity::Moderate
        } else {
            Severity::Mild
        };

        StructuredFindings {
            mentions,
            diagnosis_candidates,
            tooth_sites,
            prior_antibiotics,
            severity,
        }
    }
}

/// [`RecordParser::extract`] with the default parser.
pub fn extract(record: &ClinicalRecord, graph: &KnowledgeGraph) -> StructuredFindings {
    RecordParser::default().extract(record, graph)
}
