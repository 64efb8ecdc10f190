use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, embed_text};
use crate::kg::{DoseRule, KnowledgeGraph, Relation, TherapyLine};
use crate::parser::record::PatientProfile;
use crate::parser::StructuredFindings;
use crate::retrieval::{GuidelineHit, RetrievalContext};
use crate::safety::AntibioticCandidate;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("no diagnosis candidates")]
    NoDiagnosis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: AntibioticCandidate,
    pub score: f64,
}

/// Inputs handed to a generator for one round.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub graph: &'a KnowledgeGraph,
    pub findings: &'a StructuredFindings,
    pub profile: &'a PatientProfile,
    pub context: &'a RetrievalContext,
    /// Drugs that must not be proposed.
    pub exclusions: &'a BTreeSet<String>,
    pub n: usize,
}

/// Source of ranked candidates. Implementations must never propose an
/// excluded drug, must return finite scores, and must be deterministic for
/// fixed inputs.
pub trait CandidateGenerator: Send + Sync {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<ScoredCandidate>, GenerateError>;
}

/// Coefficients of the template generator's ranking score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingWeights {
    pub first_line: f64,
    pub retrieval: f64,
    pub similarity: f64,
}

impl Default for RankingWeights {
    fn default() -> Self {
        RankingWeights {
            first_line: 2.0,
            retrieval: 1.0,
            similarity: 0.1,
        }
    }
}

/// Proposes every drug that treats the top diagnosis, dosed at the band
/// midpoint with the rule's minimum frequency and duration. Evidence is the
/// diagnosis, drug and age band plus the [`backing_passage`], if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KgTemplateGenerator {
    pub weights: RankingWeights,
    /// When false, ranking uses therapy line only.
    pub use_graph_signal: bool,
}

impl Default for KgTemplateGenerator {
    fn default() -> Self {
        KgTemplateGenerator {
            weights: RankingWeights::default(),
            use_graph_signal: true,
        }
    }
}

/// The rule covering `age`, or the band nearest to it.
fn rule_for_age(rules: &[DoseRule], age: u32) -> Option<&DoseRule> {
    rules.iter().min_by_key(|r| {
        if r.covers_age(age) {
            0
        } else if age < r.min_months {
            r.min_months - age
        } else {
            age - r.max_months
        }
    })
}

/// The best-ranked retrieved passage that supports the diagnosis or the
/// drug. Passages unrelated to the proposal are not cited.
pub fn backing_passage<'h>(
    graph: &KnowledgeGraph,
    hits: &'h [GuidelineHit],
    diagnosis: &str,
    drug: &str,
) -> Option<&'h str> {
    hits.iter().map(|h| h.passage_node_id.as_str()).find(|p| {
        graph
            .neighbors(p, Some(Relation::Supports))
            .unwrap_or_default()
            .iter()
            .any(|(_, n)| n.id == diagnosis || n.id == drug)
    })
}

impl CandidateGenerator for KgTemplateGenerator {
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<Vec<ScoredCandidate>, GenerateError> {
        let diagnosis = req.findings.top_diagnosis().ok_or(GenerateError::NoDiagnosis)?;
        let graph = req.graph;
        let mut out = Vec::new();
        for (edge, drug) in graph.incoming(diagnosis, Relation::Treats) {
            if req.exclusions.contains(&drug.id) {
                continue;
            }
            let Some(rule) = rule_for_age(graph.dose_rules(&drug.id), req.profile.age_months) else {
                continue;
            };
            let first_line = edge.line() == Some(TherapyLine::First);
            let mut score = self.weights.first_line * f64::from(u8::from(first_line));
            if self.use_graph_signal {
                score += self.weights.retrieval * req.context.subgraph.score_of(&drug.id).unwrap_or(0.0);
                score += self.weights.similarity * cosine(&embed_text(&drug.name), &req.context.h_star);
            }
            let mut evidence = vec![diagnosis.to_owned(), drug.id.clone(), rule.age_band.clone()];
            if let Some(p) = backing_passage(graph, &req.context.guideline_hits, diagnosis, &drug.id) {
                evidence.push(p.to_owned());
            }
            let line = if first_line { "first-line" } else { "second-line" };
            out.push(ScoredCandidate {
                candidate: AntibioticCandidate {
                    drug: drug.id.clone(),
                    dose_mg_per_kg_day: rule.midpoint(),
                    frequency_per_day: rule.freq_min_per_day,
                    duration_days: rule.duration_min_days,
                    rationale: format!("{line} for {}", graph.node(diagnosis).map_or(diagnosis, |n| &n.name)),
                    evidence_node_ids: evidence,
                },
                score,
            });
        }
        out.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.candidate.drug.cmp(&b.candidate.drug))
        });
        out.truncate(req.n);
        Ok(out)
    }
}
