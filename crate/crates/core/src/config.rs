use serde::{Deserialize, Serialize};

use crate::parser::record::FieldViolation;
use crate::recommend::RankingWeights;
use crate::retrieval::RetrievalConfig;
use crate::safety::SafetyWeights;

/// Everything that parameterizes one pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub retrieval: RetrievalConfig,
    pub safety: SafetyWeights,
    pub ranking: RankingWeights,
    /// Generation rounds before abstaining.
    pub rounds: usize,
    /// Candidates requested per round.
    pub candidates_per_round: usize,
    /// Safety penalty weight of the recommendation loss.
    pub lambda: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            retrieval: RetrievalConfig::default(),
            safety: SafetyWeights::default(),
            ranking: RankingWeights::default(),
            rounds: 3,
            candidates_per_round: 5,
            lambda: 1.0,
        }
    }
}

impl EngineConfig {
    pub fn violations(&self) -> Vec<FieldViolation> {
        let mut out = self.safety.violations("safety.");
        if self.retrieval.k == 0 {
            out.push(FieldViolation::new("retrieval.k", "must be at least 1"));
        }
        if self.retrieval.m == 0 {
            out.push(FieldViolation::new("retrieval.m", "must be at least 1"));
        }
        if self.rounds == 0 {
            out.push(FieldViolation::new("rounds", "must be at least 1"));
        }
        if self.candidates_per_round == 0 {
            out.push(FieldViolation::new("candidates_per_round", "must be at least 1"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            out.push(FieldViolation::new("lambda", "must be a nonnegative number"));
        }
        out
    }
}
