//! Fitting the fusion gate by grid search on evidence recall.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{fuse, FusionGate};
use crate::kg::KnowledgeGraph;
use crate::numeric::exact_sum;
use crate::parser::record::ClinicalRecord;
use crate::retrieval::{
    encode_retrieved, retrieve_guidelines, retrieve_subgraph_for, RecordQuery, RetrievalConfig,
};

/// Gate value used when none has been fitted.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum GateError {
    #[error("gate alpha {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("development set is empty")]
    EmptyDevSet,
}

/// Fraction of `gold` ids found among the retrieved subgraph nodes and
/// guideline hits. An empty gold set counts as fully recalled.
pub fn gate_recall(
    graph: &KnowledgeGraph,
    record: &ClinicalRecord,
    gold: &[String],
    config: &RetrievalConfig,
) -> f64 {
    Prepared::new(graph, record, gold, config).recall(graph, config.gate, config.m)
}

struct Prepared {
    query: RecordQuery,
    h_graph: super::Embedding,
    found_in_subgraph: BTreeSet<String>,
    gold: BTreeSet<String>,
}

impl Prepared {
    fn new(graph: &KnowledgeGraph, record: &ClinicalRecord, gold: &[String], config: &RetrievalConfig) -> Self {
        let query = RecordQuery::from_record(record);
        let sub = retrieve_subgraph_for(graph, &query, config.k, config.weights);
        let h_graph = encode_retrieved(graph, &sub);
        Prepared {
            query,
            h_graph,
            found_in_subgraph: sub.node_ids.into_iter().collect(),
            gold: gold.iter().cloned().collect(),
        }
    }

    fn recall(&self, graph: &KnowledgeGraph, gate: FusionGate, m: usize) -> f64 {
        if self.gold.is_empty() {
            return 1.0;
        }
        let h_star = fuse(&self.query.h_x, &self.h_graph, gate);
        let hits: BTreeSet<String> = retrieve_guidelines(graph, &h_star, m)
            .into_iter()
            .map(|h| h.passage_node_id)
            .collect();
        let found = self
            .gold
            .iter()
            .filter(|id| self.found_in_subgraph.contains(*id) || hits.contains(*id))
            .count();
        found as f64 / self.gold.len() as f64
    }
}

/// Grid search over alpha in {0.0, 0.1, ..., 1.0} for the highest mean
/// recall. Ties go to the alpha nearest 0.5, then to the smaller alpha.
pub fn fit_gate(
    graph: &KnowledgeGraph,
    dev_cases: &[(ClinicalRecord, Vec<String>)],
    config: &RetrievalConfig,
) -> Result<FusionGate, GateError> {
    if dev_cases.is_empty() {
        return Err(GateError::EmptyDevSet);
    }
    let prepared: Vec<Prepared> = dev_cases
        .iter()
        .map(|(r, gold)| Prepared::new(graph, r, gold, config))
        .collect();
    let mut best: Option<(i32, f64)> = None;
    for step in 0..=10i32 {
        let gate = FusionGate::new(f64::from(step) / 10.0)?;
        let recall = exact_sum(prepared.iter().map(|p| p.recall(graph, gate, config.m)))
            / prepared.len() as f64;
        let better = match best {
            None => true,
            Some((b_step, b_recall)) => {
                recall > b_recall || (recall == b_recall && (step - 5).abs() < (b_step - 5).abs())
            }
        };
        if better {
            best = Some((step, recall));
        }
    }
    let (step, _) = best.expect("grid is non-empty");
    FusionGate::new(f64::from(step) / 10.0)
}

/// Mean recall at each grid point, for reporting.
pub fn gate_curve(
    graph: &KnowledgeGraph,
    dev_cases: &[(ClinicalRecord, Vec<String>)],
    config: &RetrievalConfig,
) -> Vec<(f64, f64)> {
    let prepared: Vec<Prepared> = dev_cases
        .iter()
        .map(|(r, gold)| Prepared::new(graph, r, gold, config))
        .collect();
    (0..=10)
        .map(|step| {
            let alpha = f64::from(step) / 10.0;
            let gate = FusionGate::new(alpha).expect("grid point in range");
            let mean = exact_sum(prepared.iter().map(|p| p.recall(graph, gate, config.m)))
                / prepared.len().max(1) as f64;
            (alpha, mean)
        })
        .collect()
}
