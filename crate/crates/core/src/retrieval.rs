//! Entity subgraph retrieval, guideline passage retrieval and context
//! assembly.
//!
//! Entities are ranked by a blend of embedding similarity and keyword
//! overlap with the record; the top `k` nodes (guideline passages excluded)
//! form the record's subgraph. Passages are ranked separately by cosine
//! similarity with the fused record vector.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, embed_text, encode_subgraph, fuse, Embedding, FusionGate};
use crate::kg::{KGEdge, KGNode, KnowledgeGraph, NodeKind, Relation};
use crate::parser::record::ClinicalRecord;
use crate::parser::tokenize::raw_tokens;

/// Relations pulled in around every retrieved drug.
pub const SAFETY_RELATIONS: [Relation; 4] = [
    Relation::HasDoseRule,
    Relation::CrossReactive,
    Relation::InteractsWith,
    Relation::ContraindicatedIn,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWeights {
    pub embedding: f64,
    pub keyword: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            embedding: 0.7,
            keyword: 0.3,
        }
    }
}

/// Set Jaccard similarity; 0 when both sets are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Relevance of one entity to a record.
pub fn score_entity(
    node: &KGNode,
    h_x: &Embedding,
    record_tokens: &BTreeSet<String>,
    weights: ScoreWeights,
) -> f64 {
    let text = node.lexical_text();
    let tokens: BTreeSet<String> = raw_tokens(&text).into_iter().map(|t| t.text).collect();
    combine(cosine(&embed_text(&text), h_x), jaccard(&tokens, record_tokens), weights)
}

fn combine(cos: f64, jac: f64, w: ScoreWeights) -> f64 {
    // Adding +0.0 turns a negative zero into a positive one.
    w.embedding * cos + w.keyword * jac + 0.0
}

/// A record reduced to what retrieval needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordQuery {
    pub h_x: Embedding,
    pub tokens: BTreeSet<String>,
}

impl RecordQuery {
    pub fn from_text(text: &str) -> Self {
        RecordQuery {
            h_x: embed_text(text),
            tokens: raw_tokens(text).into_iter().map(|t| t.text).collect(),
        }
    }

    pub fn from_record(record: &ClinicalRecord) -> Self {
        Self::from_text(&record.full_text())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSubgraph {
    /// Descending by score, ties by id.
    pub node_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub edges: Vec<KGEdge>,
}

impl RetrievedSubgraph {
    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn score_of(&self, id: &str) -> Option<f64> {
        self.node_ids
            .iter()
            .position(|n| n == id)
            .map(|i| self.scores[i])
    }
}

/// Exact top-`k` entity retrieval for a prepared query.
pub fn retrieve_subgraph_for(
    graph: &KnowledgeGraph,
    query: &RecordQuery,
    k: usize,
    weights: ScoreWeights,
) -> RetrievedSubgraph {
    let mut scored: Vec<(usize, f64)> = (0..graph.node_count())
        .filter(|&i| graph.node_at(i).kind != NodeKind::GuidelinePassage)
        .map(|i| {
            let f = graph.features_at(i);
            let s = combine(
                cosine(&f.lexical, &query.h_x),
                jaccard(&f.tokens, &query.tokens),
                weights,
            );
            (i, s)
        })
        .collect();
    // Nodes are stored by id, so a stable sort on score alone breaks ties by id.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.truncate(k);

    let node_ids: Vec<String> = scored.iter().map(|&(i, _)| graph.node_at(i).id.clone()).collect();
    let members: HashSet<&str> = node_ids.iter().map(String::as_str).collect();
    let drugs: HashSet<&str> = node_ids
        .iter()
        .filter(|id| graph.node(id).is_some_and(|n| n.kind == NodeKind::Drug))
        .map(String::as_str)
        .collect();
    let edges = graph
        .edges()
        .iter()
        .filter(|e| {
            (members.contains(e.src.as_str()) && members.contains(e.dst.as_str()))
                || (SAFETY_RELATIONS.contains(&e.rel)
                    && (drugs.contains(e.src.as_str()) || drugs.contains(e.dst.as_str())))
        })
        .cloned()
        .collect();
    RetrievedSubgraph {
        node_ids,
        scores: scored.into_iter().map(|(_, s)| s).collect(),
        edges,
    }
}

pub fn retrieve_subgraph(graph: &KnowledgeGraph, record: &ClinicalRecord, k: usize) -> RetrievedSubgraph {
    retrieve_subgraph_for(graph, &RecordQuery::from_record(record), k, ScoreWeights::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineHit {
    pub passage_node_id: String,
    pub similarity: f64,
}

/// Top-`m` guideline passages by cosine similarity with `h_star`, ties by id.
pub fn retrieve_guidelines(graph: &KnowledgeGraph, h_star: &Embedding, m: usize) -> Vec<GuidelineHit> {
    let mut hits: Vec<GuidelineHit> = (0..graph.node_count())
        .filter_map(|i| {
            let passage = graph.features_at(i).passage.as_ref()?;
            Some(GuidelineHit {
                passage_node_id: graph.node_at(i).id.clone(),
                similarity: cosine(h_star, passage) + 0.0,
            })
        })
        .collect();
    hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    hits.truncate(m);
    hits
}

/// Nodes and in-fragment edges of a subgraph, ready for the encoder.
pub fn encode_retrieved(graph: &KnowledgeGraph, subgraph: &RetrievedSubgraph) -> Embedding {
    let nodes: Vec<&KGNode> = subgraph.node_ids.iter().filter_map(|id| graph.node(id)).collect();
    let edges: Vec<&KGEdge> = subgraph.edges.iter().collect();
    encode_subgraph(&nodes, &edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub m: usize,
    pub gate: FusionGate,
    pub weights: ScoreWeights,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: 10,
            m: 3,
            gate: FusionGate::default(),
            weights: ScoreWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalContext {
    pub h_text: Embedding,
    pub h_graph: Embedding,
    pub h_star: Embedding,
    pub subgraph: RetrievedSubgraph,
    pub guideline_hits: Vec<GuidelineHit>,
}

/// One line of the line-delimited context report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextLine {
    Node { id: String, score: f64 },
    Passage { id: String, similarity: f64 },
}

impl RetrievalContext {
    pub fn report(&self) -> Vec<ContextLine> {
        let nodes = self
            .subgraph
            .node_ids
            .iter()
            .zip(&self.subgraph.scores)
            .map(|(id, &score)| ContextLine::Node {
                id: id.clone(),
                score,
            });
        let passages = self.guideline_hits.iter().map(|h| ContextLine::Passage {
            id: h.passage_node_id.clone(),
            similarity: h.similarity,
        });
        nodes.chain(passages).collect()
    }

    pub fn report_jsonl(&self) -> String {
        self.report()
            .iter()
            .map(|l| serde_json::to_string(l).expect("context line") + "\n")
            .collect()
    }
}

pub fn build_context_for(
    graph: &KnowledgeGraph,
    query: &RecordQuery,
    config: &RetrievalConfig,
) -> RetrievalContext {
    let subgraph = retrieve_subgraph_for(graph, query, config.k, config.weights);
    let h_graph = encode_retrieved(graph, &subgraph);
    let h_star = fuse(&query.h_x, &h_graph, config.gate);
    let guideline_hits = retrieve_guidelines(graph, &h_star, config.m);
    RetrievalContext {
        h_text: query.h_x.clone(),
        h_graph,
        h_star,
        subgraph,
        guideline_hits,
    }
}

pub fn build_context(
    record: &ClinicalRecord,
    graph: &KnowledgeGraph,
    gate: FusionGate,
    k: usize,
    m: usize,
) -> RetrievalContext {
    let config = RetrievalConfig {
        k,
        m,
        gate,
        ..Default::default()
    };
    build_context_for(graph, &RecordQuery::from_record(record), &config)
}
