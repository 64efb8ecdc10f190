//! Knowledge-graph guided parsing of pediatric dental visit records and
//! safety-validated antibiotic recommendation.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`parser`] turns record text into negation-aware findings linked to
//!    graph nodes.
//! 2. [`retrieval`] ranks graph entities and guideline passages against the
//!    record.
//! 3. [`recommend`] proposes drug, dose, frequency and duration candidates
//!    and keeps only those that pass [`safety`] validation.
//! 4. [`eval`] generates synthetic cohorts and scores the whole pipeline.

pub mod config;
pub mod embedding;
pub mod eval;
pub mod fixtures;
pub mod kg;
pub mod numeric;
pub mod parser;
pub mod recommend;
pub mod retrieval;
pub mod safety;

pub use embedding::{cosine, embed_text, encode_subgraph, fuse, Embedding, FusionGate};
pub use kg::{KGEdge, KGNode, KgError, KnowledgeGraph, NodeKind, Relation};
pub use parser::{extract, ClinicalRecord, PatientProfile, RecordParser, StructuredFindings};
pub use retrieval::{build_context, RetrievalConfig, RetrievalContext};
pub use config::EngineConfig;
pub use recommend::{recommend, Decision, Pipeline, Variant};
pub use safety::{validate, AntibioticCandidate, SafetyClassifier, SafetyReport, SafetyWeights, Verdict};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/graph.md")]
    struct Graph;
    #[doc = include_str!("../../../book/src/parsing.md")]
    struct Parsing;
    #[doc = include_str!("../../../book/src/retrieval.md")]
    struct Retrieval;
    #[doc = include_str!("../../../book/src/safety.md")]
    struct Safety;
    #[doc = include_str!("../../../book/src/pipeline.md")]
    struct Pipeline;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    struct Evaluation;
    #[doc = include_str!("../../../book/src/operations.md")]
    struct Operations;
}
