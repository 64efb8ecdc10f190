//! Bundled fixture data.
//!
//! `kg_mini` is the small graph used throughout the unit tests (four drugs,
//! two conditions, every FDI tooth). `kg_dental` extends it with the
//! comorbidities, comedications and extra conditions the synthetic cohort
//! draws on.

use crate::kg::KnowledgeGraph;

pub const KG_MINI: &str = include_str!("../fixtures/kg_mini.jsonl");
pub const KG_DENTAL: &str = include_str!("../fixtures/kg_dental.jsonl");
pub const ABBREVIATIONS: &str = include_str!("../fixtures/abbreviations.tsv");

pub fn kg_mini() -> KnowledgeGraph {
    KnowledgeGraph::from_jsonl_str(KG_MINI).expect("bundled kg_mini is valid")
}

pub fn kg_dental() -> KnowledgeGraph {
    KnowledgeGraph::from_jsonl_str(KG_DENTAL).expect("bundled kg_dental is valid")
}

/// The reference abscess visit: a six-year-old, 20 kg, no allergies.
pub fn abscess_record() -> crate::ClinicalRecord {
    crate::ClinicalRecord::new(
        "R1",
        "Swelling and pain near tooth #85 for three days.",
        "Fever present. Sinus tract on the buccal gingiva. No trismus.",
        "Periapical radiolucency at #85.",
        crate::PatientProfile::new(72, 20.0),
    )
    .expect("fixture record is valid")
}
