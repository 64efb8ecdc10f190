//! Outputs compared against files written by tools/golden_embeddings.py.

use dentkg::embedding::DIM;
use dentkg::retrieval::{build_context_for, ContextLine, RecordQuery, RetrievalConfig};
use dentkg::{embed_text, encode_subgraph, fixtures, Embedding, KGEdge, KGNode, NodeKind, Relation};

const EMBEDDINGS_BIN: &[u8] = include_bytes!("../fixtures/golden/embeddings.bin");
const EMBEDDINGS_TXT: &str = include_str!("../fixtures/golden/embeddings.txt");
const PATH_BIN: &[u8] = include_bytes!("../fixtures/golden/path_graph.bin");
const CONTEXT_R1: &str = include_str!("../fixtures/golden/context_r1.jsonl");

fn vectors(bytes: &[u8]) -> Vec<Embedding> {
    bytes
        .chunks(DIM * 8)
        .map(|c| Embedding::from_le_bytes(c).expect("256 little-endian doubles"))
        .collect()
}

#[test]
fn text_embeddings_match_reference() {
    let expected = vectors(EMBEDDINGS_BIN);
    let labels: Vec<&str> = EMBEDDINGS_TXT.lines().collect();
    assert_eq!(labels.len(), expected.len());
    for (label, want) in labels.iter().zip(&expected) {
        assert_eq!(&embed_text(label), want, "{label}");
    }
}

#[test]
fn path_graph_encoding_matches_reference() {
    let a = KGNode::new("a", NodeKind::Symptom, "swelling").with_synonyms(["swollen"]);
    let b = KGNode::new("b", NodeKind::Condition, "periapical abscess")
        .with_synonyms(["dental abscess", "apical abscess"]);
    let c = KGNode::new("c", NodeKind::Drug, "amoxicillin").with_synonyms(["amox", "amoxil"]);
    let ab = KGEdge::new("a", Relation::Indicates, "b");
    let cb = KGEdge::new("c", Relation::Treats, "b");
    let got = encode_subgraph(&[&c, &a, &b], &[&cb, &ab]);
    assert_eq!(got, vectors(PATH_BIN)[0]);
}

#[test]
fn r1_context_matches_reference() {
    let g = fixtures::kg_mini();
    let r = fixtures::abscess_record();
    let ctx = build_context_for(&g, &RecordQuery::from_record(&r), &RetrievalConfig::default());
    let want: Vec<ContextLine> = CONTEXT_R1
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(ctx.report(), want);
    assert_eq!(ctx.report_jsonl(), CONTEXT_R1);
}
