//! The dental–pharmacology knowledge graph: typed nodes, typed attributed
//! edges, adjacency indexes and the phrase lexicon used by the record parser.
//!
//! Graphs are read from a line-delimited JSON file (see [`KnowledgeGraph::from_jsonl_str`])
//! and are immutable once built. Every structural invariant is checked before
//! a graph value is handed out, so the rest of the crate can index without
//! re-validating.

mod load;
mod model;
pub mod synth;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

pub use load::KgError;
pub use model::{
    AttrValue, Attrs, DoseRule, GraphRecord, KGEdge, KGNode, NodeKind, Relation, TherapyLine,
};

use crate::embedding::{embed_text, Embedding};
use crate::parser::tokenize::raw_tokens;

/// Precomputed per-node retrieval features.
#[derive(Debug, Clone)]
pub(crate) struct NodeFeatures {
    /// Embedding of name and synonyms.
    pub lexical: Embedding,
    /// Token set of name and synonyms.
    pub tokens: BTreeSet<String>,
    /// Embedding of the passage body, guideline passages only.
    pub passage: Option<Embedding>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    /// Sorted by id.
    nodes: Vec<KGNode>,
    by_id: HashMap<String, usize>,
    edges: Vec<KGEdge>,
    out_adj: HashMap<(usize, Relation), Vec<usize>>,
    in_adj: HashMap<(usize, Relation), Vec<usize>>,
    synonym_index: HashMap<Vec<String>, Vec<usize>>,
    max_phrase_tokens: usize,
    dose_rules: HashMap<usize, Vec<DoseRule>>,
    tooth_by_fdi: HashMap<String, usize>,
    features: Vec<NodeFeatures>,
}

impl KnowledgeGraph {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_jsonl_str(&text)
    }

    /// Parses the line-delimited graph format. Blank lines are skipped; edges
    /// may reference nodes declared later in the file.
    pub fn from_jsonl_str(text: &str) -> Result<Self, KgError> {
        let (nodes, edges) = load::parse_records(text)?;
        Self::from_parts(nodes, edges)
    }

    /// Validates and indexes a node/edge set. Fails on the first violated
    /// invariant; nothing partial is returned.
    pub fn from_parts(mut nodes: Vec<KGNode>, edges: Vec<KGEdge>) -> Result<Self, KgError> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        load::check_nodes(&nodes)?;
        let by_id: HashMap<String, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        load::check_edges(&nodes, &by_id, &edges)?;

        let mut out_adj: HashMap<(usize, Relation), Vec<usize>> = HashMap::new();
        let mut in_adj: HashMap<(usize, Relation), Vec<usize>> = HashMap::new();
        for (ei, e) in edges.iter().enumerate() {
            out_adj.entry((by_id[&e.src], e.rel)).or_default().push(ei);
            in_adj.entry((by_id[&e.dst], e.rel)).or_default().push(ei);
        }

        let dose_rules = load::collect_dose_rules(&nodes, &by_id, &edges)?;

        let mut synonym_index: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
        let mut max_phrase_tokens = 0;
        for (i, node) in nodes.iter().enumerate() {
            for phrase in std::iter::once(&node.name).chain(node.synonyms.iter()) {
                let key: Vec<String> = raw_tokens(phrase).into_iter().map(|t| t.text).collect();
                if key.is_empty() {
                    continue;
                }
                max_phrase_tokens = max_phrase_tokens.max(key.len());
                let ids = synonym_index.entry(key).or_default();
                if !ids.contains(&i) {
                    ids.push(i);
                }
            }
        }

        let tooth_by_fdi = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::ToothSite)
            .filter_map(|(i, n)| Some((n.attrs.get("fdi")?.as_str()?.to_owned(), i)))
            .collect();

        let features = nodes
            .iter()
            .map(|n| {
                let lexical_text = n.lexical_text();
                NodeFeatures {
                    lexical: embed_text(&lexical_text),
                    tokens: raw_tokens(&lexical_text).into_iter().map(|t| t.text).collect(),
                    passage: match n.kind {
                        NodeKind::GuidelinePassage => n.passage_text().map(embed_text),
                        _ => None,
                    },
                }
            })
            .collect();

        Ok(KnowledgeGraph {
            nodes,
            by_id,
            edges,
            out_adj,
            in_adj,
            synonym_index,
            max_phrase_tokens,
            dose_rules,
            tooth_by_fdi,
            features,
        })
    }

    /// Serializes back to the line format: nodes (by id) then edges (load order).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&serde_json::to_string(&GraphRecord::Node(n.clone())).expect("node"));
            out.push('\n');
        }
        for e in &self.edges {
            out.push_str(&serde_json::to_string(&GraphRecord::Edge(e.clone())).expect("edge"));
            out.push('\n');
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// All nodes in ascending id order.
    pub fn nodes(&self) -> &[KGNode] {
        &self.nodes
    }

    /// All edges in file order.
    pub fn edges(&self) -> &[KGEdge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&KGNode> {
        self.by_id.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn require(&self, id: &str) -> Result<&KGNode, KgError> {
        self.node(id).ok_or_else(|| KgError::UnknownNode(id.to_owned()))
    }

    pub fn require_kind(&self, id: &str, kind: NodeKind) -> Result<&KGNode, KgError> {
        let node = self.require(id)?;
        if node.kind != kind {
            return Err(KgError::KindMismatch {
                id: id.to_owned(),
                expected: kind,
                actual: node.kind,
            });
        }
        Ok(node)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &KGNode> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    /// Node counts per kind.
    pub fn kind_counts(&self) -> Vec<(NodeKind, usize)> {
        NodeKind::ALL
            .iter()
            .map(|&k| (k, self.nodes.iter().filter(|n| n.kind == k).count()))
            .collect()
    }

    /// Edges and the node at the other end, ordered by (other id, relation).
    /// `interacts_with` edges are reported from either endpoint; other
    /// relations only from their source.
    pub fn neighbors(
        &self,
        id: &str,
        rel: Option<Relation>,
    ) -> Result<Vec<(&KGEdge, &KGNode)>, KgError> {
        let idx = *self
            .by_id
            .get(id)
            .ok_or_else(|| KgError::UnknownNode(id.to_owned()))?;
        let mut out = Vec::new();
        for r in Relation::ALL {
            if rel.is_some_and(|want| want != r) {
                continue;
            }
            for &ei in self.out_adj.get(&(idx, r)).into_iter().flatten() {
                let e = &self.edges[ei];
                out.push((e, &self.nodes[self.by_id[&e.dst]]));
            }
            if r.is_symmetric() {
                for &ei in self.in_adj.get(&(idx, r)).into_iter().flatten() {
                    let e = &self.edges[ei];
                    out.push((e, &self.nodes[self.by_id[&e.src]]));
                }
            }
        }
        out.sort_by(|(ea, na), (eb, nb)| na.id.cmp(&nb.id).then(ea.rel.cmp(&eb.rel)));
        Ok(out)
    }

    /// Edges arriving at `id` with relation `rel`, paired with their source.
    pub fn incoming(&self, id: &str, rel: Relation) -> Vec<(&KGEdge, &KGNode)> {
        let Some(&idx) = self.by_id.get(id) else {
            return Vec::new();
        };
        let mut out: Vec<_> = self
            .in_adj
            .get(&(idx, rel))
            .into_iter()
            .flatten()
            .map(|&ei| {
                let e = &self.edges[ei];
                (e, &self.nodes[self.by_id[&e.src]])
            })
            .collect();
        out.sort_by(|a, b| a.1.id.cmp(&b.1.id));
        out
    }

    /// The dose rule whose age band contains `age_months`, if any.
    pub fn dose_rule_for(&self, drug: &str, age_months: u32) -> Result<Option<&DoseRule>, KgError> {
        self.require_kind(drug, NodeKind::Drug)?;
        Ok(self
            .dose_rules
            .get(&self.by_id[drug])
            .and_then(|rules| rules.iter().find(|r| r.covers_age(age_months))))
    }

    /// Every dose rule of a drug, ordered by band start.
    pub fn dose_rules(&self, drug: &str) -> &[DoseRule] {
        self.by_id
            .get(drug)
            .and_then(|i| self.dose_rules.get(i))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Drug classes a drug is a member of.
    pub fn drug_classes(&self, drug: &str) -> Vec<&KGNode> {
        self.neighbors(drug, Some(Relation::MemberOf))
            .map(|v| v.into_iter().map(|(_, n)| n).collect())
            .unwrap_or_default()
    }

    /// ToothSite node carrying the given two-digit FDI code.
    pub fn tooth_by_fdi(&self, code: &str) -> Option<&KGNode> {
        self.tooth_by_fdi.get(code).map(|&i| &self.nodes[i])
    }

    /// Nodes whose name or a synonym tokenizes to exactly `tokens`, by id.
    pub fn lookup_phrase(&self, tokens: &[String]) -> Option<&[usize]> {
        self.synonym_index.get(tokens).map(Vec::as_slice)
    }

    /// Longest phrase length (in tokens) in the lexicon.
    pub fn max_phrase_tokens(&self) -> usize {
        self.max_phrase_tokens
    }

    pub(crate) fn node_at(&self, idx: usize) -> &KGNode {
        &self.nodes[idx]
    }

    pub(crate) fn features_at(&self, idx: usize) -> &NodeFeatures {
        &self.features[idx]
    }
}
