//! Seeded generator for benchmark-scale graphs.
//!
//! The output keeps every loader invariant (typed endpoints, non-overlapping
//! dose bands per drug, single storage of interaction pairs) and hits the
//! requested node and edge counts exactly. Names are synthetic syllable
//! strings; nothing here is pharmacological data.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{KGEdge, KGNode, KgError, KnowledgeGraph, NodeKind, Relation};

/// Node and edge totals to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleTarget {
    pub nodes: usize,
    pub edges: usize,
}

impl Default for ScaleTarget {
    fn default() -> Self {
        ScaleTarget {
            nodes: 1200,
            edges: 5600,
        }
    }
}

const SYLLABLES: &[&str] = &[
    "ba", "cor", "den", "fa", "gli", "hex", "ir", "jo", "kal", "lum", "mor", "nex", "ob", "pra",
    "qui", "ros", "sil", "tor", "ul", "ven", "wy", "xan", "yo", "zef",
];

fn word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    (0..syllables)
        .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
        .collect()
}

const BANDS: [(&str, i64, i64); 4] = [
    ("band_0_5m", 0, 5),
    ("band_6m_2y", 6, 23),
    ("band_2_12y", 24, 143),
    ("band_12_18y", 144, 216),
];

/// Builds a random graph with exactly `target` nodes and edges.
///
/// Small node targets are clamped up to the minimum the fixed scaffolding
/// needs (age bands plus one node of every other kind), so the node count can
/// exceed a tiny target.
pub fn scaled_graph(seed: u64, target: ScaleTarget) -> Result<KnowledgeGraph, KgError> {
    let (nodes, edges) = scaled_parts(seed, target);
    KnowledgeGraph::from_parts(nodes, edges)
}

pub fn scaled_parts(seed: u64, target: ScaleTarget) -> (Vec<KGNode>, Vec<KGEdge>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = target.nodes.max(BANDS.len() + 7);
    let mut nodes = Vec::with_capacity(n);

    for (id, lo, hi) in BANDS {
        nodes.push(
            KGNode::new(id, NodeKind::AgeBand, format!("age band {lo} to {hi} months"))
                .with_attr("min_months", lo)
                .with_attr("max_months", hi),
        );
    }
    let free = n - BANDS.len();
    // Shares of the remaining budget; symptoms absorb the rounding.
    let mut counts = [
        (NodeKind::Drug, free * 10 / 100),
        (NodeKind::DrugClass, free * 2 / 100),
        (NodeKind::Condition, free * 8 / 100),
        (NodeKind::AllergyClass, free * 2 / 100),
        (NodeKind::ToothSite, (free * 4 / 100).min(90)),
        (NodeKind::GuidelinePassage, free * 12 / 100),
        (NodeKind::Symptom, 0),
    ];
    for c in counts.iter_mut() {
        c.1 = c.1.max(1);
    }
    let used: usize = counts[..6].iter().map(|c| c.1).sum();
    counts[6].1 = free.saturating_sub(used).max(1);
    let mut ids: Vec<Vec<String>> = vec![Vec::new(); counts.len()];
    for (slot, &(kind, count)) in counts.iter().enumerate() {
        for i in 0..count {
            let id = format!("{}_{i:04}", format!("{kind:?}").to_lowercase());
            let name = format!("{} {}", word(&mut rng, 2), word(&mut rng, 3));
            let mut node = KGNode::new(&id, kind, name).with_synonyms([word(&mut rng, 3)]);
            match kind {
                NodeKind::ToothSite => {
                    node = node.with_attr("fdi", format!("{:02}", 10 + i).as_str());
                }
                NodeKind::GuidelinePassage => {
                    let text: Vec<String> = (0..12).map(|_| word(&mut rng, 2)).collect();
                    node = node
                        .with_attr("text", text.join(" ").as_str())
                        .with_attr("source", "synthetic");
                }
                _ => {}
            }
            ids[slot].push(id);
            nodes.push(node);
        }
    }
    let [drugs, classes, conditions, allergies, teeth, passages, symptoms] = &ids[..] else {
        unreachable!()
    };

    let mut edges = Vec::with_capacity(target.edges);
    let mut seen: HashSet<(String, Relation, String)> = HashSet::new();
    let mut push = |edges: &mut Vec<KGEdge>, e: KGEdge| {
        let key = if e.rel.is_symmetric() && e.dst < e.src {
            (e.dst.clone(), e.rel, e.src.clone())
        } else {
            (e.src.clone(), e.rel, e.dst.clone())
        };
        if seen.insert(key) {
            edges.push(e);
            true
        } else {
            false
        }
    };

    for d in drugs {
        let class = classes.choose(&mut rng).expect("classes");
        push(&mut edges, KGEdge::new(d, Relation::MemberOf, class));
        // Each drug covers a random contiguous run of bands.
        let first = rng.gen_range(0..BANDS.len());
        for (band, _, _) in &BANDS[first..] {
            let lo = rng.gen_range(5..40) as f64;
            let hi = lo + rng.gen_range(5..50) as f64;
            let fmin = rng.gen_range(1..=3i64);
            let dmin = rng.gen_range(3..=7i64);
            push(
                &mut edges,
                KGEdge::new(d, Relation::HasDoseRule, *band)
                    .with_attr("min_mg_per_kg_day", lo)
                    .with_attr("max_mg_per_kg_day", hi)
                    .with_attr("abs_max_mg_day", rng.gen_range(500..4000) as f64)
                    .with_attr("freq_min_per_day", fmin)
                    .with_attr("freq_max_per_day", fmin + rng.gen_range(0..=1i64))
                    .with_attr("duration_min_days", dmin)
                    .with_attr("duration_max_days", dmin + rng.gen_range(0..=3i64)),
            );
        }
    }
    for (i, c) in classes.iter().enumerate() {
        let allergy = &allergies[i % allergies.len()];
        push(&mut edges, KGEdge::new(c, Relation::CrossReactive, allergy));
    }

    // Fill the remaining budget with a rotating mix of relation kinds.
    let mut attempts = 0usize;
    while edges.len() < target.edges && attempts < target.edges * 50 {
        attempts += 1;
        let e = match attempts % 6 {
            0 => KGEdge::new(
                drugs.choose(&mut rng).expect("drugs"),
                Relation::Treats,
                conditions.choose(&mut rng).expect("conditions"),
            )
            .with_attr("line", if rng.gen_bool(0.4) { "first" } else { "second" }),
            1 => {
                let a = drugs.choose(&mut rng).expect("drugs");
                let b = drugs.choose(&mut rng).expect("drugs");
                if a == b {
                    continue;
                }
                KGEdge::new(a, Relation::InteractsWith, b)
                    .with_attr("severity", (rng.gen_range(0..=100) as f64) / 100.0)
            }
            2 => KGEdge::new(
                drugs.choose(&mut rng).expect("drugs"),
                Relation::ContraindicatedIn,
                conditions.choose(&mut rng).expect("conditions"),
            ),
            3 => KGEdge::new(
                passages.choose(&mut rng).expect("passages"),
                Relation::Supports,
                if rng.gen_bool(0.5) {
                    drugs.choose(&mut rng).expect("drugs")
                } else {
                    conditions.choose(&mut rng).expect("conditions")
                },
            ),
            4 => KGEdge::new(
                symptoms.choose(&mut rng).expect("symptoms"),
                Relation::LocatedAt,
                teeth.choose(&mut rng).expect("teeth"),
            ),
            _ => KGEdge::new(
                symptoms.choose(&mut rng).expect("symptoms"),
                Relation::Indicates,
                conditions.choose(&mut rng).expect("conditions"),
            ),
        };
        push(&mut edges, e);
    }
    edges.truncate(target.edges);
    (nodes, edges)
}
