use std::collections::{HashMap, HashSet};

use super::model::{AttrValue, DoseRule, GraphRecord, KGEdge, KGNode, NodeKind, Relation};

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{id}` is a {actual}, expected {expected}")]
    KindMismatch {
        id: String,
        expected: NodeKind,
        actual: NodeKind,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn integrity(msg: impl Into<String>) -> KgError {
    KgError::Integrity(msg.into())
}

pub(super) fn parse_records(text: &str) -> Result<(Vec<KGNode>, Vec<KGEdge>), KgError> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let record: GraphRecord = serde_json::from_str(line).map_err(|e| KgError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        match record {
            GraphRecord::Node(n) => nodes.push(n),
            GraphRecord::Edge(e) => edges.push(e),
        }
    }
    Ok((nodes, edges))
}

fn int_attr(node: &KGNode, key: &str) -> Result<i64, KgError> {
    node.attrs
        .get(key)
        .and_then(AttrValue::as_i64)
        .ok_or_else(|| integrity(format!("{} `{}` needs integer attr `{key}`", node.kind, node.id)))
}

/// Nodes must already be sorted by id.
pub(super) fn check_nodes(nodes: &[KGNode]) -> Result<(), KgError> {
    let mut fdi_seen = HashSet::new();
    for pair in nodes.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(integrity(format!("duplicate node id `{}`", pair[0].id)));
        }
    }
    for n in nodes {
        if n.id.trim().is_empty() {
            return Err(integrity("empty node id"));
        }
        if n.name.trim().is_empty() {
            return Err(integrity(format!("node `{}` has an empty name", n.id)));
        }
        match n.kind {
            NodeKind::AgeBand => {
                let lo = int_attr(n, "min_months")?;
                let hi = int_attr(n, "max_months")?;
                if lo < 0 || lo > hi {
                    return Err(integrity(format!(
                        "age band `{}` has invalid range [{lo}, {hi}]",
                        n.id
                    )));
                }
            }
            NodeKind::GuidelinePassage => {
                if n.passage_text().is_none_or(|t| t.trim().is_empty()) {
                    return Err(integrity(format!("passage `{}` has no `text` attr", n.id)));
                }
            }
            NodeKind::ToothSite => {
                let code = n.attrs.get("fdi").and_then(AttrValue::as_str).ok_or_else(|| {
                    integrity(format!("tooth site `{}` needs string attr `fdi`", n.id))
                })?;
                if code.len() != 2 || !code.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(integrity(format!("tooth site `{}` has bad fdi `{code}`", n.id)));
                }
                if !fdi_seen.insert(code.to_owned()) {
                    return Err(integrity(format!("fdi code `{code}` used twice")));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn edge_name(e: &KGEdge) -> String {
    format!("{} -{}-> {}", e.src, e.rel, e.dst)
}

fn positive_number(e: &KGEdge, key: &str) -> Result<f64, KgError> {
    match e.attrs.get(key).and_then(AttrValue::as_f64) {
        Some(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(integrity(format!("{} needs positive attr `{key}`", edge_name(e)))),
    }
}

fn positive_int(e: &KGEdge, key: &str) -> Result<u32, KgError> {
    match e.attrs.get(key).and_then(AttrValue::as_i64) {
        Some(v) if v > 0 && v <= u32::MAX as i64 => Ok(v as u32),
        _ => Err(integrity(format!(
            "{} needs positive integer attr `{key}`",
            edge_name(e)
        ))),
    }
}

pub(super) fn check_edges(
    nodes: &[KGNode],
    by_id: &HashMap<String, usize>,
    edges: &[KGEdge],
) -> Result<(), KgError> {
    let mut interaction_pairs = HashSet::new();
    for e in edges {
        let src = by_id
            .get(&e.src)
            .map(|&i| &nodes[i])
            .ok_or_else(|| integrity(format!("{}: dangling endpoint `{}`", edge_name(e), e.src)))?;
        let dst = by_id
            .get(&e.dst)
            .map(|&i| &nodes[i])
            .ok_or_else(|| integrity(format!("{}: dangling endpoint `{}`", edge_name(e), e.dst)))?;
        let (src_kinds, dst_kinds) = e.rel.endpoint_kinds();
        if !src_kinds.contains(&src.kind) || !dst_kinds.contains(&dst.kind) {
            return Err(integrity(format!(
                "{}: relation does not accept {} -> {}",
                edge_name(e),
                src.kind,
                dst.kind
            )));
        }
        match e.rel {
            Relation::Treats => {
                if e.line().is_none() {
                    return Err(integrity(format!(
                        "{} needs attr line in {{first, second}}",
                        edge_name(e)
                    )));
                }
            }
            Relation::InteractsWith => {
                match e.severity() {
                    Some(s) if (0.0..=1.0).contains(&s) => {}
                    _ => {
                        return Err(integrity(format!(
                            "{} needs severity in [0, 1]",
                            edge_name(e)
                        )))
                    }
                }
                if e.src == e.dst {
                    return Err(integrity(format!("{}: self interaction", edge_name(e))));
                }
                let key = if e.src < e.dst {
                    (e.src.as_str(), e.dst.as_str())
                } else {
                    (e.dst.as_str(), e.src.as_str())
                };
                if !interaction_pairs.insert(key) {
                    return Err(integrity(format!(
                        "{}: interaction pair stored more than once",
                        edge_name(e)
                    )));
                }
            }
            Relation::HasDoseRule => {
                let lo = positive_number(e, "min_mg_per_kg_day")?;
                let hi = positive_number(e, "max_mg_per_kg_day")?;
                positive_number(e, "abs_max_mg_day")?;
                if lo > hi {
                    return Err(integrity(format!("{}: min dose above max dose", edge_name(e))));
                }
                if positive_int(e, "freq_min_per_day")? > positive_int(e, "freq_max_per_day")? {
                    return Err(integrity(format!("{}: frequency range inverted", edge_name(e))));
                }
                if positive_int(e, "duration_min_days")? > positive_int(e, "duration_max_days")? {
                    return Err(integrity(format!("{}: duration range inverted", edge_name(e))));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

pub(super) fn collect_dose_rules(
    nodes: &[KGNode],
    by_id: &HashMap<String, usize>,
    edges: &[KGEdge],
) -> Result<HashMap<usize, Vec<DoseRule>>, KgError> {
    let mut rules: HashMap<usize, Vec<DoseRule>> = HashMap::new();
    for e in edges.iter().filter(|e| e.rel == Relation::HasDoseRule) {
        let band = &nodes[by_id[&e.dst]];
        let rule = DoseRule {
            drug: e.src.clone(),
            age_band: e.dst.clone(),
            min_months: int_attr(band, "min_months")? as u32,
            max_months: int_attr(band, "max_months")? as u32,
            min_mg_per_kg_day: positive_number(e, "min_mg_per_kg_day")?,
            max_mg_per_kg_day: positive_number(e, "max_mg_per_kg_day")?,
            abs_max_mg_day: positive_number(e, "abs_max_mg_day")?,
            freq_min_per_day: positive_int(e, "freq_min_per_day")?,
            freq_max_per_day: positive_int(e, "freq_max_per_day")?,
            duration_min_days: positive_int(e, "duration_min_days")?,
            duration_max_days: positive_int(e, "duration_max_days")?,
        };
        rules.entry(by_id[&e.src]).or_default().push(rule);
    }
    for list in rules.values_mut() {
        list.sort_by(|a, b| a.min_months.cmp(&b.min_months).then(a.age_band.cmp(&b.age_band)));
        for pair in list.windows(2) {
            if pair[1].min_months <= pair[0].max_months {
                return Err(integrity(format!(
                    "drug `{}` has overlapping age bands `{}` and `{}`",
                    pair[0].drug, pair[0].age_band, pair[1].age_band
                )));
            }
        }
    }
    Ok(rules)
}
