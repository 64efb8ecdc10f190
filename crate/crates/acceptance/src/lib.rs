//! Independent oracles for the acceptance suite.
//!
//! Nothing here calls into the engine's rule, retrieval or scoring code. The
//! rule oracle reads the graph straight from its line-delimited source; the
//! retrieval oracles rescore every node from the public embedding
//! primitives and sort from scratch.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use dentkg::{cosine, embed_text, Embedding, KnowledgeGraph, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq)]
struct RawRule {
    min_months: u32,
    max_months: u32,
    min_dose: f64,
    max_dose: f64,
    abs_max: f64,
    freq: (u32, u32),
    duration: (u32, u32),
}

/// Hard-rule lookup tables built from raw JSON lines.
#[derive(Debug, Default)]
pub struct RuleOracle {
    out_edges: BTreeMap<(String, String), Vec<String>>,
    bands: BTreeMap<String, (u32, u32)>,
    rule_edges: Vec<(String, String, Value)>,
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("missing numeric `{key}` in {v}"))
}

impl RuleOracle {
    pub fn from_jsonl(text: &str) -> Self {
        let mut o = RuleOracle::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let v: Value = serde_json::from_str(line).expect("graph line is JSON");
            if let Some(n) = v.get("node") {
                if n["kind"] == "AgeBand" {
                    let a = &n["attrs"];
                    o.bands.insert(
                        n["id"].as_str().unwrap().to_owned(),
                        (num(a, "min_months") as u32, num(a, "max_months") as u32),
                    );
                }
            } else if let Some(e) = v.get("edge") {
                let src = e["src"].as_str().unwrap().to_owned();
                let rel = e["rel"].as_str().unwrap().to_owned();
                let dst = e["dst"].as_str().unwrap().to_owned();
                if rel == "has_dose_rule" {
                    o.rule_edges.push((src.clone(), dst.clone(), e["attrs"].clone()));
                }
                o.out_edges.entry((src, rel)).or_default().push(dst);
            }
        }
        o
    }

    fn targets(&self, src: &str, rel: &str) -> &[String] {
        self.out_edges
            .get(&(src.to_owned(), rel.to_owned()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn rule(&self, drug: &str, age_months: u32) -> Option<RawRule> {
        self.rule_edges
            .iter()
            .filter(|(src, _, _)| src == drug)
            .map(|(_, band, a)| {
                let (lo, hi) = self.bands[band];
                RawRule {
                    min_months: lo,
                    max_months: hi,
                    min_dose: num(a, "min_mg_per_kg_day"),
                    max_dose: num(a, "max_mg_per_kg_day"),
                    abs_max: num(a, "abs_max_mg_day"),
                    freq: (num(a, "freq_min_per_day") as u32, num(a, "freq_max_per_day") as u32),
                    duration: (num(a, "duration_min_days") as u32, num(a, "duration_max_days") as u32),
                }
            })
            .filter(|r| r.min_months <= age_months && age_months <= r.max_months)
            .min_by_key(|r| r.min_months)
    }

    /// Allergy classes the drug conflicts with, directly or through a class
    /// it belongs to.
    pub fn conflicting_allergies(&self, drug: &str) -> BTreeSet<String> {
        let mut sources = vec![drug.to_owned()];
        sources.extend(self.targets(drug, "member_of").iter().cloned());
        sources
            .iter()
            .flat_map(|s| self.targets(s, "cross_reactive").iter().cloned())
            .collect()
    }

    /// Violation names in declaration order of the engine's enum.
    pub fn violations(&self, c: &dentkg::AntibioticCandidate, p: &dentkg::PatientProfile) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.conflicting_allergies(&c.drug).iter().any(|a| p.allergies.contains(a)) {
            out.push("AllergyConflict");
        }
        let rule = self.rule(&c.drug, p.age_months);
        match rule {
            Some(r) if c.dose_mg_per_kg_day * p.weight_kg > r.abs_max => out.push("AbsoluteDoseExceeded"),
            Some(_) => {}
            None => out.push("NoDoseRuleForAge"),
        }
        if self
            .targets(&c.drug, "contraindicated_in")
            .iter()
            .any(|x| p.comorbidities.contains(x))
        {
            out.push("ComorbidityContraindication");
        }
        if let Some(r) = rule {
            if !(r.freq.0 <= c.frequency_per_day && c.frequency_per_day <= r.freq.1) {
                out.push("FrequencyOutOfRange");
            }
            if !(r.duration.0 <= c.duration_days && c.duration_days <= r.duration.1) {
                out.push("DurationOutOfRange");
            }
        }
        out
    }

    /// Band membership plus the absolute cap, the dosage-error definition.
    pub fn dose_error(&self, c: &dentkg::AntibioticCandidate, p: &dentkg::PatientProfile) -> bool {
        match self.rule(&c.drug, p.age_months) {
            None => true,
            Some(r) => {
                !(r.min_dose <= c.dose_mg_per_kg_day && c.dose_mg_per_kg_day <= r.max_dose)
                    || c.dose_mg_per_kg_day * p.weight_kg > r.abs_max
            }
        }
    }
}

/// Share of `emissions` that carry at least one violation; 0 when empty.
pub fn recount_rate<T>(emissions: &[T], violates: impl Fn(&T) -> bool) -> f64 {
    if emissions.is_empty() {
        return 0.0;
    }
    emissions.iter().filter(|e| violates(e)).count() as f64 / emissions.len() as f64
}

fn token_set(text: &str) -> BTreeSet<String> {
    dentkg::parser::raw_tokens(text).into_iter().map(|t| t.text).collect()
}

/// Entity ranking from scratch: 0.7 cosine + 0.3 token Jaccard over every
/// non-passage node, best first, ties by id.
pub fn brute_force_entities(graph: &KnowledgeGraph, text: &str, k: usize) -> Vec<(String, f64)> {
    let h = embed_text(text);
    let q = token_set(text);
    let mut all: Vec<(String, f64)> = graph
        .nodes()
        .iter()
        .filter(|n| n.kind != NodeKind::GuidelinePassage)
        .map(|n| {
            let lex = n.lexical_text();
            let t = token_set(&lex);
            let union = t.union(&q).count();
            let jac = if union == 0 {
                0.0
            } else {
                t.intersection(&q).count() as f64 / union as f64
            };
            (n.id.clone(), 0.7 * cosine(&embed_text(&lex), &h) + 0.3 * jac + 0.0)
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Passage ranking from scratch by cosine with `h`, ties by id.
pub fn brute_force_passages(graph: &KnowledgeGraph, h: &Embedding, m: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = graph
        .nodes()
        .iter()
        .filter_map(|n| Some((n.id.clone(), cosine(h, &embed_text(n.passage_text()?)) + 0.0)))
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(m);
    all
}
