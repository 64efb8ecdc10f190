//! Seeded synthetic visit records with gold annotations.
//!
//! Each record is assembled from sentence frames filled with graph surface
//! forms, so gold spans are known by construction. The gold prescription is
//! the first drug treating the diagnosis (first-line before second-line, then
//! by id) that clears the hard rules and tau for the sampled profile; its
//! dose, frequency and duration are drawn inside the applicable rule.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{KnowledgeGraph, NodeKind, Relation, TherapyLine};
use crate::parser::record::{
    ClinicalRecord, FieldViolation, GoldAnnotation, GoldEntity, GoldPrescription, PatientProfile, Section, Span,
};
use crate::parser::tokenize::raw_tokens;
use crate::parser::{EntityMention, RecordParser};
use crate::recommend::{render_summary, SummaryOutcome};
use crate::safety::{classifier::comorbidity_conditions, hard_rule_check, safety_score, AntibioticCandidate, SafetyWeights};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("invalid cohort config: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Config(Vec<FieldViolation>),
    #[error("graph has no condition with a treating drug")]
    NoTreatableCondition,
}

pub const TEMPLATE_SETS: [&str; 2] = ["standard", "brief"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub seed: u64,
    pub n_records: usize,
    pub allergy_rate: f64,
    pub comedication_rate: f64,
    pub comorbidity_rate: f64,
    /// Chance that a record carries negated distractor symptoms.
    pub negation_rate: f64,
    pub template_set: String,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            seed: 42,
            n_records: 1000,
            allergy_rate: 0.15,
            comedication_rate: 0.10,
            comorbidity_rate: 0.08,
            negation_rate: 0.20,
            template_set: "standard".into(),
        }
    }
}

impl CohortConfig {
    pub fn new(seed: u64, n_records: usize) -> Self {
        CohortConfig {
            seed,
            n_records,
            ..Default::default()
        }
    }

    pub fn violations(&self) -> Vec<FieldViolation> {
        let mut out = Vec::new();
        if self.n_records == 0 {
            out.push(FieldViolation::new("n_records", "must be at least 1"));
        }
        for (name, rate) in [
            ("allergy_rate", self.allergy_rate),
            ("comedication_rate", self.comedication_rate),
            ("comorbidity_rate", self.comorbidity_rate),
            ("negation_rate", self.negation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                out.push(FieldViolation::new(name, "must be within [0, 1]"));
            }
        }
        if !TEMPLATE_SETS.contains(&self.template_set.as_str()) {
            out.push(FieldViolation::new(
                "template_set",
                format!("must be one of {}", TEMPLATE_SETS.join(", ")),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub config: CohortConfig,
    pub records: Vec<ClinicalRecord>,
    /// Split of each record, parallel to `records`.
    pub splits: Vec<Split>,
}

impl Cohort {
    pub fn split(&self, split: Split) -> Vec<&ClinicalRecord> {
        self.records
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(r, _)| r)
            .collect()
    }

    /// One JSON record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Symptoms that appear in radiograph reports rather than the exam.
const RADIOGRAPHIC: [&str; 3] = ["periapical_radiolucency", "pdl_widening", "furcation_involvement"];

/// Builds a section while recording gold entity spans.
struct SectionText<'g> {
    section: Section,
    text: String,
    entities: Vec<GoldEntity>,
    graph: &'g KnowledgeGraph,
}

impl<'g> SectionText<'g> {
    fn new(section: Section, graph: &'g KnowledgeGraph) -> Self {
        SectionText {
            section,
            text: String::new(),
            entities: Vec::new(),
            graph,
        }
    }

    fn push(&mut self, s: &str) {
        self.text.push_str(s);
    }

    fn entity(&mut self, surface: &str, node_id: &str, negated: bool) {
        let start = self.text.len();
        self.text.push_str(surface);
        self.entities.push(GoldEntity {
            section: self.section,
            span: Span {
                start,
                end: self.text.len(),
            },
            node_id: node_id.to_owned(),
            negated,
        });
    }

    /// A surface form of `id`: its name or a synonym that links back to it.
    fn surface(&self, rng: &mut ChaCha8Rng, id: &str, capitalize: bool) -> String {
        let node = self.graph.node(id).expect("sampled ids exist");
        let mut forms = vec![node.name.as_str()];
        for syn in &node.synonyms {
            let toks: Vec<String> = raw_tokens(syn).into_iter().map(|t| t.text).collect();
            let links_back = self
                .graph
                .lookup_phrase(&toks)
                .and_then(|ids| ids.first())
                .is_some_and(|&i| self.graph.nodes()[i].id == id);
            if links_back {
                forms.push(syn);
            }
        }
        let pick = if rng.gen_bool(0.7) { forms[0] } else { forms.choose(rng).copied().unwrap_or(forms[0]) };
        if capitalize {
            let mut c = pick.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        } else {
            pick.to_owned()
        }
    }
}

struct Context<'g> {
    graph: &'g KnowledgeGraph,
    conditions: Vec<&'g str>,
    indicators: BTreeMap<&'g str, Vec<&'g str>>,
    symptoms: Vec<&'g str>,
    allergies: Vec<&'g str>,
    comedications: Vec<&'g str>,
    comorbidities: Vec<&'g str>,
    primary_teeth: Vec<String>,
    permanent_teeth: Vec<String>,
    weights: SafetyWeights,
}

impl<'g> Context<'g> {
    fn new(graph: &'g KnowledgeGraph) -> Result<Self, CohortError> {
        let conditions: Vec<&str> = graph
            .nodes_of_kind(NodeKind::Condition)
            .filter(|c| !graph.incoming(&c.id, Relation::Treats).is_empty())
            .map(|c| c.id.as_str())
            .collect();
        if conditions.is_empty() {
            return Err(CohortError::NoTreatableCondition);
        }
        let mut indicators = BTreeMap::new();
        for &c in &conditions {
            let mut s: Vec<&str> = graph
                .incoming(c, Relation::Indicates)
                .into_iter()
                .map(|(_, n)| n.id.as_str())
                .collect();
            s.sort_unstable();
            indicators.insert(c, s);
        }
        let symptoms = graph.nodes_of_kind(NodeKind::Symptom).map(|n| n.id.as_str()).collect();
        let allergies = graph.nodes_of_kind(NodeKind::AllergyClass).map(|n| n.id.as_str()).collect();
        // Drugs nothing is prescribed for stand in for home medications.
        let comedications = graph
            .nodes_of_kind(NodeKind::Drug)
            .filter(|d| graph.neighbors(&d.id, Some(Relation::Treats)).unwrap_or_default().is_empty())
            .map(|d| d.id.as_str())
            .collect();
        let mut primary_teeth = Vec::new();
        let mut permanent_teeth = Vec::new();
        for t in graph.nodes_of_kind(NodeKind::ToothSite) {
            let Some(code) = t.attrs.get("fdi").and_then(|v| v.as_str()) else {
                continue;
            };
            match code.as_bytes()[0] {
                b'5'..=b'8' => primary_teeth.push(code.to_owned()),
                _ => permanent_teeth.push(code.to_owned()),
            }
        }
        Ok(Context {
            graph,
            conditions,
            indicators,
            symptoms,
            allergies,
            comedications,
            comorbidities: comorbidity_conditions(graph),
            primary_teeth,
            permanent_teeth,
            weights: SafetyWeights::default(),
        })
    }

    fn profile(&self, rng: &mut ChaCha8Rng, config: &CohortConfig) -> PatientProfile {
        let age = if rng.gen_bool(0.1) {
            rng.gen_range(6..24)
        } else {
            rng.gen_range(24..=216)
        };
        let a = f64::from(age);
        let typical = if a < 12.0 { 3.5 + 0.6 * a } else { 10.7 + 0.2 * (a - 12.0) };
        let weight = (typical * rng.gen_range(0.85..1.15) * 10.0).round() / 10.0;
        let mut p = PatientProfile::new(age, weight);
        if rng.gen_bool(config.allergy_rate) {
            // Penicillin allergy dominates in practice.
            let id = if rng.gen_bool(0.7) && self.allergies.contains(&"penicillin_allergy") {
                "penicillin_allergy"
            } else {
                self.allergies.choose(rng).copied().unwrap_or("penicillin_allergy")
            };
            p.allergies.insert(id.to_owned());
        }
        if rng.gen_bool(config.comedication_rate) {
            if let Some(m) = self.comedications.choose(rng) {
                p.current_medications.insert((*m).to_owned());
            }
        }
        if rng.gen_bool(config.comorbidity_rate) {
            if let Some(c) = self.comorbidities.choose(rng) {
                p.comorbidities.insert((*c).to_owned());
            }
        }
        p
    }

    /// Present symptoms for `dx` whose indication votes put `dx` strictly on
    /// top.
    fn presentation(&self, rng: &mut ChaCha8Rng, dx: &str) -> Vec<&'g str> {
        let pool = &self.indicators[dx];
        let mut best: Vec<&str> = Vec::new();
        for _ in 0..50 {
            let n = rng.gen_range(2..=4).min(pool.len());
            let mut pick: Vec<&str> = pool.choose_multiple(rng, n).copied().collect();
            pick.sort_unstable();
            let strict = self.conditions.iter().filter(|&&c| c != dx).all(|c| {
                let other = &self.indicators[c];
                pick.iter().filter(|s| other.contains(s)).count() < pick.len()
            });
            if strict {
                pick.shuffle(rng);
                return pick;
            }
            best = pick;
        }
        best
    }

    fn gold_prescription(&self, rng: &mut ChaCha8Rng, dx: &str, p: &PatientProfile) -> Option<GoldPrescription> {
        let mut drugs: Vec<(bool, &str)> = self
            .graph
            .incoming(dx, Relation::Treats)
            .into_iter()
            .map(|(e, d)| (e.line() != Some(TherapyLine::First), d.id.as_str()))
            .collect();
        drugs.sort_unstable();
        for (_, drug) in drugs {
            let Ok(Some(rule)) = self.graph.dose_rule_for(drug, p.age_months) else {
                continue;
            };
            let cap = rule.abs_max_mg_day / p.weight_kg;
            let hi = rule.max_mg_per_kg_day.min(cap);
            if hi < rule.min_mg_per_kg_day {
                continue;
            }
            let u: f64 = rng.gen_range(0.2..0.8);
            let mut dose = ((rule.min_mg_per_kg_day + u * (hi - rule.min_mg_per_kg_day)) * 2.0).round() / 2.0;
            dose = dose.clamp(rule.min_mg_per_kg_day, hi);
            let c = AntibioticCandidate::new(
                drug,
                dose,
                rng.gen_range(rule.freq_min_per_day..=rule.freq_max_per_day),
                rng.gen_range(rule.duration_min_days..=rule.duration_max_days),
            );
            let clean = hard_rule_check(&c, p, self.graph).is_ok_and(|v| v.is_empty());
            let safe = safety_score(&c, p, self.graph, &self.weights).is_ok_and(|s| s.s_safety >= self.weights.tau);
            if clean && safe {
                return Some(GoldPrescription {
                    drug: c.drug,
                    dose_mg_per_kg_day: c.dose_mg_per_kg_day,
                    frequency_per_day: c.frequency_per_day,
                    duration_days: c.duration_days,
                });
            }
        }
        None
    }

    fn tooth(&self, rng: &mut ChaCha8Rng, age_months: u32) -> String {
        let primary = age_months < 72 || (age_months < 144 && rng.gen_bool(0.5));
        let pool = if primary && !self.primary_teeth.is_empty() {
            &self.primary_teeth
        } else {
            &self.permanent_teeth
        };
        pool.choose(rng).cloned().unwrap_or_else(|| "85".into())
    }

    fn record(&self, rng: &mut ChaCha8Rng, config: &CohortConfig, id: String, patient: &Patient) -> ClinicalRecord {
        let graph = self.graph;
        let brief = config.template_set == "brief";
        let dx = *self.conditions.choose(rng).expect("non-empty");
        let present = self.presentation(rng, dx);
        let negatives: Vec<&str> = if rng.gen_bool(config.negation_rate) {
            let n = rng.gen_range(1..=2);
            self.symptoms
                .iter()
                .filter(|s| !present.contains(s))
                .copied()
                .choose_multiple(rng, n)
        } else {
            Vec::new()
        };
        let fdi = &patient.tooth;
        let tooth_id = graph.tooth_by_fdi(fdi).map(|t| t.id.clone());

        let (radio, clinical): (Vec<&str>, Vec<&str>) = present.iter().partition(|s| RADIOGRAPHIC.contains(s));
        let mut cc = SectionText::new(Section::ChiefComplaint, graph);
        let mut exam = SectionText::new(Section::ExamNotes, graph);
        let mut rad = SectionText::new(Section::RadiographicReport, graph);

        // Chief complaint: up to two clinical symptoms and the tooth.
        let lead: Vec<&str> = clinical.iter().take(2).copied().collect();
        if lead.is_empty() {
            cc.push(if brief { "Review" } else { "Referred for review" });
        }
        for (i, s) in lead.iter().enumerate() {
            if i > 0 {
                cc.push(" and ");
            }
            let form = cc.surface(rng, s, i == 0);
            cc.entity(&form, s, false);
        }
        cc.push(if brief { " at " } else { " near tooth " });
        match &tooth_id {
            Some(t) => cc.entity(&format!("#{fdi}"), t, false),
            None => cc.push(&format!("#{fdi}")),
        }
        if !brief {
            cc.push(&format!(" for {} days", rng.gen_range(1..=7)));
        }
        cc.push(".");

        // Exam: the remaining clinical findings, then negated distractors.
        let mut sentences = 0;
        for s in clinical.iter().skip(2) {
            if sentences > 0 {
                exam.push(" ");
            }
            let form = exam.surface(rng, s, true);
            exam.entity(&form, s, false);
            exam.push(if brief { "." } else { " noted on examination." });
            sentences += 1;
        }
        for s in negatives.iter().filter(|s| !RADIOGRAPHIC.contains(s)) {
            if sentences > 0 {
                exam.push(" ");
            }
            exam.push("No ");
            let form = exam.surface(rng, s, false);
            exam.entity(&form, s, true);
            exam.push(".");
            sentences += 1;
        }
        if sentences == 0 {
            exam.push(if brief { "Exam unremarkable otherwise." } else { "Soft tissues otherwise within normal limits." });
        }

        // Radiograph: radiographic findings at the tooth, negated ones after.
        let mut wrote = false;
        for s in &radio {
            if wrote {
                rad.push(" ");
            }
            let form = rad.surface(rng, s, true);
            rad.entity(&form, s, false);
            rad.push(" at ");
            match &tooth_id {
                Some(t) => rad.entity(&format!("#{fdi}"), t, false),
                None => rad.push(&format!("#{fdi}")),
            }
            rad.push(".");
            wrote = true;
        }
        for s in negatives.iter().filter(|s| RADIOGRAPHIC.contains(s)) {
            if wrote {
                rad.push(" ");
            }
            rad.push("No ");
            let form = rad.surface(rng, s, false);
            rad.entity(&form, s, true);
            rad.push(".");
            wrote = true;
        }
        if !wrote {
            rad.push("Radiograph unremarkable.");
        }

        let profile = patient.profile.clone();
        let prescription = self.gold_prescription(rng, dx, &profile);
        let mut evidence: BTreeSet<String> = BTreeSet::from([dx.to_owned()]);
        if let Some(rx) = &prescription {
            evidence.insert(rx.drug.clone());
            if let Ok(Some(rule)) = graph.dose_rule_for(&rx.drug, profile.age_months) {
                evidence.insert(rule.age_band.clone());
            }
        }
        let passage = graph
            .incoming(dx, Relation::Supports)
            .into_iter()
            .map(|(_, p)| p.id.clone())
            .min();
        evidence.extend(passage);

        let sections = [&cc, &exam, &rad];
        let entities: Vec<GoldEntity> = sections.iter().flat_map(|s| s.entities.iter().cloned()).collect();
        let mentions: Vec<EntityMention> = sections
            .iter()
            .flat_map(|s| {
                s.entities.iter().map(|e| EntityMention {
                    section: e.section,
                    span: e.span,
                    surface: s.text[e.span.start..e.span.end].to_owned(),
                    node_id: e.node_id.clone(),
                    negated: e.negated,
                })
            })
            .collect();
        let mut findings = RecordParser::default().findings_from_mentions(mentions, graph);
        // The gold summary names the gold diagnosis even if votes tie.
        findings.diagnosis_candidates.retain(|d| d.condition == dx);
        let candidate = prescription
            .as_ref()
            .map(|rx| AntibioticCandidate::new(&rx.drug, rx.dose_mg_per_kg_day, rx.frequency_per_day, rx.duration_days));
        let outcome = match &candidate {
            Some(c) => SummaryOutcome::Regimen {
                candidate: c,
                validated: true,
            },
            None => SummaryOutcome::Rejected(None),
        };
        let summary = render_summary(graph, &findings, outcome);

        ClinicalRecord {
            record_id: id,
            patient_id: Some(patient.id.clone()),
            chief_complaint: cc.text,
            exam_notes: exam.text,
            radiographic_report: rad.text,
            profile,
            gold: Some(GoldAnnotation {
                entities,
                diagnosis: Some(dx.to_owned()),
                prescription,
                evidence: evidence.into_iter().collect(),
                summary,
            }),
        }
    }
}

struct Patient {
    id: String,
    profile: PatientProfile,
    tooth: String,
}

/// Deterministic cohort for `config` over `graph`. Patients have one to
/// three visits and every visit of a patient lands in the same split.
pub fn generate_cohort(config: &CohortConfig, graph: &KnowledgeGraph) -> Result<Cohort, CohortError> {
    let v = config.violations();
    if !v.is_empty() {
        return Err(CohortError::Config(v));
    }
    let ctx = Context::new(graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut patients: Vec<(Patient, usize)> = Vec::new();
    let mut planned = 0;
    while planned < config.n_records {
        let visits = rng.gen_range(1..=3).min(config.n_records - planned);
        let profile = ctx.profile(&mut rng, config);
        let tooth = ctx.tooth(&mut rng, profile.age_months);
        patients.push((
            Patient {
                id: format!("P{:05}", patients.len()),
                profile,
                tooth,
            },
            visits,
        ));
        planned += visits;
    }

    let mut order: Vec<usize> = (0..patients.len()).collect();
    order.shuffle(&mut rng);
    let n = patients.len();
    let n_train = (n as f64 * 0.70).round() as usize;
    let n_dev = (n as f64 * 0.15).round() as usize;
    let mut patient_split = vec![Split::Test; n];
    for (rank, &p) in order.iter().enumerate() {
        patient_split[p] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
    }

    let mut records = Vec::with_capacity(config.n_records);
    let mut splits = Vec::with_capacity(config.n_records);
    for (i, (patient, visits)) in patients.iter().enumerate() {
        for _ in 0..*visits {
            let id = format!("C{:05}", records.len());
            records.push(ctx.record(&mut rng, config, id, patient));
            splits.push(patient_split[i]);
        }
    }
    Ok(Cohort {
        config: config.clone(),
        records,
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn deterministic_and_sized() {
        let g = fixtures::kg_dental();
        let c = CohortConfig::new(42, 100);
        let a = generate_cohort(&c, &g).unwrap();
        let b = generate_cohort(&c, &g).unwrap();
        assert_eq!(a.records.len(), 100);
        assert_eq!(a.to_jsonl(), b.to_jsonl());
    }

    #[test]
    fn gold_spans_cover_their_surface() {
        let g = fixtures::kg_dental();
        let cohort = generate_cohort(&CohortConfig::new(3, 200), &g).unwrap();
        for r in &cohort.records {
            assert!(r.violations_against(&g).is_empty(), "{:?}", r.violations_against(&g));
            for e in &r.gold.as_ref().unwrap().entities {
                let text = r.section(e.section);
                assert!(e.span.end <= text.len() && text.is_char_boundary(e.span.start));
            }
        }
    }

    #[test]
    fn full_allergy_rate() {
        let g = fixtures::kg_dental();
        let c = CohortConfig {
            allergy_rate: 1.0,
            ..CohortConfig::new(5, 50)
        };
        let cohort = generate_cohort(&c, &g).unwrap();
        assert!(cohort.records.iter().all(|r| !r.profile.allergies.is_empty()));
    }

    #[test]
    fn patients_stay_in_one_split() {
        let g = fixtures::kg_dental();
        let cohort = generate_cohort(&CohortConfig::new(9, 300), &g).unwrap();
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for (r, s) in cohort.records.iter().zip(&cohort.splits) {
            let p = r.patient_id.as_deref().unwrap();
            assert_eq!(*seen.entry(p).or_insert(*s), *s);
        }
        assert!(cohort.split(Split::Train).len() > cohort.split(Split::Test).len());
    }

    #[test]
    fn rejects_bad_config() {
        let g = fixtures::kg_dental();
        let c = CohortConfig {
            negation_rate: 1.5,
            template_set: "x".into(),
            ..CohortConfig::new(1, 0)
        };
        let Err(CohortError::Config(v)) = generate_cohort(&c, &g) else { panic!() };
        let fields: Vec<_> = v.iter().map(|f| f.field.as_str()).collect();
        assert_eq!(fields, ["n_records", "negation_rate", "template_set"]);
    }
}
