//! Candidate safety scoring and the two-layer validator.
//!
//! Three sub-scores (dose adherence, allergy compatibility, interaction risk)
//! are blended into a weighted safety score. Validation first applies the
//! deterministic hard rules, then the learned classifier, then the score
//! threshold; a candidate passes only if it clears all three.

pub mod classifier;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{KgError, KnowledgeGraph, NodeKind, Relation};
use crate::parser::record::{FieldViolation, PatientProfile};

pub use classifier::{
    candidate_features, synthetic_examples, synthetic_examples_with, train_safety_classifier,
    ClassifierTraining, LabeledExample, SafetyClassifier, SyntheticMix, FEATURE_COUNT,
};

/// Relative deviation from the dose band at which `s_dose` reaches zero.
pub const DOSE_FALLOFF: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SafetyError {
    #[error(transparent)]
    Graph(#[from] KgError),
    #[error("invalid safety weights: {0}")]
    InvalidWeights(String),
    #[error("invalid candidate: {0}")]
    InvalidCandidate(String),
    #[error("training labels are all {}", if *.0 { "unsafe" } else { "safe" })]
    DegenerateLabels(bool),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntibioticCandidate {
    pub drug: String,
    pub dose_mg_per_kg_day: f64,
    pub frequency_per_day: u32,
    pub duration_days: u32,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub evidence_node_ids: Vec<String>,
}

impl AntibioticCandidate {
    pub fn new(drug: &str, dose_mg_per_kg_day: f64, frequency_per_day: u32, duration_days: u32) -> Self {
        AntibioticCandidate {
            drug: drug.to_owned(),
            dose_mg_per_kg_day,
            frequency_per_day,
            duration_days,
            rationale: String::new(),
            evidence_node_ids: Vec::new(),
        }
    }

    pub fn violations(&self, graph: &KnowledgeGraph, prefix: &str) -> Vec<FieldViolation> {
        let mut out = Vec::new();
        if graph.node(&self.drug).is_none_or(|n| n.kind != NodeKind::Drug) {
            out.push(FieldViolation::new(
                format!("{prefix}drug"),
                format!("`{}` is not a known Drug", self.drug),
            ));
        }
        if !(self.dose_mg_per_kg_day.is_finite() && self.dose_mg_per_kg_day > 0.0) {
            out.push(FieldViolation::new(format!("{prefix}dose_mg_per_kg_day"), "must be positive"));
        }
        if self.frequency_per_day == 0 {
            out.push(FieldViolation::new(format!("{prefix}frequency_per_day"), "must be positive"));
        }
        if self.duration_days == 0 {
            out.push(FieldViolation::new(format!("{prefix}duration_days"), "must be positive"));
        }
        out
    }

    fn check(&self, graph: &KnowledgeGraph) -> Result<(), SafetyError> {
        graph.require_kind(&self.drug, NodeKind::Drug)?;
        match self.violations(graph, "").first() {
            Some(v) => Err(SafetyError::InvalidCandidate(v.to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyWeights {
    pub w_dose: f64,
    pub w_allergy: f64,
    pub w_interaction: f64,
    pub tau: f64,
}

impl Default for SafetyWeights {
    fn default() -> Self {
        SafetyWeights {
            w_dose: 0.4,
            w_allergy: 0.4,
            w_interaction: 0.2,
            tau: 0.8,
        }
    }
}

impl SafetyWeights {
    pub fn new(w_dose: f64, w_allergy: f64, w_interaction: f64, tau: f64) -> Result<Self, SafetyError> {
        let w = SafetyWeights {
            w_dose,
            w_allergy,
            w_interaction,
            tau,
        };
        match w.violations("").first() {
            Some(v) => Err(SafetyError::InvalidWeights(v.to_string())),
            None => Ok(w),
        }
    }

    pub fn violations(&self, prefix: &str) -> Vec<FieldViolation> {
        let mut out = Vec::new();
        for (name, v) in [
            ("w_dose", self.w_dose),
            ("w_allergy", self.w_allergy),
            ("w_interaction", self.w_interaction),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                out.push(FieldViolation::new(format!("{prefix}{name}"), "must be a nonnegative number"));
            }
        }
        let sum = self.w_dose + self.w_allergy + self.w_interaction;
        if out.is_empty() && (sum - 1.0).abs() > 1e-9 {
            out.push(FieldViolation::new(
                format!("{prefix}weights"),
                format!("must sum to 1 (got {sum})"),
            ));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            out.push(FieldViolation::new(format!("{prefix}tau"), "must lie in [0, 1]"));
        }
        out
    }
}

pub fn s_dose(
    candidate: &AntibioticCandidate,
    profile: &PatientProfile,
    graph: &KnowledgeGraph,
) -> Result<f64, SafetyError> {
    let Some(rule) = graph.dose_rule_for(&candidate.drug, profile.age_months)? else {
        return Ok(0.0);
    };
    let dose = candidate.dose_mg_per_kg_day;
    if rule.dose_in_band(dose) {
        return Ok(1.0);
    }
    let bound = if dose < rule.min_mg_per_kg_day {
        rule.min_mg_per_kg_day
    } else {
        rule.max_mg_per_kg_day
    };
    let deviation = (dose - bound).abs() / bound;
    Ok((1.0 - deviation / DOSE_FALLOFF).max(0.0))
}

/// Allergy classes the drug is cross-reactive with, directly or through a
/// class it belongs to.
pub fn cross_reactive_allergies<'g>(
    graph: &'g KnowledgeGraph,
    drug: &str,
) -> Result<Vec<&'g str>, SafetyError> {
    graph.require_kind(drug, NodeKind::Drug)?;
    let mut sources = vec![drug.to_owned()];
    sources.extend(graph.drug_classes(drug).into_iter().map(|c| c.id.clone()));
    let mut out: Vec<&str> = Vec::new();
    for src in &sources {
        for (_, allergy) in graph.neighbors(src, Some(Relation::CrossReactive))? {
            if !out.contains(&allergy.id.as_str()) {
                out.push(&allergy.id);
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

pub fn s_allergy(
    candidate: &AntibioticCandidate,
    profile: &PatientProfile,
    graph: &KnowledgeGraph,
) -> Result<f64, SafetyError> {
    let conflict = cross_reactive_allergies(graph, &candidate.drug)?
        .iter()
        .any(|a| profile.allergies.contains(*a));
    Ok(if conflict { 0.0 } else { 1.0 })
}

/// Severities of interaction edges between `drug` and the current
/// medications, ordered by medication id.
pub fn interaction_severities(
    graph: &KnowledgeGraph,
    drug: &str,
    profile: &PatientProfile,
) -> Result<Vec<f64>, SafetyError> {
    Ok(graph
        .neighbors(drug, Some(Relation::InteractsWith))?
        .into_iter()
        .filter(|(_, other)| profile.current_medications.contains(&other.id))
        .map(|(e, _)| e.severity().unwrap_or(0.0))
        .collect())
}

pub fn s_interaction(
    candidate: &AntibioticCandidate,
    profile: &PatientProfile,
    graph: &KnowledgeGraph,
) -> Result<f64, SafetyError> {
    let worst = interaction_severities(graph, &candidate.drug, profile)?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(1.0 - worst)
}

/// The three sub-scores and their weighted blend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyScores {
    pub s_dose: f64,
    pub s_allergy: f64,
    pub s_interaction: f64,
    pub s_safety: f64,
}

/// `w_dose * s_dose + w_allergy * s_allergy + w_interaction * s_interaction`,
/// capped at 1 to absorb weight sums that exceed 1 by rounding.
pub fn weighted_safety(weights: &SafetyWeights, s_dose: f64, s_allergy: f64, s_interaction: f64) -> f64 {
    (weights.w_dose * s_dose + weights.w_allergy * s_allergy + weights.w_interaction * s_interaction)
        .min(1.0)
}

pub fn safety_score(
    candidate: &AntibioticCandidate,
    profile: &PatientProfile,
    graph: &KnowledgeGraph,
    weights: &SafetyWeights,
) -> Result<SafetyScores, SafetyError> {
    candidate.check(graph)?;
    if let Some(v) = weights.violations("").first() {
        return Err(SafetyError::InvalidWeights(v.to_string()));
    }
    let d = s_dose(candidate, profile, graph)?;
    let a = s_allergy(candidate, profile, graph)?;
    let i = s_interaction(candidate, profile, graph)?;
    Ok(SafetyScores {
        s_dose: d,
        s_allergy: a,
        s_interaction: i,
        s_safety: weighted_safety(weights, d, a, i),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HardViolation {
    AllergyConflict,
    AbsoluteDoseExceeded,
    NoDoseRuleForAge,
    ComorbidityContraindication,
    FrequencyOutOfRange,
    DurationOutOfRange,
}

/// Deterministic rule layer, ordered by [`HardViolation`] declaration order.
pub fn hard_rule_check(
    candidate: &AntibioticCandidate,
    profile: &PatientProfile,
    graph: &KnowledgeGraph,
) -> Result<Vec<HardViolation>, SafetyError> {
    let mut out = Vec::new();
    if s_allergy(candidate, profile, graph)? == 0.0 {
        out.push(HardViolation::AllergyConflict);
    }
    let rule = graph.dose_rule_for(&candidate.drug, profile.age_months)?;
    if let Some(rule) = rule {
        if candidate.dose_mg_per_kg_day * profile.weight_kg > rule.abs_max_mg_day {
            out.push(HardViolation::AbsoluteDoseExceeded);
        }
    } else {
        out.push(HardViolation::NoDoseRuleForAge);
    }
    let contraindicated = graph
        .neighbors(&candidate.drug, Some(Relation::ContraindicatedIn))?
        .iter()
        .any(|(_, c)| profile.comorbidities.contains(&c.id));
    if contraindicated {
        out.push(HardViolation::ComorbidityContraindication);
    }
    if let Some(rule) = rule {
        if !rule.frequency_in_range(candidate.frequency_per_day) {
            out.push(HardViolation::FrequencyOutOfRange);
        }
        if !rule.duration_in_range(candidate.duration_days) {
            out.push(HardViolation::DurationOutOfRange);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    RejectHardRule,
    RejectClassifier,
    RejectThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub s_dose: f64,
    pub s_allergy: f64,
    pub s_interaction: f64,
    pub s_safety: f64,
    pub hard_violations: Vec<HardViolation>,
    pub classifier_unsafe_prob: f64,
    pub verdict: Verdict,
    pub weights: SafetyWeights,
    pub tau: f64,
}

impl SafetyReport {
    pub fn scores(&self) -> SafetyScores {
        SafetyScores {
            s_dose: self.s_dose,
            s_allergy: self.s_allergy,
            s_interaction: self.s_interaction,
            s_safety: self.s_safety,
        }
    }
}

pub fn validate(
    candidate: &AntibioticCandidate,
    profile: &PatientProfile,
    graph: &KnowledgeGraph,
    weights: &SafetyWeights,
    classifier: &SafetyClassifier,
) -> Result<SafetyReport, SafetyError> {
    let scores = safety_score(candidate, profile, graph, weights)?;
    let hard_violations = hard_rule_check(candidate, profile, graph)?;
    let prob = classifier.unsafe_probability(&candidate_features(candidate, profile, graph)?);
    let verdict = if !hard_violations.is_empty() {
        Verdict::RejectHardRule
    } else if prob >= classifier.threshold {
        Verdict::RejectClassifier
    } else if scores.s_safety < weights.tau {
        Verdict::RejectThreshold
    } else {
        Verdict::Pass
    };
    Ok(SafetyReport {
        s_dose: scores.s_dose,
        s_allergy: scores.s_allergy,
        s_interaction: scores.s_interaction,
        s_safety: scores.s_safety,
        hard_violations,
        classifier_unsafe_prob: prob,
        verdict,
        weights: *weights,
        tau: weights.tau,
    })
}
