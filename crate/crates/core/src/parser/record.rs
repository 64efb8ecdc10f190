use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kg::{KnowledgeGraph, NodeKind};

/// Upper age bound of the pediatric scope, in months.
pub const MAX_AGE_MONTHS: u32 = 216;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    ChiefComplaint,
    ExamNotes,
    RadiographicReport,
}

impl Section {
    pub const ALL: [Section; 3] = [
        Section::ChiefComplaint,
        Section::ExamNotes,
        Section::RadiographicReport,
    ];

    pub fn field_name(self) -> &'static str {
        match self {
            Section::ChiefComplaint => "chief_complaint",
            Section::ExamNotes => "exam_notes",
            Section::RadiographicReport => "radiographic_report",
        }
    }
}

/// Half-open byte range into a section's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientProfile {
    pub age_months: u32,
    pub weight_kg: f64,
    /// AllergyClass node ids.
    #[serde(default)]
    pub allergies: BTreeSet<String>,
    /// Drug node ids.
    #[serde(default)]
    pub current_medications: BTreeSet<String>,
    /// Condition node ids.
    #[serde(default)]
    pub comorbidities: BTreeSet<String>,
}

impl PatientProfile {
    pub fn new(age_months: u32, weight_kg: f64) -> Self {
        PatientProfile {
            age_months,
            weight_kg,
            allergies: BTreeSet::new(),
            current_medications: BTreeSet::new(),
            comorbidities: BTreeSet::new(),
        }
    }

    pub fn with_allergy(mut self, id: &str) -> Self {
        self.allergies.insert(id.to_owned());
        self
    }

    pub fn with_medication(mut self, id: &str) -> Self {
        self.current_medications.insert(id.to_owned());
        self
    }

    pub fn with_comorbidity(mut self, id: &str) -> Self {
        self.comorbidities.insert(id.to_owned());
        self
    }

    pub fn violations(&self, prefix: &str) -> Vec<FieldViolation> {
        let mut out = Vec::new();
        if self.age_months > MAX_AGE_MONTHS {
            out.push(FieldViolation::new(
                format!("{prefix}age_months"),
                format!("must be at most {MAX_AGE_MONTHS}"),
            ));
        }
        if !(self.weight_kg > 1.0 && self.weight_kg < 150.0) {
            out.push(FieldViolation::new(
                format!("{prefix}weight_kg"),
                "must lie in (1, 150)",
            ));
        }
        out
    }

    /// Checks that every referenced id names a node of the right kind.
    pub fn graph_violations(&self, graph: &KnowledgeGraph, prefix: &str) -> Vec<FieldViolation> {
        let mut out = Vec::new();
        let sets = [
            ("allergies", &self.allergies, NodeKind::AllergyClass),
            ("current_medications", &self.current_medications, NodeKind::Drug),
            ("comorbidities", &self.comorbidities, NodeKind::Condition),
        ];
        for (field, ids, kind) in sets {
            for id in ids {
                if graph.node(id).is_none_or(|n| n.kind != kind) {
                    out.push(FieldViolation::new(
                        format!("{prefix}{field}"),
                        format!("`{id}` is not a known {kind}"),
                    ));
                }
            }
        }
        out
    }
}

/// A field-level invariant failure, addressed by a dotted path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldViolation {
    pub field: String,
    pub message: String,
}

impl FieldViolation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldViolation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldEntity {
    pub section: Section,
    pub span: Span,
    pub node_id: String,
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldPrescription {
    pub drug: String,
    pub dose_mg_per_kg_day: f64,
    pub frequency_per_day: u32,
    pub duration_days: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldAnnotation {
    #[serde(default)]
    pub entities: Vec<GoldEntity>,
    #[serde(default)]
    pub diagnosis: Option<String>,
    #[serde(default)]
    pub prescription: Option<GoldPrescription>,
    #[serde(default)]
    pub evidence: Vec<String>,
    #[serde(default)]
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClinicalRecord {
    pub record_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
    #[serde(default)]
    pub chief_complaint: String,
    #[serde(default)]
    pub exam_notes: String,
    #[serde(default)]
    pub radiographic_report: String,
    pub profile: PatientProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<GoldAnnotation>,
}

impl ClinicalRecord {
    /// Builds a record, rejecting it if any invariant fails.
    pub fn new(
        record_id: impl Into<String>,
        chief_complaint: impl Into<String>,
        exam_notes: impl Into<String>,
        radiographic_report: impl Into<String>,
        profile: PatientProfile,
    ) -> Result<Self, Vec<FieldViolation>> {
        let record = ClinicalRecord {
            record_id: record_id.into(),
            patient_id: None,
            chief_complaint: chief_complaint.into(),
            exam_notes: exam_notes.into(),
            radiographic_report: radiographic_report.into(),
            profile,
            gold: None,
        };
        let v = record.violations();
        if v.is_empty() {
            Ok(record)
        } else {
            Err(v)
        }
    }

    pub fn section(&self, s: Section) -> &str {
        match s {
            Section::ChiefComplaint => &self.chief_complaint,
            Section::ExamNotes => &self.exam_notes,
            Section::RadiographicReport => &self.radiographic_report,
        }
    }

    /// All sections joined by single spaces, in section order.
    pub fn full_text(&self) -> String {
        Section::ALL
            .iter()
            .map(|&s| self.section(s))
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Structural invariants (no graph needed).
    pub fn violations(&self) -> Vec<FieldViolation> {
        let mut out = Vec::new();
        if self.record_id.trim().is_empty() {
            out.push(FieldViolation::new("record_id", "must be non-empty"));
        }
        if Section::ALL.iter().all(|&s| self.section(s).trim().is_empty()) {
            out.push(FieldViolation::new(
                "chief_complaint|exam_notes|radiographic_report",
                "at least one text section must be non-empty",
            ));
        }
        out.extend(self.profile.violations("profile."));
        out
    }

    /// Structural invariants plus id resolution against `graph`.
    pub fn violations_against(&self, graph: &KnowledgeGraph) -> Vec<FieldViolation> {
        let mut out = self.violations();
        out.extend(self.profile.graph_violations(graph, "profile."));
        out
    }
}

/// Reads a line-delimited records file. Each record is checked against its
/// structural invariants.
pub fn parse_records_jsonl(text: &str) -> Result<Vec<ClinicalRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ClinicalRecord =
            serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        let v = rec.violations();
        if let Some(first) = v.first() {
            return Err(format!("line {}: {first}", i + 1));
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_rejects_empty_sections() {
        let err = ClinicalRecord::new("r", "", "  ", "", PatientProfile::new(60, 20.0)).unwrap_err();
        assert_eq!(err.len(), 1);
        assert!(err[0].field.contains("exam_notes"));
    }

    #[test]
    fn profile_bounds() {
        let v = PatientProfile::new(217, 1.0).violations("profile.");
        let fields: Vec<_> = v.iter().map(|f| f.field.as_str()).collect();
        assert_eq!(fields, ["profile.age_months", "profile.weight_kg"]);
        assert!(PatientProfile::new(216, 149.9).violations("").is_empty());
    }

    #[test]
    fn full_text_skips_empty_sections() {
        let r = ClinicalRecord::new("r", "pain", "", "lucency", PatientProfile::new(60, 20.0)).unwrap();
        assert_eq!(r.full_text(), "pain lucency");
    }

    #[test]
    fn unknown_record_keys_rejected() {
        let line = r#"{"record_id":"r","exam_notes":"x","profile":{"age_months":1,"weight_kg":4},"extra":1}"#;
        assert!(parse_records_jsonl(line).is_err());
    }
}
