use std::fmt::Write;

use super::{AbstentionReason, Decision};
use crate::kg::KnowledgeGraph;
use crate::parser::{Severity, StructuredFindings};
use crate::safety::AntibioticCandidate;

fn name_of<'g>(graph: &'g KnowledgeGraph, id: &'g str) -> &'g str {
    graph.node(id).map_or(id, |n| n.name.as_str())
}

fn fmt_number(x: f64) -> String {
    let r = (x * 10.0).round() / 10.0;
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r:.1}")
    }
}

fn regimen(graph: &KnowledgeGraph, c: &AntibioticCandidate) -> String {
    let doses = if c.frequency_per_day == 1 { "dose" } else { "doses" };
    let days = if c.duration_days == 1 { "day" } else { "days" };
    format!(
        "{} {} mg/kg/day in {} {doses} for {} {days}",
        name_of(graph, &c.drug),
        fmt_number(c.dose_mg_per_kg_day),
        c.frequency_per_day,
        c.duration_days
    )
}

/// Slot-filled findings sentence(s) shared by every outcome.
fn findings_text(graph: &KnowledgeGraph, findings: &StructuredFindings) -> String {
    let mut out = String::new();
    match findings.top_diagnosis() {
        Some(dx) => {
            let _ = write!(out, "Diagnosis: {}", name_of(graph, dx));
            if let Some(site) = findings.tooth_sites.first() {
                let fdi = graph.node(site).and_then(|n| n.attrs.get("fdi")).and_then(|v| v.as_str());
                match fdi {
                    Some(code) => {
                        let _ = write!(out, " at tooth {code} ({})", name_of(graph, site));
                    }
                    None => {
                        let _ = write!(out, " at {}", name_of(graph, site));
                    }
                }
            }
            out.push('.');
        }
        None => out.push_str("Diagnosis: undetermined."),
    }
    if findings.severity != Severity::Unknown {
        let _ = write!(out, " Severity: {}.", findings.severity.as_str());
    }
    let symptoms = findings.active_symptoms(graph);
    if !symptoms.is_empty() {
        let names: Vec<&str> = symptoms.iter().map(|s| name_of(graph, s)).collect();
        let _ = write!(out, " Findings: {}.", names.join(", "));
    }
    out
}

/// What the closing sentence of a summary reports.
#[derive(Debug, Clone, Copy)]
pub enum SummaryOutcome<'a> {
    Regimen {
        candidate: &'a AntibioticCandidate,
        validated: bool,
    },
    NoDiagnosis,
    NoCandidates,
    /// No candidate passed; carries the first rejection reason if known.
    Rejected(Option<&'a str>),
}

/// Deterministic slot-filled summary. Clauses with empty slots are omitted.
pub fn render_summary(graph: &KnowledgeGraph, findings: &StructuredFindings, outcome: SummaryOutcome<'_>) -> String {
    let mut out = findings_text(graph, findings);
    match outcome {
        SummaryOutcome::Regimen { candidate, validated } => {
            let label = if validated { "Recommendation" } else { "Recommendation (unvalidated)" };
            let _ = write!(out, " {label}: {}.", regimen(graph, candidate));
        }
        SummaryOutcome::NoDiagnosis => out.push_str(" Recommendation: none, no safe option without a diagnosis."),
        SummaryOutcome::NoCandidates => {
            out.push_str(" Recommendation: none, no safe option because no drug treats the diagnosis.")
        }
        SummaryOutcome::Rejected(Some(reason)) => {
            let _ = write!(out, " Recommendation: none, no safe option (top reason: {reason}).");
        }
        SummaryOutcome::Rejected(None) => out.push_str(" Recommendation: none, no safe option."),
    }
    out
}

/// [`render_summary`] for an engine decision.
pub fn generate_summary(graph: &KnowledgeGraph, findings: &StructuredFindings, decision: &Decision) -> String {
    let reason;
    let outcome = match decision {
        Decision::Recommendation(r) => SummaryOutcome::Regimen {
            candidate: &r.candidate,
            validated: true,
        },
        Decision::Unvalidated(u) => SummaryOutcome::Regimen {
            candidate: &u.candidate,
            validated: false,
        },
        Decision::Abstention(a) => match a.reason {
            AbstentionReason::NoDiagnosis => SummaryOutcome::NoDiagnosis,
            AbstentionReason::NoCandidates => SummaryOutcome::NoCandidates,
            AbstentionReason::AllCandidatesRejected => {
                reason = a.rejected.first().map(|r| match r.report.hard_violations.first() {
                    Some(v) => format!("{v:?}"),
                    None => format!("{:?}", r.report.verdict),
                });
                SummaryOutcome::Rejected(reason.as_deref())
            }
        },
    };
    render_summary(graph, findings, outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_drop_trailing_zero() {
        assert_eq!(fmt_number(65.0), "65");
        assert_eq!(fmt_number(12.25), "12.3");
        assert_eq!(fmt_number(11.0), "11");
    }
}
