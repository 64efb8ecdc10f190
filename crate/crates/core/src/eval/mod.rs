//! Synthetic cohorts, metrics and the ablation runner.

pub mod cohort;
pub mod metrics;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::kg::{KnowledgeGraph, Relation, TherapyLine};
use crate::parser::record::{ClinicalRecord, GoldPrescription, PatientProfile};
use crate::recommend::{Decision, Pipeline, RecommendError, Variant};
use crate::safety::{hard_rule_check, AntibioticCandidate, HardViolation, SafetyClassifier, SafetyError};

pub use cohort::{generate_cohort, Cohort, CohortConfig, CohortError, Split};
pub use metrics::{bleu4, bootstrap_ci, eas, mean, ner_f1, LinkCounts, LinkKey, MetricError};

/// True iff `candidate` matches the gold drug with a dose inside the gold
/// drug's band for this age and a duration within one day of gold.
pub fn matches_gold(
    candidate: &AntibioticCandidate,
    gold: &GoldPrescription,
    profile: &PatientProfile,
    graph: &KnowledgeGraph,
) -> bool {
    if candidate.drug != gold.drug || candidate.duration_days.abs_diff(gold.duration_days) > 1 {
        return false;
    }
    matches!(
        graph.dose_rule_for(&gold.drug, profile.age_months),
        Ok(Some(rule)) if rule.dose_in_band(candidate.dose_mg_per_kg_day)
    )
}

/// Dose outside the age band, above the absolute cap, or with no rule.
pub fn is_dose_error(candidate: &AntibioticCandidate, profile: &PatientProfile, graph: &KnowledgeGraph) -> bool {
    match graph.dose_rule_for(&candidate.drug, profile.age_months) {
        Ok(Some(rule)) => {
            !rule.dose_in_band(candidate.dose_mg_per_kg_day)
                || candidate.dose_mg_per_kg_day * profile.weight_kg > rule.abs_max_mg_day
        }
        _ => true,
    }
}

/// Drugs with a first-line treats edge into `diagnosis`.
pub fn first_line_set<'g>(graph: &'g KnowledgeGraph, diagnosis: &str) -> BTreeSet<&'g str> {
    graph
        .incoming(diagnosis, Relation::Treats)
        .into_iter()
        .filter(|(e, _)| e.line() == Some(TherapyLine::First))
        .map(|(_, d)| d.id.as_str())
        .collect()
}

/// One record's view for the prescription metrics.
#[derive(Debug, Clone, Copy)]
pub struct PrescriptionCase<'a> {
    pub profile: &'a PatientProfile,
    pub gold: Option<&'a GoldPrescription>,
    pub gold_diagnosis: Option<&'a str>,
    pub decision: &'a Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrescriptionMetrics {
    pub top1: f64,
    pub top3: f64,
    pub k: usize,
    pub top_k: f64,
    pub cvr: f64,
    pub der: f64,
    pub gcs: f64,
    pub n_emitted: usize,
    pub n_gold: usize,
}

/// Per-record indicators behind [`PrescriptionMetrics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScores {
    /// `None` when the record has no gold prescription.
    pub top1: Option<bool>,
    pub top3: Option<bool>,
    pub top_k: Option<bool>,
    /// `None` when nothing was emitted.
    pub violations: Option<Vec<HardViolation>>,
    pub dose_error: Option<bool>,
    pub first_line: Option<bool>,
}

pub fn score_case(case: &PrescriptionCase<'_>, graph: &KnowledgeGraph, k: usize) -> Result<CaseScores, SafetyError> {
    let ranked = case.decision.ranked();
    let hit_within = |n: usize| {
        case.gold
            .map(|g| ranked.iter().take(n).any(|c| matches_gold(c, g, case.profile, graph)))
    };
    let (violations, dose_error, first_line) = match case.decision.emitted() {
        None => (None, None, None),
        Some(c) => {
            let first = case
                .gold_diagnosis
                .is_some_and(|dx| first_line_set(graph, dx).contains(c.drug.as_str()));
            (
                Some(hard_rule_check(c, case.profile, graph)?),
                Some(is_dose_error(c, case.profile, graph)),
                Some(first),
            )
        }
    };
    Ok(CaseScores {
        top1: hit_within(1),
        top3: hit_within(3),
        top_k: hit_within(k),
        violations,
        dose_error,
        first_line,
    })
}

fn rate(flags: impl Iterator<Item = bool>) -> (f64, usize) {
    let (mut hits, mut n) = (0usize, 0usize);
    for f in flags {
        hits += usize::from(f);
        n += 1;
    }
    (if n == 0 { 0.0 } else { hits as f64 / n as f64 }, n)
}

fn aggregate(scores: &[CaseScores], k: usize) -> PrescriptionMetrics {
    let (top1, n_gold) = rate(scores.iter().filter_map(|s| s.top1));
    let (top3, _) = rate(scores.iter().filter_map(|s| s.top3));
    let (top_k, _) = rate(scores.iter().filter_map(|s| s.top_k));
    let (cvr, n_emitted) = rate(scores.iter().filter_map(|s| s.violations.as_ref().map(|v| !v.is_empty())));
    let (der, _) = rate(scores.iter().filter_map(|s| s.dose_error));
    let (gcs, _) = rate(scores.iter().filter_map(|s| s.first_line));
    PrescriptionMetrics {
        top1,
        top3,
        k,
        top_k,
        cvr,
        der,
        gcs,
        n_emitted,
        n_gold,
    }
}

/// Top-k accuracy over records with a gold prescription; CVR, DER and GCS
/// over emitted recommendations only.
pub fn prescription_metrics(
    cases: &[PrescriptionCase<'_>],
    graph: &KnowledgeGraph,
    k: usize,
) -> Result<PrescriptionMetrics, SafetyError> {
    let scores = cases
        .iter()
        .map(|c| score_case(c, graph, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(&scores, k))
}

/// Everything recorded about one evaluated record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub record_id: String,
    pub decision: Decision,
    pub scores: CaseScores,
    pub link_counts: LinkCounts,
    /// Evidence overlap of the emitted candidate; `None` without emission.
    pub eas: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub variant: Variant,
    pub n_records: usize,
    pub n_emitted: usize,
    pub n_abstained: usize,
    pub n_gold_prescriptions: usize,
    pub ner_precision: f64,
    pub ner_recall: f64,
    pub ner_f1: f64,
    pub bleu: f64,
    pub top1: f64,
    pub top3: f64,
    pub k: usize,
    pub top_k: f64,
    pub cvr: f64,
    pub der: f64,
    pub gcs: f64,
    pub eas: f64,
    pub abstention_rate: f64,
    /// 95% bootstrap intervals of the per-record rates, when defined.
    pub top1_ci: Option<Interval>,
    pub cvr_ci: Option<Interval>,
    pub eas_ci: Option<Interval>,
}

impl EvaluationReport {
    pub fn table_header() -> String {
        format!(
            "{:<10} {:>6} {:>7} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
            "variant", "ner_f1", "bleu", "top1", "top3", "cvr", "der", "gcs", "eas", "abst", "n"
        )
    }

    pub fn table_row(&self) -> String {
        format!(
            "{:<10} {:>6.3} {:>7.2} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6}",
            self.variant.as_str(),
            self.ner_f1,
            self.bleu,
            self.top1,
            self.top3,
            self.cvr,
            self.der,
            self.gcs,
            self.eas,
            self.abstention_rate,
            self.n_records
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub top_k: usize,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            top_k: 3,
            bootstrap_resamples: 1000,
            bootstrap_seed: 7,
        }
    }
}

fn evaluate_one(
    pipeline: &Pipeline<'_>,
    record: &ClinicalRecord,
    k: usize,
) -> Result<CaseOutcome, RecommendError> {
    let out = pipeline.run(record)?;
    let gold = record.gold.as_ref();
    let case = PrescriptionCase {
        profile: &record.profile,
        gold: gold.and_then(|g| g.prescription.as_ref()),
        gold_diagnosis: gold.and_then(|g| g.diagnosis.as_deref()),
        decision: &out.decision,
    };
    let scores = score_case(&case, pipeline.graph, k)?;
    let link_counts = LinkCounts::of(
        out.findings.mentions.iter().map(LinkKey::from),
        gold.into_iter().flat_map(|g| g.entities.iter().map(LinkKey::from)),
    );
    let gold_evidence: &[String] = gold.map_or(&[], |g| &g.evidence);
    let eas = out.decision.emitted().map(|c| eas(&c.evidence_node_ids, gold_evidence));
    Ok(CaseOutcome {
        record_id: record.record_id.clone(),
        decision: out.decision,
        scores,
        link_counts,
        eas,
    })
}

/// Runs one variant over `records` in parallel. Outcomes keep record order,
/// and every aggregate is order independent.
pub fn evaluate(
    records: &[ClinicalRecord],
    graph: &KnowledgeGraph,
    classifier: &SafetyClassifier,
    config: &EngineConfig,
    variant: Variant,
    options: &EvalOptions,
) -> Result<(EvaluationReport, Vec<CaseOutcome>), RecommendError> {
    let pipeline = Pipeline::new(graph, classifier, *config).with_variant(variant);
    let outcomes = records
        .par_iter()
        .map(|r| evaluate_one(&pipeline, r, options.top_k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((report(records, &outcomes, variant, options), outcomes))
}

fn report(records: &[ClinicalRecord], outcomes: &[CaseOutcome], variant: Variant, options: &EvalOptions) -> EvaluationReport {
    let scores: Vec<CaseScores> = outcomes.iter().map(|o| o.scores.clone()).collect();
    let pm = aggregate(&scores, options.top_k);
    let links = outcomes.iter().fold(LinkCounts::default(), |acc, o| acc.add(o.link_counts));
    let (ner_precision, ner_recall, ner_f1) = links.scores();
    let summaries: Vec<&str> = outcomes.iter().map(|o| o.decision.summary()).collect();
    let references: Vec<&str> = records
        .iter()
        .map(|r| r.gold.as_ref().map_or("", |g| g.summary.as_str()))
        .collect();
    let bleu = bleu4(&summaries, &references).expect("one summary per record");
    let eas_samples: Vec<f64> = outcomes.iter().filter_map(|o| o.eas).collect();
    let n_abstained = outcomes.iter().filter(|o| o.decision.is_abstention()).count();

    let ci = |samples: Vec<f64>, salt: u64| {
        bootstrap_ci(&samples, options.bootstrap_resamples, 0.95, options.bootstrap_seed ^ salt)
            .ok()
            .map(|(low, high)| Interval { low, high })
    };
    let as_f64 = |b: bool| f64::from(u8::from(b));
    EvaluationReport {
        variant,
        n_records: records.len(),
        n_emitted: pm.n_emitted,
        n_abstained,
        n_gold_prescriptions: pm.n_gold,
        ner_precision,
        ner_recall,
        ner_f1,
        bleu,
        top1: pm.top1,
        top3: pm.top3,
        k: options.top_k,
        top_k: pm.top_k,
        cvr: pm.cvr,
        der: pm.der,
        gcs: pm.gcs,
        eas: mean(&eas_samples),
        abstention_rate: if records.is_empty() {
            0.0
        } else {
            n_abstained as f64 / records.len() as f64
        },
        top1_ci: ci(scores.iter().filter_map(|s| s.top1).map(as_f64).collect(), 1),
        cvr_ci: ci(
            scores
                .iter()
                .filter_map(|s| s.violations.as_ref())
                .map(|v| as_f64(!v.is_empty()))
                .collect(),
            2,
        ),
        eas_ci: ci(eas_samples, 3),
    }
}

/// One report per variant over the same records.
pub fn run_ablation(
    records: &[ClinicalRecord],
    graph: &KnowledgeGraph,
    classifier: &SafetyClassifier,
    config: &EngineConfig,
    variants: &[Variant],
    options: &EvalOptions,
) -> Result<Vec<EvaluationReport>, RecommendError> {
    variants
        .iter()
        .map(|&v| evaluate(records, graph, classifier, config, v, options).map(|(r, _)| r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::recommend::recommend;
    use crate::recommend::KgTemplateGenerator;

    #[test]
    fn top1_matching_rule() {
        let g = fixtures::kg_mini();
        let p = PatientProfile::new(72, 20.0);
        let gold = GoldPrescription {
            drug: "AMX".into(),
            dose_mg_per_kg_day: 60.0,
            frequency_per_day: 2,
            duration_days: 7,
        };
        assert!(matches_gold(&AntibioticCandidate::new("AMX", 65.0, 2, 6), &gold, &p, &g));
        assert!(!matches_gold(&AntibioticCandidate::new("AMX", 65.0, 2, 5), &gold, &p, &g));
        assert!(!matches_gold(&AntibioticCandidate::new("AMX", 95.0, 2, 7), &gold, &p, &g));
        assert!(!matches_gold(&AntibioticCandidate::new("CLI", 20.0, 3, 7), &gold, &p, &g));
    }

    #[test]
    fn unsafe_emission_counts_toward_cvr() {
        let g = fixtures::kg_mini();
        let c = SafetyClassifier::permissive();
        let mut r = fixtures::abscess_record();
        r.profile = r.profile.with_allergy("penicillin_allergy");
        let out = Pipeline::new(&g, &c, EngineConfig::default())
            .with_variant(Variant::NoSafety)
            .run(&r)
            .unwrap();
        let case = PrescriptionCase {
            profile: &r.profile,
            gold: None,
            gold_diagnosis: Some("periapical_abscess"),
            decision: &out.decision,
        };
        let m = prescription_metrics(&[case], &g, 3).unwrap();
        assert_eq!((m.cvr, m.gcs, m.n_emitted), (1.0, 1.0, 1));
        let safe = recommend(&r, &g, &EngineConfig::default(), &c, &KgTemplateGenerator::default()).unwrap();
        let case = PrescriptionCase {
            decision: &safe,
            ..case
        };
        let m = prescription_metrics(&[case], &g, 3).unwrap();
        assert_eq!((m.cvr, m.der, m.gcs), (0.0, 0.0, 0.0));
    }

    #[test]
    fn abstentions_leave_safety_denominators() {
        let g = fixtures::kg_mini();
        let c = SafetyClassifier::permissive();
        let mut r = fixtures::abscess_record();
        r.profile = PatientProfile::new(3, 6.0);
        let d = recommend(&r, &g, &EngineConfig::default(), &c, &KgTemplateGenerator::default()).unwrap();
        assert!(d.is_abstention());
        let case = PrescriptionCase {
            profile: &r.profile,
            gold: None,
            gold_diagnosis: None,
            decision: &d,
        };
        let m = prescription_metrics(&[case], &g, 3).unwrap();
        assert_eq!((m.n_emitted, m.cvr), (0, 0.0));
    }
}
