//! Batch evaluation and artifact generation behind the `dentkg` binary.

use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;

use dentkg::eval::cohort::{generate_cohort, CohortConfig};
use dentkg::eval::{evaluate, CaseOutcome, EvalOptions, EvaluationReport};
use dentkg::{fixtures, EngineConfig, KnowledgeGraph, SafetyClassifier, SafetyWeights, Variant};

/// The bundled dental graph, or the graph at `path`.
pub fn load_graph(path: Option<&Path>) -> anyhow::Result<KnowledgeGraph> {
    match path {
        Some(p) => KnowledgeGraph::load(p).with_context(|| format!("loading graph {}", p.display())),
        None => Ok(fixtures::kg_dental()),
    }
}

/// The classifier at `path`, or the default one trained on `graph`.
pub fn load_classifier(path: Option<&Path>, graph: &KnowledgeGraph) -> anyhow::Result<SafetyClassifier> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing classifier {}", p.display()))
        }
        None => Ok(SafetyClassifier::train_default(graph)?),
    }
}

/// Parses `w_dose,w_allergy,w_interaction`.
pub fn parse_weights(text: &str, tau: f64) -> anyhow::Result<SafetyWeights> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("weight `{s}`")))
        .collect::<Result<_, _>>()?;
    let [d, a, i] = parts[..] else {
        bail!("expected three comma-separated weights, got {}", parts.len());
    };
    Ok(SafetyWeights::new(d, a, i, tau)?)
}

#[derive(Debug, Clone)]
pub struct EvaluateSpec {
    pub cohort: CohortConfig,
    pub variants: Vec<Variant>,
    pub config: EngineConfig,
    pub options: EvalOptions,
}

/// One line of the evaluation output.
#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportLine<'a> {
    Report(&'a EvaluationReport),
    Case {
        variant: Variant,
        #[serde(flatten)]
        outcome: &'a CaseOutcome,
    },
}

#[derive(Debug, Clone)]
pub struct EvaluationRun {
    pub reports: Vec<EvaluationReport>,
    pub cases: Vec<(Variant, Vec<CaseOutcome>)>,
}

impl EvaluationRun {
    /// Report lines for every variant, then per-record lines in cohort order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: ReportLine<'_>| {
            out.push_str(&serde_json::to_string(&line).expect("report lines serialize"));
            out.push('\n');
        };
        for r in &self.reports {
            push(ReportLine::Report(r));
        }
        for (variant, outcomes) in &self.cases {
            for o in outcomes {
                push(ReportLine::Case {
                    variant: *variant,
                    outcome: o,
                });
            }
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = EvaluationReport::table_header();
        out.push('\n');
        for r in &self.reports {
            out.push_str(&r.table_row());
            out.push('\n');
        }
        out
    }
}

pub fn run_evaluation(
    spec: &EvaluateSpec,
    graph: &KnowledgeGraph,
    classifier: &SafetyClassifier,
) -> anyhow::Result<EvaluationRun> {
    let cohort = generate_cohort(&spec.cohort, graph)?;
    let mut reports = Vec::new();
    let mut cases = Vec::new();
    for &v in &spec.variants {
        let (report, outcomes) = evaluate(&cohort.records, graph, classifier, &spec.config, v, &spec.options)?;
        reports.push(report);
        cases.push((v, outcomes));
    }
    Ok(EvaluationRun { reports, cases })
}
