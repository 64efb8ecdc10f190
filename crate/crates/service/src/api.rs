//! Request and response bodies, and the handlers that produce them.

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use dentkg::parser::record::FieldViolation;
use dentkg::retrieval::GuidelineHit;
use dentkg::{
    validate, AntibioticCandidate, ClinicalRecord, Decision, EngineConfig, KGEdge, KGNode, PatientProfile,
    Pipeline, StructuredFindings, Verdict,
};

use crate::config::Weights;
use crate::error::{ApiError, ErrorCode};
use crate::{AppState, Engine, ServiceConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNode {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    /// Retrieved entities, best first.
    pub nodes: Vec<ScoredNode>,
    pub guideline_hits: Vec<GuidelineHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseResponse {
    pub record_id: String,
    pub findings: StructuredFindings,
    pub retrieval: RetrievalSummary,
}

/// A decision tagged with its record. The decision's own fields, including
/// the `outcome` tag, sit at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub record_id: String,
    #[serde(flatten)]
    pub decision: Decision,
}

/// Replacement values for the base record's profile. Absent fields keep the
/// base value; set fields replace it wholesale.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOverrides {
    pub age_months: Option<u32>,
    pub weight_kg: Option<f64>,
    pub allergies: Option<Vec<String>>,
    pub current_medications: Option<Vec<String>>,
    pub comorbidities: Option<Vec<String>>,
}

impl ProfileOverrides {
    pub fn apply(&self, base: &PatientProfile) -> PatientProfile {
        let mut p = base.clone();
        if let Some(v) = self.age_months {
            p.age_months = v;
        }
        if let Some(v) = self.weight_kg {
            p.weight_kg = v;
        }
        if let Some(v) = &self.allergies {
            p.allergies = v.iter().cloned().collect();
        }
        if let Some(v) = &self.current_medications {
            p.current_medications = v.iter().cloned().collect();
        }
        if let Some(v) = &self.comorbidities {
            p.comorbidities = v.iter().cloned().collect();
        }
        p
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigOverrides {
    pub tau: Option<f64>,
    pub weights: Option<Weights>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub record: ClinicalRecord,
    #[serde(default)]
    pub profile: ProfileOverrides,
    #[serde(default)]
    pub config: ConfigOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubScores {
    pub s_dose: f64,
    pub s_allergy: f64,
    pub s_interaction: f64,
    pub s_safety: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmScores {
    #[serde(flatten)]
    pub scores: SubScores,
    pub verdict: Verdict,
}

/// One candidate scored under both arms. `delta` is modified minus baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDelta {
    pub candidate: AntibioticCandidate,
    pub baseline: ArmScores,
    pub modified: ArmScores,
    pub delta: SubScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfDeltas {
    pub baseline_drug: Option<String>,
    pub modified_drug: Option<String>,
    pub drug_changed: bool,
    pub outcome_changed: bool,
    /// Every distinct drug either arm considered, baseline order first.
    pub candidates: Vec<CandidateDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub baseline: RecommendResponse,
    pub modified: RecommendResponse,
    pub deltas: WhatIfDeltas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeResponse {
    pub node: KGNode,
    /// Edges with this node at either end, in graph order.
    pub edges: Vec<KGEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSize {
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    /// `loading` or `ready`.
    pub status: String,
    pub config: ServiceConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSize>,
}

fn decode<T: DeserializeOwned>(body: Result<Bytes, BytesRejection>) -> Result<T, ApiError> {
    let bytes = body.map_err(|r| {
        if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(ErrorCode::PayloadTooLarge, r.body_text())
        } else {
            ApiError::new(ErrorCode::MalformedBody, r.body_text())
        }
    })?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let mut err = ApiError::new(ErrorCode::MalformedBody, e.inner().to_string());
        if path != "." {
            err.fields.push(FieldViolation::new(path, e.inner().to_string()));
        }
        err
    })?;
    de.end().map_err(|e| ApiError::new(ErrorCode::MalformedBody, e.to_string()))?;
    Ok(value)
}

fn engine(state: &AppState) -> Result<&Engine, ApiError> {
    state.engine().ok_or_else(ApiError::not_ready)
}

fn check(violations: Vec<FieldViolation>) -> Result<(), ApiError> {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ApiError::invalid(violations))
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(ErrorCode::Internal, e.to_string())
}

/// Runs `work` off the async executor.
async fn blocking<T: Send + 'static>(
    work: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<Json<T>, ApiError> {
    tokio::task::spawn_blocking(work).await.map_err(internal)?.map(Json)
}

pub fn parse_record(state: &AppState, record: &ClinicalRecord) -> Result<ParseResponse, ApiError> {
    let e = engine(state)?;
    check(record.violations_against(&e.graph))?;
    let pipeline = Pipeline::new(&e.graph, &e.classifier, state.engine_config());
    let context = pipeline.context(record);
    let nodes = context
        .subgraph
        .node_ids
        .iter()
        .zip(&context.subgraph.scores)
        .map(|(id, &score)| ScoredNode { id: id.clone(), score })
        .collect();
    Ok(ParseResponse {
        record_id: record.record_id.clone(),
        findings: pipeline.findings(record),
        retrieval: RetrievalSummary {
            nodes,
            guideline_hits: context.guideline_hits,
        },
    })
}

fn run(e: &Engine, config: EngineConfig, record: &ClinicalRecord) -> Result<RecommendResponse, ApiError> {
    let out = Pipeline::new(&e.graph, &e.classifier, config).run(record).map_err(internal)?;
    Ok(RecommendResponse {
        record_id: record.record_id.clone(),
        decision: out.decision,
    })
}

pub fn recommend_record(state: &AppState, record: &ClinicalRecord) -> Result<RecommendResponse, ApiError> {
    let e = engine(state)?;
    check(record.violations_against(&e.graph))?;
    run(e, state.engine_config(), record)
}

fn prefixed(prefix: &str, v: Vec<FieldViolation>) -> Vec<FieldViolation> {
    v.into_iter()
        .map(|f| FieldViolation::new(format!("{prefix}{}", f.field), f.message))
        .collect()
}

fn considered(d: &Decision) -> Vec<&AntibioticCandidate> {
    match d {
        Decision::Recommendation(r) => std::iter::once(&r.candidate)
            .chain(r.alternatives.iter().map(|a| &a.candidate))
            .chain(r.rejected.iter().map(|a| &a.candidate))
            .collect(),
        Decision::Abstention(a) => a.rejected.iter().map(|r| &r.candidate).collect(),
        Decision::Unvalidated(u) => u.ranked.iter().collect(),
    }
}

fn arm_scores(
    e: &Engine,
    c: &AntibioticCandidate,
    profile: &PatientProfile,
    config: &EngineConfig,
) -> Result<ArmScores, ApiError> {
    let r = validate(c, profile, &e.graph, &config.safety, &e.classifier).map_err(internal)?;
    Ok(ArmScores {
        scores: SubScores {
            s_dose: r.s_dose,
            s_allergy: r.s_allergy,
            s_interaction: r.s_interaction,
            s_safety: r.s_safety,
        },
        verdict: r.verdict,
    })
}

pub fn what_if(state: &AppState, req: &WhatIfRequest) -> Result<WhatIfResponse, ApiError> {
    let e = engine(state)?;
    let base = &req.record;
    check(prefixed("record.", base.violations_against(&e.graph)))?;

    let mut modified = base.clone();
    modified.profile = req.profile.apply(&base.profile);
    let mut v = modified.profile.violations("profile.");
    v.extend(modified.profile.graph_violations(&e.graph, "profile."));

    let mut overridden = state.config().clone();
    if let Some(tau) = req.config.tau {
        overridden.tau = tau;
    }
    if let Some(w) = req.config.weights {
        overridden.weights = w;
    }
    if let Some(alpha) = req.config.alpha {
        overridden.alpha = alpha;
    }
    let modified_config = match overridden.engine_config() {
        Ok(c) => c,
        Err(crate::ConfigError::Invalid(fields)) => {
            v.extend(prefixed("config.", fields));
            EngineConfig::default()
        }
        Err(other) => return Err(internal(other)),
    };
    check(v)?;

    let base_config = state.engine_config();
    let baseline = run(e, base_config, base)?;
    let modified_arm = run(e, modified_config, &modified)?;

    let mut seen = std::collections::BTreeSet::new();
    let mut candidates = Vec::new();
    for c in considered(&baseline.decision).into_iter().chain(considered(&modified_arm.decision)) {
        if !seen.insert(c.drug.clone()) {
            continue;
        }
        let b = arm_scores(e, c, &base.profile, &base_config)?;
        let m = arm_scores(e, c, &modified.profile, &modified_config)?;
        candidates.push(CandidateDelta {
            candidate: c.clone(),
            baseline: b,
            modified: m,
            delta: SubScores {
                s_dose: m.scores.s_dose - b.scores.s_dose,
                s_allergy: m.scores.s_allergy - b.scores.s_allergy,
                s_interaction: m.scores.s_interaction - b.scores.s_interaction,
                s_safety: m.scores.s_safety - b.scores.s_safety,
            },
        });
    }
    let drug = |d: &Decision| d.emitted().map(|c| c.drug.clone());
    let outcome = |d: &Decision| std::mem::discriminant(d);
    let baseline_drug = drug(&baseline.decision);
    let modified_drug = drug(&modified_arm.decision);
    Ok(WhatIfResponse {
        deltas: WhatIfDeltas {
            drug_changed: baseline_drug != modified_drug,
            outcome_changed: outcome(&baseline.decision) != outcome(&modified_arm.decision),
            baseline_drug,
            modified_drug,
            candidates,
        },
        baseline,
        modified: modified_arm,
    })
}

pub async fn parse(
    State(state): State<AppState>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<ParseResponse>, ApiError> {
    let record: ClinicalRecord = decode(body)?;
    blocking(move || parse_record(&state, &record)).await
}

pub async fn recommend(
    State(state): State<AppState>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<RecommendResponse>, ApiError> {
    let record: ClinicalRecord = decode(body)?;
    blocking(move || recommend_record(&state, &record)).await
}

pub async fn whatif(
    State(state): State<AppState>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<WhatIfResponse>, ApiError> {
    let req: WhatIfRequest = decode(body)?;
    blocking(move || what_if(&state, &req)).await
}

pub async fn kg_node(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<NodeResponse>, ApiError> {
    let e = engine(&state)?;
    let node = e
        .graph
        .node(&id)
        .ok_or_else(|| ApiError::new(ErrorCode::UnknownNode, format!("no node `{id}`")))?;
    let edges = e
        .graph
        .edges()
        .iter()
        .filter(|edge| edge.src == id || edge.dst == id)
        .cloned()
        .collect();
    Ok(Json(NodeResponse {
        node: node.clone(),
        edges,
    }))
}

pub async fn health(State(state): State<AppState>) -> Json<HealthResponse> {
    let e = state.engine();
    Json(HealthResponse {
        status: if e.is_some() { "ready" } else { "loading" }.into(),
        config: state.config().clone(),
        graph: e.map(|e| GraphSize {
            nodes: e.graph.nodes().len(),
            edges: e.graph.edges().len(),
        }),
    })
}

pub async fn unknown_route() -> ApiError {
    ApiError::new(ErrorCode::UnknownRoute, "no such route")
}
