use std::sync::LazyLock;

use axum::body::{to_bytes, Body, Bytes};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use dentkg::{fixtures, KGEdge, KnowledgeGraph, Relation, SafetyClassifier};
use dentkg_service::{router, AppState, Engine, ServiceConfig};

fn quiet() -> ServiceConfig {
    ServiceConfig {
        request_log: false,
        ..ServiceConfig::default()
    }
}

static MINI: LazyLock<AppState> = LazyLock::new(|| {
    let graph = fixtures::kg_mini();
    let classifier = SafetyClassifier::train_default(&graph).unwrap();
    AppState::ready(quiet(), Engine { graph, classifier }).unwrap()
});

fn app() -> Router {
    router(MINI.clone())
}

async fn send(app: Router, method: &str, uri: &str, body: Option<Vec<u8>>) -> (StatusCode, Bytes) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let res = app.oneshot(req).await.unwrap();
    let status = res.status();
    (status, to_bytes(res.into_body(), usize::MAX).await.unwrap())
}

async fn post(app: Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    let (s, b) = send(app, "POST", uri, Some(serde_json::to_vec(body).unwrap())).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn get(app: Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = send(app, "GET", uri, None).await;
    (s, serde_json::from_slice(&b).unwrap())
}

fn r1() -> Value {
    serde_json::to_value(fixtures::abscess_record()).unwrap()
}

fn r1_allergic() -> Value {
    let mut v = r1();
    v["profile"]["allergies"] = json!(["penicillin_allergy"]);
    v
}

#[tokio::test]
async fn parse_returns_mentions_and_retrieval() {
    let (s, v) = post(app(), "/v1/parse", &r1()).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let mentions = v["findings"]["mentions"].as_array().unwrap();
    assert!(!mentions.is_empty());
    assert!(mentions.iter().any(|m| m["node_id"] == "tooth_85" && m["span"].is_object()));
    assert_eq!(v["findings"]["diagnosis_candidates"][0]["condition"], "periapical_abscess");
    assert!(!v["retrieval"]["nodes"].as_array().unwrap().is_empty());
    assert!(v["retrieval"]["nodes"][0]["score"].is_number());
    assert!(!v["retrieval"]["guideline_hits"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn missing_text_sections_is_422_naming_the_invariant() {
    let mut body = r1();
    for k in ["chief_complaint", "exam_notes", "radiographic_report"] {
        body[k] = json!("");
    }
    let (s, v) = post(app(), "/v1/parse", &body).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "invalid_field");
    assert!(v["error"]["fields"][0]["field"].as_str().unwrap().contains("chief_complaint"));
}

#[tokio::test]
async fn out_of_range_age_names_the_field() {
    let mut body = r1();
    body["profile"]["age_months"] = json!(217);
    let (s, v) = post(app(), "/v1/recommend", &body).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["fields"][0]["field"], "profile.age_months");
}

#[tokio::test]
async fn oversize_body_is_413() {
    let big = vec![b' '; 11 << 20];
    let (s, b) = send(app(), "POST", "/v1/parse", Some(big)).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["error"]["code"], "payload_too_large");
}

#[tokio::test]
async fn malformed_bodies_are_400() {
    let (s, b) = send(app(), "POST", "/v1/recommend", Some(b"{\"record_id\": ".to_vec())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["error"]["code"], "malformed_body");

    let mut body = r1();
    body["profile"]["age_months"] = json!("six");
    let (s, v) = post(app(), "/v1/recommend", &body).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["fields"][0]["field"], "profile.age_months");

    let mut body = r1();
    body["surprise"] = json!(1);
    let (s, _) = post(app(), "/v1/recommend", &body).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn abscess_recommends_amoxicillin() {
    let (s, v) = post(app(), "/v1/recommend", &r1()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["outcome"], "recommendation");
    assert_eq!(v["record_id"], "R1");
    assert_eq!(v["candidate"]["drug"], "AMX");
    assert_eq!(v["report"]["verdict"], "Pass");
    assert_eq!(v["attempts"], 1);
    assert!(v["report"]["s_safety"].as_f64().unwrap() >= v["report"]["tau"].as_f64().unwrap());
    assert!(!v["candidate"]["evidence_node_ids"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn penicillin_allergy_switches_to_clindamycin() {
    let (s, v) = post(app(), "/v1/recommend", &r1_allergic()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["candidate"]["drug"], "CLI");
    assert_eq!(v["rejected"][0]["candidate"]["drug"], "AMX");
    assert_eq!(v["rejected"][0]["report"]["hard_violations"], json!(["AllergyConflict"]));
}

#[tokio::test]
async fn all_conflict_profile_is_a_200_abstention() {
    let mini = fixtures::kg_mini();
    let mut edges = mini.edges().to_vec();
    edges.push(KGEdge::new("lincosamides", Relation::CrossReactive, "penicillin_allergy"));
    let graph = KnowledgeGraph::from_parts(mini.nodes().to_vec(), edges).unwrap();
    let state = AppState::ready(
        quiet(),
        Engine {
            graph,
            classifier: SafetyClassifier::permissive(),
        },
    )
    .unwrap();
    let (s, v) = post(router(state), "/v1/recommend", &r1_allergic()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["outcome"], "abstention");
    assert_eq!(v["reason"], "all_candidates_rejected");
}

#[tokio::test]
async fn whatif_allergy_override_switches_drug() {
    let body = json!({"record": r1(), "profile": {"allergies": ["penicillin_allergy"]}});
    let (s, v) = post(app(), "/v1/whatif", &body).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let d = &v["deltas"];
    assert_eq!(d["baseline_drug"], "AMX");
    assert_eq!(d["modified_drug"], "CLI");
    assert_eq!(d["drug_changed"], true);
    let amx = d["candidates"].as_array().unwrap().iter().find(|c| c["candidate"]["drug"] == "AMX").unwrap();
    assert_eq!(amx["baseline"]["s_allergy"], 1.0);
    assert_eq!(amx["modified"]["s_allergy"], 0.0);
    assert_eq!(amx["delta"]["s_allergy"], -1.0);
    assert_eq!(amx["modified"]["verdict"], "RejectHardRule");
}

#[tokio::test]
async fn whatif_without_overrides_has_identical_arms() {
    let (s, v) = post(app(), "/v1/whatif", &json!({"record": r1()})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["baseline"], v["modified"]);
    assert_eq!(v["deltas"]["drug_changed"], false);
    assert_eq!(v["deltas"]["outcome_changed"], false);
    for c in v["deltas"]["candidates"].as_array().unwrap() {
        for k in ["s_dose", "s_allergy", "s_interaction", "s_safety"] {
            assert_eq!(c["delta"][k], 0.0);
        }
    }
}

#[tokio::test]
async fn whatif_rejects_invalid_overrides() {
    for (config, field) in [
        (json!({"tau": 1.5}), "config.tau"),
        (json!({"alpha": -0.1}), "config.alpha"),
        (json!({"weights": {"w_dose": 0.5, "w_allergy": 0.5, "w_interaction": 0.5}}), "config.weights"),
    ] {
        let (s, v) = post(app(), "/v1/whatif", &json!({"record": r1(), "config": config})).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
        assert_eq!(v["error"]["fields"][0]["field"], field);
    }
    let body = json!({"record": r1(), "profile": {"allergies": ["no_such_allergy"]}});
    let (s, v) = post(app(), "/v1/whatif", &body).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"]["fields"][0]["field"].as_str().unwrap().starts_with("profile.allergies"));
}

#[tokio::test]
async fn whatif_tau_override_is_echoed() {
    let body = json!({"record": r1(), "config": {"tau": 0.95}});
    let (s, v) = post(app(), "/v1/whatif", &body).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["modified"]["report"]["tau"], 0.95);
    assert_eq!(v["baseline"]["report"]["tau"], 0.8);
}

#[tokio::test]
async fn node_lookup() {
    let (s, v) = get(app(), "/v1/kg/nodes/AMX").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["node"]["name"], "amoxicillin");
    let rels: Vec<&str> = v["edges"].as_array().unwrap().iter().map(|e| e["rel"].as_str().unwrap()).collect();
    assert!(rels.contains(&"member_of") && rels.contains(&"has_dose_rule"));
    assert!(v["edges"].as_array().unwrap().iter().all(|e| e["src"] == "AMX" || e["dst"] == "AMX"));

    let (s, v) = get(app(), "/v1/kg/nodes/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_node");
}

#[tokio::test]
async fn loading_state_reports_and_refuses() {
    let state = AppState::loading(quiet()).unwrap();
    let (s, v) = get(router(state.clone()), "/v1/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "loading");
    assert_eq!(v["config"]["tau"], 0.8);
    let (s, v) = post(router(state.clone()), "/v1/recommend", &r1()).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"]["code"], "not_ready");
    let (s, _) = get(router(state.clone()), "/v1/kg/nodes/AMX").await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);

    let graph = fixtures::kg_mini();
    assert!(state.install(Engine {
        graph,
        classifier: SafetyClassifier::permissive()
    }));
    let (_, v) = get(router(state), "/v1/health").await;
    assert_eq!(v["status"], "ready");
    assert!(v["graph"]["nodes"].as_u64().unwrap() > 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_are_byte_identical() {
    let body = serde_json::to_vec(&r1_allergic()).unwrap();
    let tasks: Vec<_> = (0..16)
        .map(|_| {
            let body = body.clone();
            tokio::spawn(async move { send(app(), "POST", "/v1/recommend", Some(body)).await })
        })
        .collect();
    let mut outs = Vec::new();
    for t in tasks {
        outs.push(t.await.unwrap());
    }
    assert!(outs.iter().all(|(s, b)| *s == StatusCode::OK && *b == outs[0].1));
}

#[tokio::test]
async fn responses_do_not_depend_on_request_history() {
    let alone = send(app(), "POST", "/v1/recommend", Some(serde_json::to_vec(&r1()).unwrap())).await;
    let app = app();
    let mut after = None;
    for body in [r1_allergic(), json!({"record": r1(), "config": {"tau": 0.99}}), r1()] {
        let uri = if body.get("record").is_some() { "/v1/whatif" } else { "/v1/recommend" };
        after = Some(send(app.clone(), "POST", uri, Some(serde_json::to_vec(&body).unwrap())).await);
    }
    assert_eq!(after.unwrap(), alone);
}

#[tokio::test]
async fn unknown_routes_are_json_404() {
    let (s, v) = get(app(), "/v2/anything").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "unknown_route");
}
