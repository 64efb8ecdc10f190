use dentkg_service::{ConfigError, Engine, ServiceConfig};

fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn toml_then_env_overrides() {
    let mut c = ServiceConfig::from_toml_str(
        r#"
        tau = 0.7
        top_k = 12
        bind = "0.0.0.0:9000"
        [weights]
        w_dose = 0.5
        w_allergy = 0.3
        w_interaction = 0.2
        "#,
    )
    .unwrap();
    assert_eq!(c.tau, 0.7);
    assert_eq!(c.guidelines_m, 3);
    c.apply_env(env(&[("DENTKG_TAU", "0.9"), ("DENTKG_WEIGHTS", "0.2,0.4,0.4"), ("UNRELATED", "x")]))
        .unwrap();
    assert_eq!(c.tau, 0.9);
    assert_eq!(c.weights.w_interaction, 0.4);
    assert_eq!(c.bind, "0.0.0.0:9000");
    let e = c.engine_config().unwrap();
    assert_eq!(e.retrieval.k, 12);
    assert_eq!(e.safety.tau, 0.9);
}

#[test]
fn unknown_keys_and_bad_env_are_rejected() {
    assert!(ServiceConfig::from_toml_str("tua = 0.5").is_err());
    let mut c = ServiceConfig::default();
    assert!(matches!(c.apply_env(env(&[("DENTKG_WEIGHTS", "0.5,0.5")])), Err(ConfigError::Env { .. })));
    assert!(matches!(c.apply_env(env(&[("DENTKG_TOP_K", "many")])), Err(ConfigError::Env { .. })));
}

#[test]
fn out_of_range_values_name_their_fields() {
    let c = ServiceConfig {
        tau: 1.5,
        alpha: 2.0,
        top_k: 0,
        ..ServiceConfig::default()
    };
    let Err(ConfigError::Invalid(v)) = c.engine_config() else {
        panic!("expected violations");
    };
    let fields: Vec<&str> = v.iter().map(|f| f.field.as_str()).collect();
    assert_eq!(fields, ["alpha", "tau", "top_k"]);
}

#[test]
fn missing_files_fail_to_load() {
    let c = ServiceConfig {
        kg_path: Some("/nonexistent/kg.jsonl".into()),
        ..ServiceConfig::default()
    };
    assert!(Engine::load(&c).is_err());
}

#[test]
fn classifier_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let kg = dir.path().join("kg.jsonl");
    std::fs::write(&kg, dentkg::fixtures::KG_MINI).unwrap();
    let graph = dentkg::fixtures::kg_mini();
    let trained = dentkg::SafetyClassifier::train_default(&graph).unwrap();
    let clf = dir.path().join("clf.json");
    std::fs::write(&clf, serde_json::to_string(&trained).unwrap()).unwrap();
    let c = ServiceConfig {
        kg_path: Some(kg),
        classifier_path: Some(clf),
        ..ServiceConfig::default()
    };
    let e = Engine::load(&c).unwrap();
    assert_eq!(e.classifier, trained);
    assert_eq!(e.graph.nodes().len(), graph.nodes().len());
}
