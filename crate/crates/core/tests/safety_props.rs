use std::sync::LazyLock;

use proptest::prelude::*;
use proptest::sample::subsequence;

use dentkg::kg::AttrValue;
use dentkg::parser::PatientProfile;
use dentkg::safety::{
    hard_rule_check, s_allergy, s_dose, s_interaction, safety_score, HardViolation, SafetyScores,
};
use dentkg::{fixtures, validate, AntibioticCandidate, KnowledgeGraph, NodeKind, Relation, SafetyClassifier, SafetyWeights, Verdict};

static DENTAL: LazyLock<KnowledgeGraph> = LazyLock::new(fixtures::kg_dental);
static TRAINED: LazyLock<SafetyClassifier> = LazyLock::new(|| SafetyClassifier::train_default(&DENTAL).unwrap());

fn ids(kind: NodeKind) -> Vec<String> {
    DENTAL.nodes_of_kind(kind).map(|n| n.id.clone()).collect()
}

static DRUGS: LazyLock<Vec<String>> = LazyLock::new(|| ids(NodeKind::Drug));
static ALLERGIES: LazyLock<Vec<String>> = LazyLock::new(|| ids(NodeKind::AllergyClass));
static CONDITIONS: LazyLock<Vec<String>> = LazyLock::new(|| ids(NodeKind::Condition));

fn candidate() -> impl Strategy<Value = AntibioticCandidate> {
    (0..DRUGS.len(), 0.5f64..200.0, 1u32..6, 1u32..15)
        .prop_map(|(d, dose, f, days)| AntibioticCandidate::new(&DRUGS[d], dose, f, days))
}

fn profile() -> impl Strategy<Value = PatientProfile> {
    (
        0u32..=216,
        2.0f64..100.0,
        subsequence(ALLERGIES.clone(), 0..=2),
        subsequence(DRUGS.clone(), 0..=3),
        subsequence(CONDITIONS.clone(), 0..=2),
    )
        .prop_map(|(age, w, a, m, c)| {
            let mut p = PatientProfile::new(age, w);
            p.allergies.extend(a);
            p.current_medications.extend(m);
            p.comorbidities.extend(c);
            p
        })
}

fn weights() -> impl Strategy<Value = SafetyWeights> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..=1.0).prop_map(|(a, b, tau)| {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        SafetyWeights::new(lo, hi - lo, 1.0 - hi, tau).unwrap()
    })
}

/// The dental graph with one interaction edge's severity replaced.
fn with_severity(index: usize, severity: f64) -> KnowledgeGraph {
    let mut edges = DENTAL.edges().to_vec();
    let e = edges
        .iter_mut()
        .filter(|e| e.rel == Relation::InteractsWith)
        .nth(index)
        .unwrap();
    e.attrs.insert("severity".into(), AttrValue::Float(severity));
    KnowledgeGraph::from_parts(DENTAL.nodes().to_vec(), edges).unwrap()
}

fn interaction_count() -> usize {
    DENTAL.edges().iter().filter(|e| e.rel == Relation::InteractsWith).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn adding_an_allergy_never_raises_scores(c in candidate(), p in profile(), a in 0..2usize, w in weights()) {
        let before = safety_score(&c, &p, &DENTAL, &w).unwrap();
        let mut q = p.clone();
        q.allergies.insert(ALLERGIES[a % ALLERGIES.len()].clone());
        let after = safety_score(&c, &q, &DENTAL, &w).unwrap();
        prop_assert!(after.s_allergy <= before.s_allergy);
        prop_assert!(after.s_safety <= before.s_safety);
    }

    #[test]
    fn raising_a_severity_never_raises_s_interaction(
        c in candidate(), p in profile(), edge in 0..9usize, lo in 0.0f64..=1.0, hi in 0.0f64..=1.0,
    ) {
        let edge = edge % interaction_count();
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let a = s_interaction(&c, &p, &with_severity(edge, lo)).unwrap();
        let b = s_interaction(&c, &p, &with_severity(edge, hi)).unwrap();
        prop_assert!(b <= a);
    }

    #[test]
    fn moving_a_dose_toward_the_band_never_lowers_s_dose(c in candidate(), p in profile(), t in 0.0f64..=1.0) {
        let Some(rule) = DENTAL.dose_rule_for(&c.drug, p.age_months).unwrap() else {
            return Ok(());
        };
        let target = c.dose_mg_per_kg_day.clamp(rule.min_mg_per_kg_day, rule.max_mg_per_kg_day);
        let mut closer = c.clone();
        closer.dose_mg_per_kg_day = c.dose_mg_per_kg_day + t * (target - c.dose_mg_per_kg_day);
        prop_assert!(s_dose(&closer, &p, &DENTAL).unwrap() >= s_dose(&c, &p, &DENTAL).unwrap());
    }

    #[test]
    fn safety_is_the_weighted_sum(c in candidate(), p in profile(), w in weights()) {
        let s = safety_score(&c, &p, &DENTAL, &w).unwrap();
        let d = s_dose(&c, &p, &DENTAL).unwrap();
        let a = s_allergy(&c, &p, &DENTAL).unwrap();
        let i = s_interaction(&c, &p, &DENTAL).unwrap();
        prop_assert_eq!((s.s_dose, s.s_allergy, s.s_interaction), (d, a, i));
        let sum = w.w_dose * d + w.w_allergy * a + w.w_interaction * i;
        prop_assert_eq!(s.s_safety.to_bits(), sum.min(1.0).to_bits());
        prop_assert!((0.0..=1.0).contains(&s.s_safety));
    }

    #[test]
    fn verdict_semantics(c in candidate(), p in profile(), w in weights()) {
        let r = validate(&c, &p, &DENTAL, &w, &TRAINED).unwrap();
        prop_assert_eq!(&r.hard_violations, &hard_rule_check(&c, &p, &DENTAL).unwrap());
        match r.verdict {
            Verdict::Pass => {
                prop_assert!(r.hard_violations.is_empty());
                prop_assert!(r.classifier_unsafe_prob < 0.5);
                prop_assert!(r.s_safety >= w.tau);
            }
            Verdict::RejectHardRule => prop_assert!(!r.hard_violations.is_empty()),
            Verdict::RejectClassifier => prop_assert!(r.hard_violations.is_empty() && r.classifier_unsafe_prob >= 0.5),
            Verdict::RejectThreshold => {
                prop_assert!(r.hard_violations.is_empty() && r.classifier_unsafe_prob < 0.5);
                prop_assert!(r.s_safety < w.tau);
            }
        }
        prop_assert_eq!(r.tau, w.tau);
        prop_assert_eq!(r.weights, w);
    }

    #[test]
    fn reports_are_byte_stable(c in candidate(), p in profile()) {
        let w = SafetyWeights::default();
        let a = serde_json::to_string(&validate(&c, &p, &DENTAL, &w, &TRAINED).unwrap()).unwrap();
        let b = serde_json::to_string(&validate(&c, &p, &DENTAL, &w, &TRAINED).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn hard_violations_are_sorted_and_distinct(c in candidate(), p in profile()) {
        let v = hard_rule_check(&c, &p, &DENTAL).unwrap();
        prop_assert!(v.windows(2).all(|w| w[0] < w[1]));
    }
}

fn child() -> PatientProfile {
    PatientProfile::new(60, 20.0)
}

#[test]
fn dose_falloff_worked_example() {
    let g = fixtures::kg_mini();
    let s = safety_score(&AntibioticCandidate::new("AMX", 36.0, 2, 5), &child(), &g, &SafetyWeights::default()).unwrap();
    assert!((s.s_dose - 0.8).abs() < 1e-12);
    assert!((s.s_safety - 0.92).abs() < 1e-12);
}

#[test]
fn allergic_amoxicillin_worked_example() {
    let g = fixtures::kg_mini();
    let p = child().with_allergy("penicillin_allergy");
    let r = validate(
        &AntibioticCandidate::new("AMX", 50.0, 2, 5),
        &p,
        &g,
        &SafetyWeights::default(),
        &SafetyClassifier::permissive(),
    )
    .unwrap();
    assert_eq!(r.verdict, Verdict::RejectHardRule);
    assert_eq!(r.hard_violations, [HardViolation::AllergyConflict]);
    assert!((r.s_safety - 0.6).abs() < 1e-12);
    assert_eq!(
        r.scores(),
        SafetyScores {
            s_dose: 1.0,
            s_allergy: 0.0,
            s_interaction: 1.0,
            s_safety: r.s_safety
        }
    );
}

#[test]
fn pristine_candidate_passes_trained_classifier() {
    let g = fixtures::kg_mini();
    let c = SafetyClassifier::train_default(&g).unwrap();
    let r = validate(&AntibioticCandidate::new("AMX", 50.0, 2, 5), &child(), &g, &SafetyWeights::default(), &c).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert_eq!(r.s_safety, 1.0);
}

#[test]
fn two_comedications_take_the_worst_severity() {
    let p = child().with_medication("CBZ").with_medication("WAR");
    let s = s_interaction(&AntibioticCandidate::new("MTZ", 30.0, 3, 7), &p, &DENTAL).unwrap();
    assert!((s - 0.1).abs() < 1e-12);
}
