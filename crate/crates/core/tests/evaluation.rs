use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use proptest::prelude::*;

use dentkg::eval::cohort::{generate_cohort, CohortConfig, Split};
use dentkg::eval::{bleu4, bootstrap_ci, evaluate, matches_gold, mean, run_ablation, EvalOptions};
use dentkg::parser::record::GoldPrescription;
use dentkg::parser::PatientProfile;
use dentkg::safety::hard_rule_check;
use dentkg::{fixtures, validate, AntibioticCandidate, EngineConfig, KnowledgeGraph, SafetyClassifier, Variant, Verdict};

static DENTAL: LazyLock<KnowledgeGraph> = LazyLock::new(fixtures::kg_dental);
static TRAINED: LazyLock<SafetyClassifier> = LazyLock::new(|| SafetyClassifier::train_default(&DENTAL).unwrap());

#[test]
fn cohort_is_byte_identical_on_rerun() {
    let a = generate_cohort(&CohortConfig::new(42, 100), &DENTAL).unwrap().to_jsonl();
    let b = generate_cohort(&CohortConfig::new(42, 100), &DENTAL).unwrap().to_jsonl();
    assert_eq!(a, b);
    let c = generate_cohort(&CohortConfig::new(43, 100), &DENTAL).unwrap().to_jsonl();
    assert_ne!(a, c);
}

#[test]
fn full_allergy_rate_gives_every_profile_an_allergy() {
    let config = CohortConfig {
        allergy_rate: 1.0,
        ..CohortConfig::new(3, 200)
    };
    let cohort = generate_cohort(&config, &DENTAL).unwrap();
    assert!(cohort.records.iter().all(|r| !r.profile.allergies.is_empty()));
}

#[test]
fn gold_prescriptions_validate() {
    let cohort = generate_cohort(&CohortConfig::new(42, 1000), &DENTAL).unwrap();
    let weights = EngineConfig::default().safety;
    for r in &cohort.records {
        let gold = r.gold.as_ref().unwrap().prescription.as_ref().unwrap();
        let c = AntibioticCandidate::new(&gold.drug, gold.dose_mg_per_kg_day, gold.frequency_per_day, gold.duration_days);
        let report = validate(&c, &r.profile, &DENTAL, &weights, &TRAINED).unwrap();
        assert_eq!(report.verdict, Verdict::Pass, "{}: {report:?}", r.record_id);
    }
}

#[test]
fn patients_never_span_splits() {
    let cohort = generate_cohort(&CohortConfig::new(42, 1000), &DENTAL).unwrap();
    let mut split_of: BTreeMap<&str, Split> = BTreeMap::new();
    for (r, s) in cohort.records.iter().zip(&cohort.splits) {
        let p = r.patient_id.as_deref().unwrap();
        assert_eq!(*split_of.entry(p).or_insert(*s), *s, "{p}");
    }
    let share = |s: Split| cohort.split(s).len() as f64 / cohort.records.len() as f64;
    assert!((share(Split::Train) - 0.70).abs() < 0.05);
    assert!((share(Split::Dev) - 0.15).abs() < 0.05);
    assert!((share(Split::Test) - 0.15).abs() < 0.05);
}

#[test]
fn cvr_equals_a_recount_over_emissions() {
    let cohort = generate_cohort(&CohortConfig::new(11, 300), &DENTAL).unwrap();
    for variant in Variant::ALL {
        let (report, outcomes) = evaluate(
            &cohort.records,
            &DENTAL,
            &TRAINED,
            &EngineConfig::default(),
            variant,
            &EvalOptions::default(),
        )
        .unwrap();
        let mut emitted = 0usize;
        let mut violating = 0usize;
        for (o, r) in outcomes.iter().zip(&cohort.records) {
            if let Some(c) = o.decision.emitted() {
                emitted += 1;
                if !hard_rule_check(c, &r.profile, &DENTAL).unwrap().is_empty() {
                    violating += 1;
                }
            }
        }
        let recount = if emitted == 0 { 0.0 } else { violating as f64 / emitted as f64 };
        assert_eq!(report.cvr.to_bits(), recount.to_bits(), "{variant}");
        assert_eq!(report.n_emitted, emitted);
    }
}

#[test]
fn forced_allergy_conflict_counts_against_no_safety() {
    let mut record = fixtures::abscess_record();
    record.profile.allergies.insert("penicillin_allergy".into());
    let records = [record];
    let g = fixtures::kg_mini();
    let c = SafetyClassifier::permissive();
    let config = EngineConfig::default();
    let (raw, _) = evaluate(&records, &g, &c, &config, Variant::NoSafety, &EvalOptions::default()).unwrap();
    assert_eq!(raw.cvr, 1.0);
    let (full, _) = evaluate(&records, &g, &c, &config, Variant::Full, &EvalOptions::default()).unwrap();
    assert_eq!(full.cvr, 0.0);
}

#[test]
fn ablation_reports_stay_in_bounds() {
    let cohort = generate_cohort(&CohortConfig::new(8, 200), &DENTAL).unwrap();
    let reports = run_ablation(
        &cohort.records,
        &DENTAL,
        &TRAINED,
        &EngineConfig::default(),
        &Variant::ALL,
        &EvalOptions::default(),
    )
    .unwrap();
    assert_eq!(reports.len(), 4);
    for r in &reports {
        for v in [r.ner_precision, r.ner_recall, r.ner_f1, r.top1, r.top3, r.top_k, r.cvr, r.der, r.gcs, r.eas, r.abstention_rate] {
            assert!((0.0..=1.0).contains(&v), "{r:?}");
        }
        assert!((0.0..=100.0).contains(&r.bleu));
        assert!(r.top1 <= r.top3);
        for ci in [r.top1_ci, r.cvr_ci, r.eas_ci].into_iter().flatten() {
            assert!(ci.low <= ci.high);
        }
    }
}

#[test]
fn duration_tolerance_in_matching() {
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
fn bleu_hand_computed_pairs() {
    // Clipped n-gram matches 5/6, 3/5, 1/4, 0/3, smoothed above unigrams to
    // 5/6, 4/6, 2/5, 1/4; equal lengths so no brevity penalty.
    let got = bleu4(&["the cat sat on the mat"], &["the cat is on the mat"]).unwrap();
    let want = 100.0 * (5.0 / 6.0 * 4.0 / 6.0 * 2.0 / 5.0 * 1.0 / 4.0f64).powf(0.25);
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");

    // Two-word candidate against six words: every smoothed precision is 1,
    // brevity penalty exp(1 - 6/2).
    let got = bleu4(&["the cat"], &["the cat sat on the mat"]).unwrap();
    assert!((got - 100.0 * (-2.0f64).exp()).abs() < 1e-12);

    // Corpus counts pool across segments rather than averaging sentence scores.
    let got = bleu4(&["a b c d", "x y"], &["a b c d", "x z"]).unwrap();
    let p = [5.0 / 6.0, 4.0 / 5.0, 3.0 / 3.0, 2.0 / 2.0];
    let want = 100.0 * (p.iter().map(|x: &f64| x.ln()).sum::<f64>() / 4.0).exp();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn bootstrap_brackets_the_mean_of_symmetric_data(
        centre in -10.0f64..10.0,
        offsets in prop::collection::vec(0.0f64..5.0, 1..40),
        seed in any::<u64>(),
    ) {
        let samples: Vec<f64> = offsets.iter().flat_map(|d| [centre + d, centre - d]).collect();
        let m = mean(&samples);
        let (lo, hi) = bootstrap_ci(&samples, 1000, 0.95, seed).unwrap();
        prop_assert!(lo <= m && m <= hi, "{} not in [{}, {}]", m, lo, hi);
        prop_assert_eq!(bootstrap_ci(&samples, 1000, 0.95, seed).unwrap(), (lo, hi));
    }

    #[test]
    fn bleu_is_bounded(
        cands in prop::collection::vec("[abc ]{0,12}", 1..5),
        refs in prop::collection::vec("[abc ]{0,12}", 1..5),
    ) {
        let n = cands.len().min(refs.len());
        let b = bleu4(&cands[..n], &refs[..n]).unwrap();
        prop_assert!((0.0..=100.0).contains(&b));
    }
}

#[test]
fn first_line_gold_drugs_exist() {
    let cohort = generate_cohort(&CohortConfig::new(42, 200), &DENTAL).unwrap();
    let drugs: BTreeSet<&str> = cohort
        .records
        .iter()
        .filter_map(|r| r.gold.as_ref()?.prescription.as_ref().map(|p| p.drug.as_str()))
        .collect();
    assert!(drugs.len() >= 2, "{drugs:?}");
}
