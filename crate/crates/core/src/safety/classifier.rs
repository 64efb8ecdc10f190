//! Logistic unsafe-candidate classifier and its synthetic training data.
//!
//! Labels come from the hard rules: a candidate is unsafe iff
//! [`hard_rule_check`](super::hard_rule_check) reports any violation. The
//! synthetic generator perturbs doses around each drug's band and samples
//! allergies, comedications and comorbidities more often than a real clinic
//! would, so both classes are well represented.

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    hard_rule_check, interaction_severities, s_allergy, s_dose, s_interaction, AntibioticCandidate,
    SafetyError,
};
use crate::kg::{KnowledgeGraph, NodeKind, Relation};
use crate::numeric::{exact_sum, sigmoid};
use crate::parser::record::{PatientProfile, MAX_AGE_MONTHS};

pub const FEATURE_COUNT: usize = 8;

/// Feature vector: the three sub-scores, age over 216 months, weight over
/// 100 kg, the number of interaction edges with current medications, their
/// maximum severity, and the dose position within the band (-1 at the lower
/// bound, +1 at the upper, clipped; 0 without a rule).
pub fn candidate_features(
    candidate: &AntibioticCandidate,
    profile: &PatientProfile,
    graph: &KnowledgeGraph,
) -> Result<[f64; FEATURE_COUNT], SafetyError> {
    let severities = interaction_severities(graph, &candidate.drug, profile)?;
    let position = match graph.dose_rule_for(&candidate.drug, profile.age_months)? {
        None => 0.0,
        Some(rule) => {
            let mid = rule.midpoint();
            let half = 0.5 * (rule.max_mg_per_kg_day - rule.min_mg_per_kg_day);
            let offset = candidate.dose_mg_per_kg_day - mid;
            if half > 0.0 {
                (offset / half).clamp(-1.0, 1.0)
            } else {
                offset.signum() * f64::from(u8::from(offset != 0.0))
            }
        }
    };
    Ok([
        s_dose(candidate, profile, graph)?,
        s_allergy(candidate, profile, graph)?,
        s_interaction(candidate, profile, graph)?,
        f64::from(profile.age_months) / f64::from(MAX_AGE_MONTHS),
        profile.weight_kg / 100.0,
        severities.len() as f64,
        severities.iter().copied().fold(0.0, f64::max),
        position,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyClassifier {
    pub weights: [f64; FEATURE_COUNT],
    pub bias: f64,
    /// Probability at or above which a candidate is rejected.
    pub threshold: f64,
}

impl SafetyClassifier {
    pub fn unsafe_probability(&self, features: &[f64; FEATURE_COUNT]) -> f64 {
        sigmoid(self.logit(features))
    }

    fn logit(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Parameters as one vector, weights then bias.
    pub fn params(&self) -> [f64; FEATURE_COUNT + 1] {
        let mut p = [0.0; FEATURE_COUNT + 1];
        p[..FEATURE_COUNT].copy_from_slice(&self.weights);
        p[FEATURE_COUNT] = self.bias;
        p
    }

    pub fn from_params(params: &[f64; FEATURE_COUNT + 1], threshold: f64) -> Self {
        let mut weights = [0.0; FEATURE_COUNT];
        weights.copy_from_slice(&params[..FEATURE_COUNT]);
        SafetyClassifier {
            weights,
            bias: params[FEATURE_COUNT],
            threshold,
        }
    }

    /// A classifier that never rejects, leaving the hard rules and tau.
    pub fn permissive() -> Self {
        SafetyClassifier {
            weights: [0.0; FEATURE_COUNT],
            bias: -40.0,
            threshold: 0.5,
        }
    }

    /// Trains on 2,000 synthetic examples with seed 7 and default settings.
    pub fn train_default(graph: &KnowledgeGraph) -> Result<Self, SafetyError> {
        let config = ClassifierTraining::default();
        let examples = synthetic_examples(graph, 2000, config.seed);
        train_safety_classifier(graph, &examples, config)
    }
}

/// Mean logistic loss plus `l2 / 2 * |w|^2` (bias unpenalized), and its
/// gradient with respect to [`SafetyClassifier::params`].
pub fn loss_and_grad(
    params: &[f64; FEATURE_COUNT + 1],
    xs: &[[f64; FEATURE_COUNT]],
    ys: &[bool],
    l2: f64,
) -> (f64, [f64; FEATURE_COUNT + 1]) {
    let model = SafetyClassifier::from_params(params, 0.5);
    let n = xs.len().max(1) as f64;
    let mut grad = [0.0; FEATURE_COUNT + 1];
    let mut losses = Vec::with_capacity(xs.len());
    for (x, &y) in xs.iter().zip(ys) {
        let z = model.logit(x);
        let t = f64::from(u8::from(y));
        // log(1 + e^z) - t z, written to avoid overflow.
        losses.push(z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z);
        let r = sigmoid(z) - t;
        for (g, v) in grad.iter_mut().zip(x) {
            *g += r * v / n;
        }
        grad[FEATURE_COUNT] += r / n;
    }
    let penalty = 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in grad.iter_mut().zip(&model.weights) {
        *g += l2 * w;
    }
    (exact_sum(losses) / n + penalty, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTraining {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for ClassifierTraining {
    fn default() -> Self {
        ClassifierTraining {
            epochs: 200,
            learning_rate: 0.5,
            batch_size: 32,
            l2: 1e-4,
            seed: 7,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub candidate: AntibioticCandidate,
    pub profile: PatientProfile,
    pub unsafe_label: bool,
}

/// Mini-batch gradient descent from zero weights; batches are drawn from a
/// seeded shuffle each epoch.
pub fn train_safety_classifier(
    graph: &KnowledgeGraph,
    examples: &[LabeledExample],
    config: ClassifierTraining,
) -> Result<SafetyClassifier, SafetyError> {
    let positives = examples.iter().filter(|e| e.unsafe_label).count();
    if positives == 0 || positives == examples.len() {
        return Err(SafetyError::DegenerateLabels(positives > 0));
    }
    let xs = examples
        .iter()
        .map(|e| candidate_features(&e.candidate, &e.profile, graph))
        .collect::<Result<Vec<_>, _>>()?;
    let ys: Vec<bool> = examples.iter().map(|e| e.unsafe_label).collect();
    let mut params = [0.0; FEATURE_COUNT + 1];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let batch = config.batch_size.max(1);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let bx: Vec<_> = chunk.iter().map(|&i| xs[i]).collect();
            let by: Vec<_> = chunk.iter().map(|&i| ys[i]).collect();
            let (_, g) = loss_and_grad(&params, &bx, &by, config.l2);
            for (p, gi) in params.iter_mut().zip(&g) {
                *p -= config.learning_rate * gi;
            }
        }
    }
    Ok(SafetyClassifier::from_params(&params, config.threshold))
}

/// Plausible body weight for an age, before noise.
fn typical_weight(age_months: u32) -> f64 {
    let a = f64::from(age_months);
    if a < 12.0 {
        3.5 + 0.6 * a
    } else {
        10.7 + 0.2 * (a - 12.0)
    }
}

/// Drugs with at least one dose rule.
fn dosed_drugs(graph: &KnowledgeGraph) -> Vec<&str> {
    graph
        .nodes_of_kind(NodeKind::Drug)
        .filter(|d| !graph.dose_rules(&d.id).is_empty())
        .map(|d| d.id.as_str())
        .collect()
}

/// Conditions nothing indicates, i.e. background conditions rather than
/// dental diagnoses.
pub fn comorbidity_conditions(graph: &KnowledgeGraph) -> Vec<&str> {
    graph
        .nodes_of_kind(NodeKind::Condition)
        .filter(|c| graph.incoming(&c.id, Relation::Indicates).is_empty())
        .map(|c| c.id.as_str())
        .collect()
}

/// Sampling rates for [`synthetic_examples_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMix {
    /// Doses are drawn from `[(1 - spread) * min, (1 + spread) * max]`.
    pub dose_spread: f64,
    /// Share of candidates drawn from every drug, dosed or not.
    pub any_drug_rate: f64,
    pub allergy_rate: f64,
    pub comedication_rate: f64,
    pub comorbidity_rate: f64,
}

impl Default for SyntheticMix {
    fn default() -> Self {
        SyntheticMix {
            dose_spread: 0.25,
            any_drug_rate: 0.1,
            allergy_rate: 0.25,
            comedication_rate: 0.25,
            comorbidity_rate: 0.05,
        }
    }
}

/// `n` rule-labelled candidate/profile pairs drawn from a seeded stream.
pub fn synthetic_examples(graph: &KnowledgeGraph, n: usize, seed: u64) -> Vec<LabeledExample> {
    synthetic_examples_with(graph, n, seed, SyntheticMix::default())
}

pub fn synthetic_examples_with(
    graph: &KnowledgeGraph,
    n: usize,
    seed: u64,
    mix: SyntheticMix,
) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dosed = dosed_drugs(graph);
    let all_drugs: Vec<&str> = graph.nodes_of_kind(NodeKind::Drug).map(|d| d.id.as_str()).collect();
    let allergies: Vec<&str> = graph.nodes_of_kind(NodeKind::AllergyClass).map(|a| a.id.as_str()).collect();
    let comorbidities = comorbidity_conditions(graph);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let pool = if dosed.is_empty() || rng.gen_bool(mix.any_drug_rate) { &all_drugs } else { &dosed };
        let Some(&drug) = pool.choose(&mut rng) else {
            break;
        };
        let age = rng.gen_range(0..=MAX_AGE_MONTHS);
        let weight = (typical_weight(age) * rng.gen_range(0.8..1.3)).clamp(2.0, 140.0);
        let mut profile = PatientProfile::new(age, weight);
        if rng.gen_bool(mix.allergy_rate) {
            if let Some(a) = allergies.choose(&mut rng) {
                profile.allergies.insert((*a).to_owned());
            }
        }
        if rng.gen_bool(mix.comedication_rate) {
            let k = rng.gen_range(1..=2);
            for m in all_drugs.iter().filter(|d| **d != drug).choose_multiple(&mut rng, k) {
                profile.current_medications.insert((*m).to_owned());
            }
        }
        if rng.gen_bool(mix.comorbidity_rate) {
            if let Some(c) = comorbidities.choose(&mut rng) {
                profile.comorbidities.insert((*c).to_owned());
            }
        }
        let rule = graph.dose_rule_for(drug, age).ok().flatten();
        let candidate = match rule {
            Some(r) => AntibioticCandidate::new(
                drug,
                rng.gen_range((1.0 - mix.dose_spread) * r.min_mg_per_kg_day..=(1.0 + mix.dose_spread) * r.max_mg_per_kg_day),
                rng.gen_range(r.freq_min_per_day..=r.freq_max_per_day),
                rng.gen_range(r.duration_min_days..=r.duration_max_days),
            ),
            None => AntibioticCandidate::new(
                drug,
                rng.gen_range(5.0..60.0),
                rng.gen_range(1..=4),
                rng.gen_range(3..=10),
            ),
        };
        let unsafe_label = !hard_rule_check(&candidate, &profile, graph)
            .expect("generated ids exist")
            .is_empty();
        out.push(LabeledExample {
            candidate,
            profile,
            unsafe_label,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::numeric::roc_auc;

    #[test]
    fn degenerate_labels_rejected() {
        let g = fixtures::kg_mini();
        let ex = LabeledExample {
            candidate: AntibioticCandidate::new("AMX", 50.0, 2, 5),
            profile: PatientProfile::new(60, 20.0),
            unsafe_label: false,
        };
        let err = train_safety_classifier(&g, &[ex.clone(), ex], ClassifierTraining::default());
        assert!(matches!(err, Err(SafetyError::DegenerateLabels(false))));
    }

    #[test]
    fn dose_position_feature() {
        let g = fixtures::kg_mini();
        let p = PatientProfile::new(60, 20.0);
        let pos = |dose| candidate_features(&AntibioticCandidate::new("AMX", dose, 2, 5), &p, &g).unwrap()[7];
        assert_eq!(pos(65.0), 0.0);
        assert_eq!(pos(40.0), -1.0);
        assert_eq!(pos(90.0), 1.0);
        assert_eq!(pos(200.0), 1.0);
        assert_eq!(pos(77.5), 0.5);
    }

    #[test]
    fn synthetic_examples_are_deterministic() {
        let g = fixtures::kg_mini();
        assert_eq!(synthetic_examples(&g, 50, 3), synthetic_examples(&g, 50, 3));
        assert_ne!(synthetic_examples(&g, 50, 3), synthetic_examples(&g, 50, 4));
    }

    #[test]
    fn trained_classifier_separates_small_set() {
        let g = fixtures::kg_dental();
        let train = synthetic_examples(&g, 400, 1);
        let test = synthetic_examples(&g, 300, 2);
        let cfg = ClassifierTraining {
            epochs: 50,
            ..Default::default()
        };
        let model = train_safety_classifier(&g, &train, cfg).unwrap();
        let scores: Vec<f64> = test
            .iter()
            .map(|e| model.unsafe_probability(&candidate_features(&e.candidate, &e.profile, &g).unwrap()))
            .collect();
        let labels: Vec<bool> = test.iter().map(|e| e.unsafe_label).collect();
        assert!(roc_auc(&scores, &labels).unwrap() > 0.85);
    }
}
