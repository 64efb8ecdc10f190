use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use dentkg::eval::cohort::{generate_cohort, CohortConfig};
use dentkg::eval::EvalOptions;
use dentkg::kg::synth::{scaled_graph, ScaleTarget};
use dentkg::numeric::roc_auc;
use dentkg::parser::tagger::{train_tagger, TaggerTraining};
use dentkg::safety::{candidate_features, synthetic_examples};
use dentkg::{EngineConfig, SafetyClassifier, Variant};
use dentkg_cli::{load_classifier, load_graph, parse_weights, run_evaluation, EvaluateSpec};

#[derive(Parser)]
#[command(name = "dentkg", version, about = "Pediatric dental antibiotic recommendation: evaluation and artifacts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a synthetic cohort and score it.
    Evaluate(EvaluateArgs),
    /// Write a synthetic cohort as line-delimited records.
    Cohort(CohortArgs),
    /// Train the safety classifier and write it as JSON.
    TrainClassifier(TrainClassifierArgs),
    /// Train the token tagger on a cohort and print its NLL curve.
    TrainTagger(TrainTaggerArgs),
    /// Write a seeded synthetic graph of a given size.
    ScaleGraph(ScaleGraphArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    /// Graph file; the bundled dental graph when omitted.
    #[arg(long)]
    kg: Option<PathBuf>,
    /// Classifier JSON; trained on the graph when omitted.
    #[arg(long)]
    classifier: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    cohort_seed: u64,
    #[arg(long, default_value_t = 1000)]
    n_records: usize,
    /// full, no_kg, no_rag, no_safety or all. Repeatable.
    #[arg(long, default_value = "full")]
    variant: Vec<String>,
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
    /// w_dose,w_allergy,w_interaction
    #[arg(long, default_value = "0.4,0.4,0.2")]
    weights: String,
    #[arg(long, default_value_t = 3)]
    topk: usize,
    /// Line-delimited report; the table still goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CohortArgs {
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    n_records: usize,
    #[arg(long)]
    allergy_rate: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainClassifierArgs {
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Seed of the held-out set the AUC is reported on.
    #[arg(long, default_value_t = 7_000_007)]
    eval_seed: u64,
}

#[derive(Args)]
struct TrainTaggerArgs {
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    cohort_seed: u64,
    #[arg(long, default_value_t = 200)]
    n_records: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    learning_rate: f64,
}

#[derive(Args)]
struct ScaleGraphArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    edges: usize,
    #[arg(long)]
    out: PathBuf,
}

fn variants(raw: &[String]) -> anyhow::Result<Vec<Variant>> {
    let mut out = Vec::new();
    for item in raw.iter().flat_map(|s| s.split(',')) {
        let parsed = if item == "all" {
            Variant::ALL.to_vec()
        } else {
            vec![item.parse::<Variant>().map_err(|e| anyhow::anyhow!("{e}"))?]
        };
        for v in parsed {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    Ok(out)
}

fn write(path: &PathBuf, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Evaluate(a) => {
            let graph = load_graph(a.kg.as_deref())?;
            let classifier = load_classifier(a.classifier.as_deref(), &graph)?;
            let mut config = EngineConfig::default();
            config.safety = parse_weights(&a.weights, a.tau)?;
            let spec = EvaluateSpec {
                cohort: CohortConfig::new(a.cohort_seed, a.n_records),
                variants: variants(&a.variant)?,
                config,
                options: EvalOptions {
                    top_k: a.topk,
                    ..EvalOptions::default()
                },
            };
            let run = run_evaluation(&spec, &graph, &classifier)?;
            if let Some(out) = &a.out {
                write(out, &run.to_jsonl())?;
            }
            print!("{}", run.table());
        }
        Command::Cohort(a) => {
            let graph = load_graph(a.kg.as_deref())?;
            let mut config = CohortConfig::new(a.seed, a.n_records);
            if let Some(r) = a.allergy_rate {
                config.allergy_rate = r;
            }
            let cohort = generate_cohort(&config, &graph)?;
            write(&a.out, &cohort.to_jsonl())?;
            eprintln!("{} records", cohort.records.len());
        }
        Command::TrainClassifier(a) => {
            let graph = load_graph(a.kg.as_deref())?;
            let model = SafetyClassifier::train_default(&graph)?;
            write(&a.out, &serde_json::to_string_pretty(&model)?)?;
            let held_out = synthetic_examples(&graph, 2000, a.eval_seed);
            let mut scores = Vec::with_capacity(held_out.len());
            for e in &held_out {
                scores.push(model.unsafe_probability(&candidate_features(&e.candidate, &e.profile, &graph)?));
            }
            let labels: Vec<bool> = held_out.iter().map(|e| e.unsafe_label).collect();
            println!("held-out auc {:.4}", roc_auc(&scores, &labels).context("held-out set has a single class")?);
        }
        Command::TrainTagger(a) => {
            let graph = load_graph(a.kg.as_deref())?;
            let corpus = generate_cohort(&CohortConfig::new(a.cohort_seed, a.n_records), &graph)?.records;
            let cfg = TaggerTraining {
                epochs: a.epochs,
                learning_rate: a.learning_rate,
                ..TaggerTraining::default()
            };
            let trained = train_tagger(&graph, &corpus, cfg)?;
            for (epoch, nll) in trained.epoch_nll.iter().enumerate() {
                println!("{}", serde_json::json!({"epoch": epoch, "nll_per_record": nll}));
            }
        }
        Command::ScaleGraph(a) => {
            let g = scaled_graph(
                a.seed,
                ScaleTarget {
                    nodes: a.nodes,
                    edges: a.edges,
                },
            )?;
            write(&a.out, &g.to_jsonl())?;
            eprintln!("{} nodes, {} edges", g.nodes().len(), g.edges().len());
        }
    }
    Ok(())
}
