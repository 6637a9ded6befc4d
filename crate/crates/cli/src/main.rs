use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use motiffed::experiment::{run_experiment, ExperimentConfig, ExperimentResult, Mode};
use motiffed::graph::{load_dataset, partition, DatasetFormat, PartitionMode, PartitionSpec};
use motiffed::metrics::verify_shapley;
use motiffed::motif::{build_vocabulary, DEFAULT_MAX_RING_LEN};
use motiffed::valuation::MAX_EXACT_AGENTS;

#[derive(Parser)]
#[command(name = "motiffed", version, about = "Incentive-aware graph federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write streams and summaries to a directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-out contribution of one agent to global test accuracy.
    Loo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        exclude: usize,
        /// Also write the full output layout here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the motif vocabulary of a dataset and export it as JSON.
    Vocab {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        dump_vocab: PathBuf,
        /// JSONL or TU_TEXT; inferred from the extension when omitted.
        #[arg(long)]
        format: Option<DatasetFormat>,
        #[arg(long, default_value_t = 10)]
        agents: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_RING_LEN)]
        max_ring_len: usize,
        #[arg(long, default_value_t = 0.9)]
        beta_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the cosine approximation with exact Shapley values on random
    /// Gaussian gradients.
    VerifyShapley {
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn report_seeds(result: &ExperimentResult) -> bool {
    for s in &result.summaries {
        match &s.error {
            Some(e) => eprintln!("seed {}: failed: {e}", s.seed),
            None => {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
                println!(
                    "seed {}: personalized {} global {} fairness {} payoff L/M/H {} {} {}",
                    s.seed,
                    fmt(s.personalized_accuracy),
                    fmt(s.global_accuracy),
                    fmt(s.gradient_fairness),
                    fmt(s.payoff_low),
                    fmt(s.payoff_med),
                    fmt(s.payoff_high),
                );
            }
        }
    }
    if let Some(b) = &result.bucket_payoffs {
        let parts: Vec<String> = b.iter().map(|(k, v)| format!("{k} {v:.4}")).collect();
        println!("mean payoff per round: {}", parts.join(", "));
    }
    result.all_completed()
}

fn infer_format(path: &Path) -> DatasetFormat {
    if path.extension().is_some_and(|e| e == "jsonl" || e == "json") {
        DatasetFormat::Jsonl
    } else {
        DatasetFormat::TuText
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out } => {
            let config = ExperimentConfig::from_path(&config).with_context(|| format!("loading {}", config.display()))?;
            let result = run_experiment(&config, Some(&out))?;
            Ok(report_seeds(&result))
        }
        Command::Loo { config, exclude, out } => {
            let mut config =
                ExperimentConfig::from_path(&config).with_context(|| format!("loading {}", config.display()))?;
            config.mode = Mode::LeaveOneOut;
            config.exclude = Some(exclude);
            config.validate()?;
            let result = run_experiment(&config, out.as_deref())?;
            println!("seed,round,contribution,absolute");
            for run in result.runs.iter().flatten() {
                if let Some(loo) = &run.leave_one_out {
                    for (t, (c, a)) in loo.contributions.iter().zip(&loo.absolute).enumerate() {
                        println!("{},{},{c},{a}", run.seed, t + 1);
                    }
                }
            }
            for s in result.summaries.iter().filter(|s| s.error.is_some()) {
                eprintln!("seed {}: failed: {}", s.seed, s.error.as_deref().unwrap_or_default());
            }
            Ok(result.all_completed())
        }
        Command::Vocab {
            dataset,
            dump_vocab,
            format,
            agents,
            max_ring_len,
            beta_s,
            seed,
        } => {
            let format = format.unwrap_or_else(|| infer_format(&dataset));
            let graphs = load_dataset(&dataset, format)?;
            let data = partition(
                &graphs,
                &PartitionSpec {
                    n_agents: agents,
                    global_test_frac: 0.1,
                    local_test_frac: 0.1,
                    seed,
                    mode: PartitionMode::Iid,
                },
            )?;
            let vocab = build_vocabulary(&data, max_ring_len, beta_s)?;
            let text = serde_json::to_string_pretty(&vocab.export())?;
            fs::write(&dump_vocab, text + "\n").with_context(|| format!("writing {}", dump_vocab.display()))?;
            println!(
                "{} graphs, {} candidate motifs, {} retained",
                graphs.len(),
                vocab.candidates(),
                vocab.len()
            );
            Ok(true)
        }
        Command::VerifyShapley { n, trials, dim, seed } => {
            if n > MAX_EXACT_AGENTS {
                bail!("exact Shapley enumeration supports at most {MAX_EXACT_AGENTS} agents");
            }
            let check = verify_shapley(n, dim, trials, seed)?;
            let pass = check.mean_spearman >= 0.8 && check.max_efficiency_error <= 1e-9;
            println!(
                "n {} dim {} trials {}: mean spearman {:.4}, max efficiency error {:.3e}: {}",
                check.n_agents,
                check.dim,
                check.trials,
                check.mean_spearman,
                check.max_efficiency_error,
                if pass { "PASS" } else { "FAIL" }
            );
            Ok(pass)
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
