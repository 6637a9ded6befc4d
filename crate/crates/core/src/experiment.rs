//! Experiment orchestration: configuration, data preparation (partition,
//! edge perturbation, label shuffling), per-seed runs, metrics and the output
//! directory layout.
//!
//! ```text
//! <out>/config.json
//! <out>/summary.csv            one row per seed
//! <out>/summary.json           per-seed rows plus cross-seed bucket payoffs
//! <out>/seed_<s>/rounds.jsonl  one RoundReport per line
//! <out>/seed_<s>/selftrain.jsonl
//! <out>/seed_<s>/perturbation.json
//! <out>/seed_<s>/loo.csv
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{self_train, FederationConfig, RoundReport, Simulation};
use crate::graph::synthetic::{generate, SyntheticSpec};
use crate::graph::{load_dataset, partition, perturb_edges, DatasetFormat, FederationData, Graph, PartitionMode, PartitionSpec};
use crate::metrics::{gradient_fairness, payoff_fairness, Bucket};
use crate::rng::{derive_seed, rng_for, tag};
use crate::valuation::{loo_contributions, LeaveOneOut};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    File { path: PathBuf, format: DatasetFormat },
    /// Generated per seed; the generator seed is `spec.seed + seed`.
    Synthetic(SyntheticSpec),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    #[default]
    Federated,
    SelfTrain,
    LeaveOneOut,
}

/// Bucket per agent and the flip-ratio interval `[lo, hi)` of each bucket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub buckets: Vec<Bucket>,
    #[serde(default = "default_intervals")]
    pub intervals: BTreeMap<Bucket, [f64; 2]>,
}

pub fn default_intervals() -> BTreeMap<Bucket, [f64; 2]> {
    BTreeMap::from([
        (Bucket::Low, [0.7, 1.0]),
        (Bucket::Med, [0.3, 0.7]),
        (Bucket::High, [0.0, 0.3]),
    ])
}

impl PerturbationPlan {
    /// 3 LOW, 3 MED and 4 HIGH agents with the default intervals.
    pub fn standard() -> Self {
        let mut buckets = vec![Bucket::Low; 3];
        buckets.extend([Bucket::Med; 3]);
        buckets.extend([Bucket::High; 4]);
        PerturbationPlan {
            buckets,
            intervals: default_intervals(),
        }
    }

    fn validate(&self, n_agents: usize) -> Result<()> {
        if self.buckets.len() != n_agents {
            return Err(Error::Config(format!(
                "perturbation plan assigns {} buckets to {n_agents} agents",
                self.buckets.len()
            )));
        }
        for b in &self.buckets {
            let [lo, hi] = self
                .intervals
                .get(b)
                .ok_or_else(|| Error::Config(format!("no flip interval for bucket {b}")))?;
            if !(0.0 <= *lo && lo < hi && *hi <= 1.0) {
                return Err(Error::Config(format!("flip interval of {b} must satisfy 0 <= lo < hi <= 1")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub n_agents: usize,
    pub global_test_frac: f64,
    pub local_test_frac: f64,
    pub partition_mode: PartitionMode,
    pub seeds: Vec<u64>,
    pub rounds: usize,
    pub federation: FederationConfig<f64>,
    pub perturbation: Option<PerturbationPlan>,
    /// Agents whose training labels are replaced by uniform random classes.
    pub shuffled_agents: Vec<usize>,
    pub mode: Mode,
    /// Also run the self-train baseline and report gradient fairness.
    pub gradient_fairness: bool,
    /// Agent removed in `LEAVE_ONE_OUT` mode.
    pub exclude: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::default(),
            n_agents: 10,
            global_test_frac: 0.1,
            local_test_frac: 0.1,
            partition_mode: PartitionMode::Iid,
            seeds: vec![0],
            rounds: 200,
            federation: FederationConfig::default(),
            perturbation: None,
            shuffled_agents: Vec::new(),
            mode: Mode::Federated,
            gradient_fairness: false,
            exclude: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML when the extension is `.toml`, JSON otherwise.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text)?
        } else {
            serde_json::from_str(&text)?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.federation.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if let Some(plan) = &self.perturbation {
            plan.validate(self.n_agents)?;
        }
        if let Some(&a) = self.shuffled_agents.iter().find(|&&a| a >= self.n_agents) {
            return Err(Error::Config(format!("shuffled agent {a} does not exist")));
        }
        match (self.mode, self.exclude) {
            (Mode::LeaveOneOut, None) => Err(Error::Config("LEAVE_ONE_OUT mode needs `exclude`".into())),
            (Mode::LeaveOneOut, Some(a)) if a >= self.n_agents => {
                Err(Error::Config(format!("excluded agent {a} does not exist")))
            }
            _ => Ok(()),
        }
    }

    /// Flip-ratio bucket of every agent, if perturbation is enabled.
    pub fn buckets(&self) -> Option<&[Bucket]> {
        self.perturbation.as_ref().map(|p| p.buckets.as_slice())
    }
}

/// What was done to one agent's data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPreparation {
    pub agent: usize,
    pub bucket: Option<Bucket>,
    pub flip_ratio: f64,
    pub labels_shuffled: bool,
}

fn load_graphs(source: &DatasetSource, seed: u64) -> Result<Vec<Graph>> {
    match source {
        DatasetSource::File { path, format } => load_dataset(path, *format),
        DatasetSource::Synthetic(spec) => generate(&SyntheticSpec {
            seed: spec.seed.wrapping_add(seed),
            ..spec.clone()
        }),
    }
}

/// Partitions the dataset for `seed`, then perturbs edges of each agent's
/// train and test graphs with a ratio drawn uniformly from its bucket's
/// interval, and shuffles the training labels of the configured agents.
pub fn prepare_data(config: &ExperimentConfig, seed: u64) -> Result<(FederationData, Vec<AgentPreparation>)> {
    config.validate()?;
    let graphs = load_graphs(&config.dataset, seed)?;
    let mut data = partition(
        &graphs,
        &PartitionSpec {
            n_agents: config.n_agents,
            global_test_frac: config.global_test_frac,
            local_test_frac: config.local_test_frac,
            seed,
            mode: config.partition_mode,
        },
    )?;
    let n_classes = data.n_classes();
    let mut prep = Vec::with_capacity(config.n_agents);
    for (i, agent) in data.agents.iter_mut().enumerate() {
        let mut record = AgentPreparation {
            agent: i,
            bucket: None,
            flip_ratio: 0.0,
            labels_shuffled: false,
        };
        if let Some(plan) = &config.perturbation {
            let bucket = plan.buckets[i];
            let [lo, hi] = plan.intervals[&bucket];
            let ratio = rng_for(seed, &[tag::BUCKET_RATIO, i as u64]).gen_range(lo..hi);
            for (j, g) in agent.train.iter_mut().chain(agent.test.iter_mut()).enumerate() {
                *g = perturb_edges(g, ratio, derive_seed(seed, &[tag::PERTURB, i as u64, j as u64]))?;
            }
            record.bucket = Some(bucket);
            record.flip_ratio = ratio;
        }
        if config.shuffled_agents.contains(&i) {
            let mut rng = rng_for(seed, &[tag::LABEL_SHUFFLE, i as u64]);
            for g in agent.train.iter_mut() {
                *g = g.clone().with_class_label(rng.gen_range(0..n_classes));
            }
            record.labels_shuffled = true;
        }
        prep.push(record);
    }
    Ok((data, prep))
}

/// Everything one seed produced.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub preparation: Vec<AgentPreparation>,
    /// Federated stream (self-train stream in `SELF_TRAIN` mode).
    pub reports: Vec<RoundReport<f64>>,
    pub selftrain: Option<Vec<RoundReport<f64>>>,
    pub leave_one_out: Option<LeaveOneOut>,
}

/// One `summary.csv` row. Every field is a function of the seed's streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub status: String,
    pub error: Option<String>,
    pub rounds: Option<usize>,
    pub personalized_accuracy: Option<f64>,
    pub global_accuracy: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub gradient_fairness: Option<f64>,
    pub payoff_low: Option<f64>,
    pub payoff_med: Option<f64>,
    pub payoff_high: Option<f64>,
    pub mean_loo_contribution: Option<f64>,
}

impl SeedSummary {
    fn failed(seed: u64, err: &Error) -> Self {
        SeedSummary {
            seed,
            status: "failed".into(),
            error: Some(err.to_string()),
            rounds: None,
            personalized_accuracy: None,
            global_accuracy: None,
            final_train_loss: None,
            gradient_fairness: None,
            payoff_low: None,
            payoff_med: None,
            payoff_high: None,
            mean_loo_contribution: None,
        }
    }
}

/// Recomputes a seed's summary row from its streams. Gradient fairness is
/// left empty when either accuracy vector is constant.
pub fn summarize(
    seed: u64,
    reports: &[RoundReport<f64>],
    selftrain: Option<&[RoundReport<f64>]>,
    buckets: Option<&[Bucket]>,
    loo: Option<&LeaveOneOut>,
) -> Result<SeedSummary> {
    let last = reports.last();
    let fairness = match (selftrain.and_then(|s| s.last()), last) {
        (Some(alone), Some(fed)) => {
            let xi: Vec<f64> = alone.agents.iter().map(|a| a.test_accuracy).collect();
            let psi: Vec<f64> = fed.agents.iter().map(|a| a.test_accuracy).collect();
            match gradient_fairness(&xi, &psi) {
                Ok(r) => Some(r),
                Err(Error::UndefinedCorrelation) => None,
                Err(e) => return Err(e),
            }
        }
        _ => None,
    };
    let has_payoffs = last.is_some_and(|r| r.agents.iter().all(|a| a.payoff.is_some()));
    let per_bucket = match buckets {
        Some(b) if has_payoffs => Some(payoff_fairness(&[reports], b)?),
        _ => None,
    };
    let bucket = |b: Bucket| per_bucket.as_ref().and_then(|m| m.get(&b).copied());
    Ok(SeedSummary {
        seed,
        status: "ok".into(),
        error: None,
        rounds: Some(reports.len()),
        personalized_accuracy: last.map(|r| r.personalized_accuracy()),
        global_accuracy: last.map(|r| r.global_accuracy),
        final_train_loss: last.map(|r| r.mean_train_loss()),
        gradient_fairness: fairness,
        payoff_low: bucket(Bucket::Low),
        payoff_med: bucket(Bucket::Med),
        payoff_high: bucket(Bucket::High),
        mean_loo_contribution: loo
            .filter(|l| !l.contributions.is_empty())
            .map(|l| l.contributions.iter().sum::<f64>() / l.contributions.len() as f64),
    })
}

/// Runs one seed end to end in memory.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let (data, preparation) = prepare_data(config, seed)?;
    let fed = &config.federation;
    let mut run = SeedRun {
        seed,
        preparation,
        reports: Vec::new(),
        selftrain: None,
        leave_one_out: None,
    };
    match config.mode {
        Mode::SelfTrain => {
            run.reports = self_train(&data, fed, seed, config.rounds)?;
        }
        Mode::Federated | Mode::LeaveOneOut => {
            run.reports = Simulation::new(&data, fed.clone(), seed)?.run(config.rounds)?;
            if config.gradient_fairness {
                run.selftrain = Some(self_train(&data, fed, seed, config.rounds)?);
            }
            if let (Mode::LeaveOneOut, Some(excluded)) = (config.mode, config.exclude) {
                let reduced = data.without_agent(excluded)?;
                let without = Simulation::new(&reduced, fed.clone(), seed)?.run(config.rounds)?;
                run.leave_one_out = Some(loo_contributions(&run.reports, &without));
            }
        }
    }
    Ok(run)
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    /// Per seed, in configuration order.
    pub runs: Vec<std::result::Result<SeedRun, String>>,
    pub summaries: Vec<SeedSummary>,
    /// Mean per-round payoff per bucket, averaged over completed seeds.
    pub bucket_payoffs: Option<BTreeMap<Bucket, f64>>,
}

impl ExperimentResult {
    pub fn all_completed(&self) -> bool {
        self.runs.iter().all(|r| r.is_ok())
    }
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    seeds: &'a [SeedSummary],
    bucket_payoffs: &'a Option<BTreeMap<Bucket, f64>>,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json<V: Serialize + ?Sized>(path: &Path, value: &V) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_reports(path: &Path, reports: &[RoundReport<f64>]) -> Result<()> {
    let mut w = create(path)?;
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_reports(path: &Path) -> Result<Vec<RoundReport<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn read_summary(path: &Path) -> Result<Vec<SeedSummary>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn write_seed(dir: &Path, run: &SeedRun) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_reports(&dir.join("rounds.jsonl"), &run.reports)?;
    write_json(&dir.join("perturbation.json"), &run.preparation)?;
    if let Some(s) = &run.selftrain {
        write_reports(&dir.join("selftrain.jsonl"), s)?;
    }
    if let Some(loo) = &run.leave_one_out {
        let path = dir.join("loo.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["round", "contribution", "absolute"])?;
        for (t, (c, a)) in loo.contributions.iter().zip(&loo.absolute).enumerate() {
            w.write_record([(t + 1).to_string(), c.to_string(), a.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Runs every seed in parallel and, when `out` is given, writes the output
/// layout described in the module docs. A failing seed is recorded and the
/// others continue.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    config.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("config.json"), config)?;
    }
    let outcomes: Vec<(SeedSummary, std::result::Result<SeedRun, String>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let attempt = run_seed(config, seed).and_then(|run| {
                if let Some(dir) = out {
                    write_seed(&dir.join(format!("seed_{seed}")), &run)?;
                }
                let summary = summarize(
                    seed,
                    &run.reports,
                    run.selftrain.as_deref(),
                    config.buckets(),
                    run.leave_one_out.as_ref(),
                )?;
                Ok((summary, run))
            });
            match attempt {
                Ok((summary, run)) => (summary, Ok(run)),
                Err(e) => (SeedSummary::failed(seed, &e), Err(e.to_string())),
            }
        })
        .collect();
    let (summaries, runs): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();

    let bucket_payoffs = match (config.buckets(), config.mode) {
        (Some(buckets), Mode::Federated | Mode::LeaveOneOut) => {
            let streams: Vec<&[RoundReport<f64>]> = runs
                .iter()
                .filter_map(|r| r.as_ref().ok())
                .map(|r| r.reports.as_slice())
                .collect();
            if streams.is_empty() {
                None
            } else {
                Some(payoff_fairness(&streams, buckets)?)
            }
        }
        _ => None,
    };

    if let Some(dir) = out {
        let path = dir.join("summary.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for s in &summaries {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        write_json(
            &dir.join("summary.json"),
            &SummaryFile {
                seeds: &summaries,
                bucket_payoffs: &bucket_payoffs,
            },
        )?;
    }
    Ok(ExperimentResult {
        runs,
        summaries,
        bucket_payoffs,
    })
}
