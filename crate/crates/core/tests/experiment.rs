use std::fs;
use std::path::Path;

use motiffed::experiment::{
    read_reports, read_summary, run_experiment, summarize, AgentPreparation, DatasetSource, ExperimentConfig, Mode,
    PerturbationPlan,
};
use motiffed::federation::FederationConfig;
use motiffed::graph::synthetic::SyntheticSpec;
use motiffed::metrics::Bucket;

fn small(seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSource::Synthetic(SyntheticSpec {
            n_graphs: 200,
            min_nodes: 6,
            max_nodes: 10,
            ..Default::default()
        }),
        seeds,
        rounds: 6,
        federation: FederationConfig {
            d_hidden: 8,
            max_ring_len: 3,
            ..Default::default()
        },
        perturbation: Some(PerturbationPlan::standard()),
        gradient_fairness: true,
        ..Default::default()
    }
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap()
}

#[test]
fn two_seeds_give_two_streams_and_one_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(vec![3, 8]);
    let result = run_experiment(&config, Some(dir.path())).unwrap();
    assert!(result.all_completed());
    for seed in [3, 8] {
        let s = dir.path().join(format!("seed_{seed}"));
        assert_eq!(read_reports(&s.join("rounds.jsonl")).unwrap().len(), 6);
        assert!(s.join("selftrain.jsonl").exists());
    }
    let echoed: ExperimentConfig = serde_json::from_slice(&read(&dir.path().join("config.json"))).unwrap();
    assert_eq!(echoed, config);
    let rows = read_summary(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows, result.summaries);
}

#[test]
fn summary_is_recomputable_from_streams() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(vec![1, 2]);
    run_experiment(&config, Some(dir.path())).unwrap();
    for row in read_summary(&dir.path().join("summary.csv")).unwrap() {
        let s = dir.path().join(format!("seed_{}", row.seed));
        let reports = read_reports(&s.join("rounds.jsonl")).unwrap();
        let alone = read_reports(&s.join("selftrain.jsonl")).unwrap();
        let again = summarize(row.seed, &reports, Some(&alone), config.buckets(), None).unwrap();
        assert_eq!(again, row);
        assert!(row.payoff_low.is_some() && row.payoff_high.is_some());
    }
}

#[test]
fn same_seed_gives_byte_identical_rounds() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = small(vec![5]);
    run_experiment(&config, Some(a.path())).unwrap();
    run_experiment(&config, Some(b.path())).unwrap();
    for file in ["rounds.jsonl", "selftrain.jsonl", "perturbation.json"] {
        assert_eq!(read(&a.path().join("seed_5").join(file)), read(&b.path().join("seed_5").join(file)));
    }
    assert_eq!(read(&a.path().join("summary.csv")), read(&b.path().join("summary.csv")));
}

#[test]
fn bucket_assignment_matches_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(vec![0]);
    run_experiment(&config, Some(dir.path())).unwrap();
    let prep: Vec<AgentPreparation> =
        serde_json::from_slice(&read(&dir.path().join("seed_0/perturbation.json"))).unwrap();
    let buckets: Vec<Bucket> = prep.iter().map(|p| p.bucket.unwrap()).collect();
    assert_eq!(buckets, PerturbationPlan::standard().buckets);
    for p in &prep {
        let [lo, hi] = PerturbationPlan::standard().intervals[&p.bucket.unwrap()];
        assert!(lo <= p.flip_ratio && p.flip_ratio < hi);
    }
}

#[test]
fn self_train_mode_omits_mechanism_fields() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small(vec![0]);
    config.mode = Mode::SelfTrain;
    let result = run_experiment(&config, Some(dir.path())).unwrap();
    let reports = read_reports(&dir.path().join("seed_0/rounds.jsonl")).unwrap();
    for a in reports.iter().flat_map(|r| &r.agents) {
        assert!(a.value.is_none() && a.zeta.is_none() && a.payoff.is_none() && a.allocated_components.is_none());
    }
    assert!(result.bucket_payoffs.is_none());
    assert!(result.summaries[0].payoff_low.is_none());
}

#[test]
fn loo_mode_writes_contributions() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small(vec![0]);
    config.mode = Mode::LeaveOneOut;
    config.exclude = Some(2);
    config.gradient_fairness = false;
    let result = run_experiment(&config, Some(dir.path())).unwrap();
    let text = fs::read_to_string(dir.path().join("seed_0/loo.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 6);
    let loo = result.runs[0].as_ref().unwrap().leave_one_out.as_ref().unwrap();
    assert_eq!(loo.contributions.len(), 6);
    assert!(result.summaries[0].mean_loo_contribution.is_some());
}
