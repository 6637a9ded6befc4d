mod common;

use common::federation;
use motiffed::federation::{FederationConfig, RoundReport, Simulation};
use motiffed::graph::{AgentDataset, FederationData};

fn config() -> FederationConfig<f64> {
    FederationConfig {
        d_hidden: 6,
        max_ring_len: 4,
        lr: 0.05,
        ..Default::default()
    }
}

fn stream(reports: &[RoundReport<f64>]) -> String {
    reports.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect()
}

#[test]
fn identical_runs_emit_identical_streams() {
    let data = federation(1, 3, 10, 3, 12);
    let a = Simulation::new(&data, config(), 9).unwrap().run(5).unwrap();
    let b = Simulation::new(&data, config(), 9).unwrap().run(5).unwrap();
    assert_eq!(stream(&a), stream(&b));
    let c = Simulation::new(&data, config(), 10).unwrap().run(5).unwrap();
    assert_ne!(stream(&a), stream(&c));
}

#[test]
fn resumed_run_continues_identically() {
    let data = federation(2, 3, 10, 3, 12);
    let full = Simulation::new(&data, config(), 4).unwrap().run(8).unwrap();
    let mut first = Simulation::new(&data, config(), 4).unwrap();
    first.run(3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    first.save_checkpoint(dir.path()).unwrap();
    let mut resumed = Simulation::<f64>::resume(&data, dir.path()).unwrap();
    assert_eq!(resumed.round(), 3);
    let rest = resumed.run(5).unwrap();
    assert_eq!(stream(&full[3..]), stream(&rest));
}

#[test]
fn round_laws_hold_every_round() {
    let data = federation(3, 4, 10, 3, 12);
    let cfg = config();
    let mut sim = Simulation::new(&data, cfg.clone(), 0).unwrap();
    let d = sim.shape().len();
    let reports = sim.run(30).unwrap();
    for (t, r) in reports.iter().enumerate() {
        assert_eq!(r.round, t + 1);
        let values: Vec<f64> = r.agents.iter().map(|a| a.value.unwrap()).collect();
        if !r.flags.value_reset {
            assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        if !r.flags.payoff_degenerate {
            let total: f64 = r.agents.iter().map(|a| a.payoff.unwrap()).sum();
            assert!((total - cfg.budget).abs() < 1e-9);
        }
        if t == 0 {
            assert!(r.agents.iter().all(|a| a.zeta.is_none() && a.compensation == Some(0.0)));
            continue;
        }
        let counts: Vec<usize> = r.agents.iter().map(|a| a.allocated_components.unwrap()).collect();
        let top = (0..values.len()).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
        assert_eq!(counts[top], d);
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] > 0.0 && values[j] > 0.0 && values[i] <= values[j] {
                    assert!(counts[i] <= counts[j]);
                }
            }
            if values[i] <= 0.0 {
                assert_eq!(counts[i], 0);
            }
        }
    }
}

#[test]
fn identical_agents_are_treated_identically() {
    let base = federation(4, 1, 10, 3, 12);
    let a = base.agents[0].clone();
    let data = FederationData {
        agents: vec![a.clone(), AgentDataset { agent_id: 1, ..a }],
        global_test: base.global_test,
    };
    for r in Simulation::new(&data, config(), 1).unwrap().run(6).unwrap() {
        let (x, y) = (&r.agents[0], &r.agents[1]);
        assert_eq!(x.value, y.value);
        assert_eq!(x.allocated_components, y.allocated_components);
        assert_eq!(x.payoff, y.payoff);
        assert_eq!(x.train_loss, y.train_loss);
    }
}

#[test]
fn single_agent_gets_everything() {
    let data = federation(5, 1, 10, 3, 12);
    let mut sim = Simulation::new(&data, config(), 2).unwrap();
    let d = sim.shape().len();
    for r in sim.run(5).unwrap() {
        let a = &r.agents[0];
        assert_eq!(a.value, Some(1.0));
        assert_eq!(a.payoff, Some(1.0));
        if r.round > 1 {
            assert_eq!(a.allocated_components, Some(d));
        }
    }
}

#[test]
fn f32_federation_runs() {
    let data = federation(6, 3, 10, 3, 12);
    let cfg = FederationConfig::<f32> {
        d_hidden: 6,
        max_ring_len: 4,
        lr: 0.05,
        ..Default::default()
    };
    let reports = Simulation::new(&data, cfg, 0).unwrap().run(5).unwrap();
    let last = reports.last().unwrap();
    let total: f32 = last.agents.iter().map(|a| a.value.unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-5);
}
