mod common;

use common::{random_graph, relabel_nodes, rng};
use motiffed::graph::Graph;
use motiffed::model::{
    embed, hidden_preactivations, local_prototypes, local_train, loss_and_grad, FeatureEncoder, LocalObjective,
    ModelShape, ParamVector, PrototypeMap,
};
use motiffed::motif::build_vocabulary_from_shards;
use proptest::prelude::*;
use rand::Rng;

/// Forward pass written directly from the definition, reading the flat
/// layout: omega row-major (d_hidden x d_in), then phi, then bias.
fn oracle_embedding(params: &[f64], shape: ModelShape, g: &Graph) -> Vec<f64> {
    let (d_in, d_h) = (shape.d_in, shape.d_hidden);
    let n = g.node_count();
    let onehot = |v: usize| {
        let mut x = vec![0.0; d_in];
        x[(g.node_labels()[v] as usize).min(d_in - 1)] = 1.0;
        x
    };
    let mut out = vec![0.0; d_h];
    for v in 0..n {
        let mut a = onehot(v);
        for u in 0..n {
            if g.has_edge(u, v) {
                for (ai, xi) in a.iter_mut().zip(onehot(u)) {
                    *ai += xi;
                }
            }
        }
        for h in 0..d_h {
            let z: f64 = (0..d_in).map(|j| params[h * d_in + j] * a[j]).sum();
            out[h] += z.max(0.0) / n as f64;
        }
    }
    out
}

fn random_params(shape: ModelShape, r: &mut impl Rng) -> ParamVector<f64> {
    ParamVector::unflatten(shape, (0..shape.len()).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn embedding_matches_direct_forward_pass() {
    let mut r = rng(11);
    for _ in 0..20 {
        let shape = ModelShape::new(3, 5, 2).unwrap();
        let params = random_params(shape, &mut r);
        let g = random_graph(&mut r, 3, 1, 3, 0);
        let got = embed(&params, &g).unwrap();
        let want = oracle_embedding(params.as_slice(), shape, &g);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut r = rng(2);
    let mut checked = 0;
    while checked < 20 {
        let graphs: Vec<Graph> = (0..3)
            .map(|i| {
                let n = r.gen_range(3..6);
                random_graph(&mut r, n, 1, 3, i % 2)
            })
            .collect();
        let vocab = build_vocabulary_from_shards(&[&graphs], 4, 1.0).unwrap();
        let shape = ModelShape::new(3, 4, 2).unwrap();
        let params = random_params(shape, &mut r);
        let encoded = FeatureEncoder::new(3).encode_all::<f64>(&graphs).unwrap();
        // skip draws with a ReLU input near its kink
        let near_kink = encoded
            .iter()
            .any(|g| hidden_preactivations(&params, g).iter().any(|z| z.abs() < 1e-3));
        if near_kink {
            continue;
        }
        let mut protos = PrototypeMap::new();
        for k in 0..vocab.len() {
            protos.insert(k, (0..4).map(|_| r.gen_range(-1.0..1.0)).collect());
        }
        let (_, grad) = loss_and_grad(&params, &graphs, &protos, &vocab, 0, 0.1).unwrap();
        let f = |p: &ParamVector<f64>| loss_and_grad(p, &graphs, &protos, &vocab, 0, 0.1).unwrap().0;
        let h = 1e-5;
        for j in 0..shape.len() {
            let mut plus = params.clone();
            plus.as_mut_slice()[j] += h;
            let mut minus = params.clone();
            minus.as_mut_slice()[j] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let g = grad.as_slice()[j];
            if g.abs() > 1e-6 {
                assert!((g - fd).abs() / g.abs() <= 1e-4, "component {j}: analytic {g} fd {fd}");
            } else {
                assert!(fd.abs() < 1e-6, "component {j}: analytic {g} fd {fd}");
            }
        }
        checked += 1;
    }
}

#[test]
fn prototype_is_mean_over_member_graphs_only() {
    let mut r = rng(5);
    let shape = ModelShape::new(2, 3, 2).unwrap();
    let params = random_params(shape, &mut r);
    let graphs: Vec<Graph> = (0..5).map(|_| random_graph(&mut r, 5, 1, 2, 0)).collect();
    let encoded = FeatureEncoder::new(2).encode_all::<f64>(&graphs).unwrap();
    let members = vec![1, 2, 4];
    let protos = local_prototypes(&params, &encoded, &[vec![], members.clone()]);
    assert!(!protos.contains(0));
    let mut want = vec![0.0; 3];
    for &m in &members {
        for (w, e) in want.iter_mut().zip(embed(&params, &graphs[m]).unwrap()) {
            *w += e / 3.0;
        }
    }
    for (a, b) in protos.get(1).unwrap().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn small_step_descends_on_fixture() {
    let mut r = rng(8);
    let graphs: Vec<Graph> = (0..6).map(|i| random_graph(&mut r, 6, 2, 2, i % 2)).collect();
    let encoded = FeatureEncoder::new(2).encode_all::<f64>(&graphs).unwrap();
    let shape = ModelShape::new(2, 4, 2).unwrap();
    let params = ParamVector::init(shape, 3);
    let empty = PrototypeMap::new();
    let objective = LocalObjective::supervised(&encoded, &empty);
    let out = local_train(&params, &objective, 5, 1e-3).unwrap();
    assert!(objective.loss(&out.params).unwrap() <= out.initial_loss);
    // the upload is the accumulated descent direction
    for ((b, a), u) in params.as_slice().iter().zip(out.params.as_slice()).zip(out.upload.as_slice()) {
        assert!(((b - a) / 1e-3 - u).abs() < 1e-6);
    }
    assert_eq!(out, local_train(&params, &objective, 5, 1e-3).unwrap());
    assert!(local_train(&params, &objective, 1, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embedding_ignores_node_order(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let shape = ModelShape::new(3, 4, 2).unwrap();
        let params = random_params(shape, &mut r);
        let g = random_graph(&mut r, 7, 3, 3, 0);
        let h = relabel_nodes(&g, &mut r);
        let (a, b) = (embed(&params, &g).unwrap(), embed(&params, &h).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn flatten_unflatten_round_trips(data in prop::collection::vec(-1e3f64..1e3, 2 * 3 + 2 * 2 + 2)) {
        let shape = ModelShape::new(3, 2, 2).unwrap();
        let p = ParamVector::unflatten(shape, data.clone()).unwrap();
        prop_assert_eq!(p.flatten(), data.clone());
        prop_assert_eq!(ParamVector::unflatten(shape, p.flatten()).unwrap(), p);
    }

    #[test]
    fn zero_lambda_is_supervised_loss(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let graphs: Vec<Graph> = (0..3).map(|i| random_graph(&mut r, 5, 2, 2, i % 2)).collect();
        let vocab = build_vocabulary_from_shards(&[&graphs], 4, 1.0).unwrap();
        let shape = ModelShape::new(2, 3, 2).unwrap();
        let params = random_params(shape, &mut r);
        let mut protos = PrototypeMap::new();
        for k in 0..vocab.len() {
            protos.insert(k, vec![5.0; 3]);
        }
        let encoded = FeatureEncoder::new(2).encode_all::<f64>(&graphs).unwrap();
        let empty = PrototypeMap::new();
        let plain = LocalObjective::supervised(&encoded, &empty).loss_and_grad(&params).unwrap();
        let full = loss_and_grad(&params, &graphs, &protos, &vocab, 0, 0.0).unwrap();
        prop_assert_eq!(plain, full);
    }
}
