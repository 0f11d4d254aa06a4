use minibatch_sfl::algorithms::{gamma, lr_at};
use minibatch_sfl::data::{gen_synthetic_classification, partition_noniid, WeightsMode};
use minibatch_sfl::nn::{
    aggregate, backward_client, backward_server, finite_diff_grad, forward_client, forward_server,
    full_gradient, init_model, loss, split_model, weighted_average, Activation, LayerSpec,
    ModelParams, SplitSpec,
};
use minibatch_sfl::seed::derive;
use proptest::prelude::*;

fn specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::dense(4, 5, Activation::Tanh),
        LayerSpec::dense(5, 4, Activation::Tanh),
        LayerSpec::dense(4, 3, Activation::SoftmaxXentHead),
    ]
}

fn normalized(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

fn models(count: usize, seed: u64) -> Vec<ModelParams> {
    (0..count)
        .map(|k| init_model(&specs(), derive(seed, &[k as u64])).unwrap())
        .collect()
}

fn close(a: &ModelParams, b: &ModelParams, tol: f64) -> bool {
    a.values()
        .zip(b.values())
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn consensus_is_a_fixed_point(raw in prop::collection::vec(0.01f64..5.0, 1..8), seed in any::<u64>()) {
        let w = normalized(&raw);
        let m = init_model(&specs(), seed).unwrap();
        let copies = vec![m.clone(); w.len()];
        prop_assert_eq!(aggregate(&copies, &w).unwrap(), m);
    }

    #[test]
    fn aggregation_is_affine(raw in prop::collection::vec(0.01f64..5.0, 2..6), a in -3.0f64..3.0, seed in any::<u64>()) {
        let w = normalized(&raw);
        let ms = models(w.len(), seed);
        let shifted: Vec<ModelParams> = ms.iter().map(|m| m.scaled(a)).collect();
        let lhs = aggregate(&shifted, &w).unwrap();
        let rhs = aggregate(&ms, &w).unwrap().scaled(a);
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn averaging_matches_aggregation_for_normalized_weights(raw in prop::collection::vec(0.01f64..5.0, 1..6), seed in any::<u64>()) {
        let w = normalized(&raw);
        let ms = models(w.len(), seed);
        let avg = weighted_average(&ms, &w).unwrap();
        prop_assert!(close(&avg, &aggregate(&ms, &w).unwrap(), 1e-13));
    }

    #[test]
    fn average_lies_within_coordinate_range(raw in prop::collection::vec(0.01f64..5.0, 1..6), seed in any::<u64>()) {
        let w = normalized(&raw);
        let ms = models(w.len(), seed);
        let avg = aggregate(&ms, &w).unwrap();
        for (k, v) in avg.values().enumerate() {
            let col: Vec<f64> = ms.iter().map(|m| *m.values().nth(k).unwrap()).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    #[test]
    fn split_gradient_equals_full_gradient(cut in 0usize..=3, seed in any::<u64>()) {
        let data = gen_synthetic_classification(4, 3, 4, 0.5, seed).unwrap();
        let batch = data.all();
        let model = init_model(&specs(), seed ^ 1).unwrap();
        let (full_loss, full) = full_gradient(&model, &batch).unwrap();

        let (client, server) = split_model(&model, SplitSpec::new(cut, 3).unwrap()).unwrap();
        let (smashed, ccache) = forward_client(&client, &batch, 0).unwrap();
        let (split_loss, scache) = forward_server(&server, &smashed).unwrap();
        let (gs, gz) = backward_server(&server, &scache).unwrap();
        let gc = backward_client(&client, &ccache, &gz).unwrap();
        let joined = gc.concat(&gs).unwrap();

        prop_assert!((split_loss - full_loss).abs() <= 1e-12);
        prop_assert!(close(&joined, &full, 1e-10));
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>()) {
        let data = gen_synthetic_classification(4, 3, 3, 0.5, seed).unwrap();
        let batch = data.all();
        let model = init_model(&specs(), seed).unwrap();
        let (_, g) = full_gradient(&model, &batch).unwrap();
        let fd = finite_diff_grad(|m| loss(m, &batch), &model, 1e-5).unwrap();
        let err = g.dist_sq(&fd).unwrap().sqrt();
        prop_assert!(err <= 1e-6, "gradient error {err}");
    }

    #[test]
    fn partition_is_a_disjoint_cover(
        n in 1usize..12,
        per_class in 1usize..30,
        r in 0.0f64..=1.0,
        by_size in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let data = gen_synthetic_classification(2, 4, per_class, 1.0, seed).unwrap();
        prop_assume!(data.len() >= n);
        let mode = if by_size { WeightsMode::BySize } else { WeightsMode::Uniform };
        let shards = partition_noniid(&data, n, r, mode, seed).unwrap();
        prop_assert_eq!(shards.len(), n);
        let mut seen: Vec<usize> = shards.iter().flat_map(|s| s.indices.iter().copied()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..data.len()).collect::<Vec<_>>());
        let total: f64 = shards.iter().map(|s| s.weight).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(shards.iter().all(|s| s.weight >= 0.0));
    }

    #[test]
    fn partition_is_deterministic(r in 0.0f64..=1.0, seed in any::<u64>()) {
        let data = gen_synthetic_classification(2, 3, 10, 1.0, 7).unwrap();
        let a = partition_noniid(&data, 4, r, WeightsMode::BySize, seed).unwrap();
        let b = partition_noniid(&data, 4, r, WeightsMode::BySize, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn schedule_is_decreasing_and_bounded(
        s in 0.1f64..50.0,
        mu in 0.1f64..5.0,
        e in 1usize..8,
        m in 1usize..8,
        i in 0usize..10_000,
        edge in any::<bool>(),
    ) {
        let g = gamma(s, mu, e, m);
        prop_assert!(g >= (e * m) as f64);
        // Step 0 may exceed the cap; every later step is within it.
        let i = if edge { 1 } else { i.max(1) };
        let now = lr_at(i, mu, g);
        prop_assert!(now > 0.0 && lr_at(i + 1, mu, g) < now);
        // η_i ≤ 1/(4S) and η_i ≤ 2η_{i+EM}
        prop_assert!(now * 4.0 * s <= 1.0 + 1e-12);
        prop_assert!(now <= 2.0 * lr_at(i + e * m, mu, g) + 1e-15);
    }
}
