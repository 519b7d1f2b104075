mod common;

use common::{analytic_gradient, random_inputs};
use operon_core::model::{match_parameter_counts, ModelKind, ModelSpec, OperatorModel};
use operon_core::rng;
use operon_core::tensor::Tensor2;
use proptest::prelude::*;
use rand::Rng;

fn net_len(shapes: &[(usize, usize)]) -> usize {
    shapes.iter().map(|&(i, o)| i * o + o).sum()
}

/// Enhanced model with its second branch pinned to ones, and the
/// single-input DeepONet holding the first branch, trunk and bias.
fn reduction_pair(seed: u64) -> (OperatorModel, OperatorModel) {
    let m = 6;
    let mut enhanced = OperatorModel::build(ModelSpec::edeeponet(vec![m, m], vec![7, 5], vec![6], 4, seed)).unwrap();
    enhanced.set_output_bias(0.3);
    enhanced.branch_nets_mut()[1].pin_output(&[1.0; 4]).unwrap();
    let shapes = enhanced.spec().layer_shapes();
    let (b1, b2) = (net_len(&shapes[0]), net_len(&shapes[1]));
    let params = enhanced.parameters();
    let reduced_params: Vec<f64> = params[..b1].iter().chain(&params[b1 + b2..]).copied().collect();
    let mut reduced = OperatorModel::build(ModelSpec::deeponet_concat(vec![m], vec![7, 5], vec![6], 4, 0)).unwrap();
    reduced.set_parameters(&reduced_params).unwrap();
    (enhanced, reduced)
}

#[test]
fn reduction_identity_forward_and_gradient() {
    let mut rng = rng::stream(21, &[]);
    let (mut enhanced, mut reduced) = reduction_pair(4);
    let shapes = enhanced.spec().layer_shapes();
    let (b1, b2) = (net_len(&shapes[0]), net_len(&shapes[1]));
    for _ in 0..20 {
        let (inputs, y) = random_inputs(&mut rng, &enhanced, 5);
        let refs: Vec<&Tensor2> = inputs.iter().collect();
        let full = enhanced.predict(&refs, &y).unwrap();
        let single = reduced.predict(&refs[..1], &y).unwrap();
        assert_eq!(full, single);

        let targets: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g_full = analytic_gradient(&mut enhanced, &inputs, &y, &targets);
        let g_single = analytic_gradient(&mut reduced, &inputs[..1], &y, &targets);
        let g_full_reduced: Vec<f64> = g_full[..b1].iter().chain(&g_full[b1 + b2..]).copied().collect();
        for (a, b) in g_full_reduced.iter().zip(&g_single) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}

#[test]
fn flat_and_hierarchical_fusion_agree() {
    let mut rng = rng::stream(8, &[]);
    for trial in 0..100 {
        let n = 2 + trial % 2;
        let mut model = OperatorModel::build(ModelSpec::edeeponet(vec![5; n], vec![6], vec![6], 4, trial as u64)).unwrap();
        model.set_output_bias(rng.random_range(-0.5..0.5));
        let (inputs, y) = random_inputs(&mut rng, &model, 3);
        let refs: Vec<&Tensor2> = inputs.iter().collect();
        let fused = model.predict(&refs, &y).unwrap();
        let (branches, trunk) = model.latents(&refs, &y).unwrap();
        for (r, &out) in fused.iter().enumerate() {
            let mut flat = model.output_bias();
            for k in 0..trunk.cols() {
                let mut term = trunk.get(r, k);
                for g in &branches {
                    term *= g.get(r, k);
                }
                flat += term;
            }
            assert!((out - flat).abs() <= 1e-12 * flat.abs().max(1.0));
        }
    }
}

#[test]
fn swapping_branches_with_inputs_is_invariant() {
    let mut rng = rng::stream(77, &[]);
    let model = OperatorModel::build(ModelSpec::edeeponet(vec![5, 5], vec![8], vec![8], 6, 3)).unwrap();
    let mut swapped = model.clone();
    swapped.branch_nets_mut().swap(0, 1);
    for _ in 0..20 {
        let (inputs, y) = random_inputs(&mut rng, &model, 4);
        let a = model.predict(&[&inputs[0], &inputs[1]], &y).unwrap();
        let b = swapped.predict(&[&inputs[1], &inputs[0]], &y).unwrap();
        for (x, z) in a.iter().zip(&b) {
            assert!((x - z).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn batched_forward_matches_per_record_calls() {
    let mut rng = rng::stream(12, &[]);
    for spec in [
        ModelSpec::fnn(vec![4, 4], vec![6, 6], 1),
        ModelSpec::deeponet_concat(vec![4, 4], vec![6], vec![6], 3, 2),
        ModelSpec::edeeponet(vec![4, 4], vec![6], vec![6], 3, 3),
    ] {
        let mut model = OperatorModel::build(spec).unwrap();
        let (inputs, y) = random_inputs(&mut rng, &model, 6);
        let batched = model.forward(&[&inputs[0], &inputs[1]], &y).unwrap();
        for r in 0..6 {
            let (u, v, q) = (inputs[0].row(r), inputs[1].row(r), y.row(r));
            let single = match model.kind() {
                ModelKind::Fnn => model.forward_fnn(u, v, q),
                ModelKind::DeepOnetConcat => model.forward_deeponet_concat(u, v, q),
                ModelKind::EDeepOnet => model.forward_edeeponet(&[u, v], q),
            }
            .unwrap();
            assert!((single - batched[r]).abs() < 1e-12);
        }
    }
}

#[test]
fn predict_does_not_disturb_training_state() {
    let mut rng = rng::stream(2, &[]);
    let mut model = OperatorModel::build(ModelSpec::edeeponet(vec![4, 4], vec![6], vec![6], 3, 3)).unwrap();
    let (inputs, y) = random_inputs(&mut rng, &model, 4);
    let (other, y2) = random_inputs(&mut rng, &model, 2);
    let refs: Vec<&Tensor2> = inputs.iter().collect();
    let pred = model.forward(&refs, &y).unwrap();
    model.predict(&[&other[0], &other[1]], &y2).unwrap();
    model.backward(&[1.0; 4]).unwrap();
    let after = model.gradients();
    let mut fresh = model.clone();
    operon_core::optim::Parameters::zero_grad(&mut fresh);
    fresh.forward(&refs, &y).unwrap();
    fresh.backward(&[1.0; 4]).unwrap();
    assert_eq!(after, fresh.gradients());
    assert_eq!(pred, model.predict(&refs, &y).unwrap());
}

fn arb_spec() -> impl Strategy<Value = ModelSpec> {
    (
        0usize..3,
        prop::collection::vec(1usize..6, 2..4),
        prop::collection::vec(1usize..9, 0..3),
        prop::collection::vec(1usize..9, 0..3),
        1usize..6,
        any::<u64>(),
        any::<bool>(),
    )
        .prop_map(|(kind, sensors, hidden_a, hidden_b, p, seed, bias)| {
            let mut spec = match kind {
                0 => ModelSpec::fnn(sensors, hidden_a, seed),
                1 => ModelSpec::deeponet_concat(sensors, hidden_a, hidden_b, p, seed),
                _ => ModelSpec::edeeponet(sensors, hidden_a, hidden_b, p, seed),
            };
            spec.output_bias = bias;
            spec
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoint_round_trip_is_bit_exact(spec in arb_spec()) {
        let model = OperatorModel::build(spec).unwrap();
        let bytes = model.to_checkpoint_bytes();
        let back = OperatorModel::from_checkpoint_bytes(&bytes).unwrap();
        prop_assert_eq!(back.spec(), model.spec());
        let bits = |m: &OperatorModel| m.parameters().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&model));
        prop_assert_eq!(back.to_checkpoint_bytes(), bytes);
    }

    #[test]
    fn counted_parameters_match_formula(spec in arb_spec()) {
        let model = OperatorModel::build(spec.clone()).unwrap();
        prop_assert_eq!(model.parameter_count(), spec.parameter_count());
        prop_assert_eq!(model.parameters().len(), spec.parameter_count());
        prop_assert_eq!(model.gradients().len(), spec.parameter_count());
    }

    #[test]
    fn matched_counts_within_tolerance(m in 5usize..120, n in 2usize..4, width in 8usize..80) {
        let reference = ModelSpec::edeeponet(vec![m; n], vec![width, width], vec![width, width], width, 0);
        for kind in ModelKind::ALL {
            let matched = match_parameter_counts(&reference, kind).unwrap();
            prop_assert_eq!(matched.kind, kind);
            let ratio = matched.parameter_count() as f64 / reference.parameter_count() as f64;
            prop_assert!((0.95..=1.05).contains(&ratio), "{:?}: {}", kind, ratio);
        }
    }
}
