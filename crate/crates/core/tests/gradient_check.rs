mod common;

use common::{max_gradient_error, random_case};
use ndarray::Array2;
use pbvgan::neural::{
    loss_value_and_grad, softmax_cross_entropy_fused_grad, Activation, LayerSpec, LossKind, Network, OutputGrad,
};
use pbvgan::rng::{seeded, standard_normal};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backprop_matches_central_differences(seed in any::<u64>(), index in 0usize..60) {
        let case = random_case(index, &mut seeded(seed, 0));
        let err = max_gradient_error(&case);
        prop_assert!(err < 1e-4, "{}: max relative error {err:e}", case.describe());
    }
}

#[test]
fn two_layer_net_on_three_batches() {
    let mut rng = seeded(21, 0);
    let specs = [
        LayerSpec::new(5, 7, Activation::Sigmoid),
        LayerSpec::new(7, 3, Activation::Softmax),
    ];
    let net = Network::new(&specs, 0.1, &mut rng).unwrap();
    for b in 0..3 {
        let x = standard_normal(4, 5, &mut rng);
        let mut t = Array2::zeros((4, 3));
        for i in 0..4 {
            t[[i, (i + b) % 3]] = 1.0;
        }
        let case = common::GradCase {
            net: net.clone(),
            x,
            targets: t,
            loss: LossKind::CategoricalCrossEntropy,
            fused: false,
        };
        assert!(max_gradient_error(&case) < 1e-4);
    }
}

#[test]
fn fused_softmax_gradient_equals_unfused() {
    let mut rng = seeded(4, 0);
    let specs = [
        LayerSpec::new(6, 8, Activation::LeakyRelu(0.2)),
        LayerSpec::new(8, 4, Activation::Softmax),
    ];
    let net = Network::new(&specs, 0.3, &mut rng).unwrap();
    let x = standard_normal(5, 6, &mut rng);
    let mut t = Array2::zeros((5, 4));
    for i in 0..5 {
        t[[i, i % 4]] = 1.0;
    }
    let (p, cache) = net.forward_train(x.view(), &mut rng).unwrap();
    let fused = softmax_cross_entropy_fused_grad(p.view(), t.view()).unwrap();
    let (_, g) = loss_value_and_grad(LossKind::CategoricalCrossEntropy, p.view(), t.view()).unwrap();
    let a = net.backward(Some(&cache), OutputGrad::PreActivation(fused.view())).unwrap();
    let b = net.backward(Some(&cache), OutputGrad::Activation(g.view())).unwrap();
    for (la, lb) in a.layers.iter().zip(&b.layers) {
        for (u, v) in la.weights.iter().zip(lb.weights.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
    assert_eq!(fused, (&p - &t) / 5.0);
}
