#![allow(dead_code)]

use ndarray::Array2;
use pbvgan::neural::{
    loss_value_and_grad, softmax_cross_entropy_fused_grad, Activation, LayerSpec, LossKind, Network, OutputGrad,
};
use pbvgan::rng::{seeded, standard_normal, Rng};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors, so entries that are zero up to
/// round-off compare on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;
/// Pre-activations closer than this to a ReLU kink trigger a resample.
pub const KINK_MARGIN: f64 = 1e-4;

const ALL: [Activation; 5] = [
    Activation::Relu,
    Activation::LeakyRelu(0.2),
    Activation::Sigmoid,
    Activation::Softmax,
    Activation::Linear,
];

#[derive(Debug, Clone)]
pub struct GradCase {
    pub net: Network,
    pub x: Array2<f64>,
    pub targets: Array2<f64>,
    pub loss: LossKind,
    /// Feed the fused softmax/cross-entropy gradient at the pre-activation.
    pub fused: bool,
}

impl GradCase {
    pub fn describe(&self) -> String {
        let layers: Vec<String> = self
            .net
            .layers
            .iter()
            .map(|l| format!("{}->{} {:?}", l.inputs(), l.outputs(), l.activation))
            .collect();
        format!("{:?}{} [{}]", self.loss, if self.fused { " fused" } else { "" }, layers.join(", "))
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

fn near_kink(net: &Network, x: &Array2<f64>) -> bool {
    let mut current = x.clone();
    for layer in &net.layers {
        let z = current.dot(&layer.weights.t()) + &layer.bias;
        if matches!(layer.activation, Activation::Relu | Activation::LeakyRelu(_)) && z.iter().any(|v| v.abs() < KINK_MARGIN) {
            return true;
        }
        current = layer.activation.apply(&z);
    }
    false
}

/// Random architecture of 1 to 3 dense layers of at most 16 units, weights
/// and biases drawn from a normal with variance 0.01. `index` rotates the
/// activation and loss choices so a run of cases covers all of them.
pub fn random_case(index: usize, rng: &mut Rng) -> GradCase {
    let normal = Normal::new(0.0, 0.1).unwrap();
    let depth = 1 + index % 3;
    let loss = if index % 2 == 0 {
        LossKind::SigmoidCrossEntropyWithLogits
    } else {
        LossKind::CategoricalCrossEntropy
    };
    let fused = index % 4 == 3;
    let inputs = rng.random_range(1..=8);
    let mut width = inputs;
    let mut specs = Vec::new();
    for layer in 0..depth {
        let last = layer + 1 == depth;
        let outputs = if last && loss == LossKind::CategoricalCrossEntropy {
            rng.random_range(2..=6)
        } else {
            rng.random_range(1..=16)
        };
        let activation = match (last, loss) {
            (true, LossKind::CategoricalCrossEntropy) => Activation::Softmax,
            (true, _) => ALL[(index / 2) % ALL.len()],
            (false, _) => ALL[(index + layer) % ALL.len()],
        };
        specs.push(LayerSpec::new(width, outputs, activation));
        width = outputs;
    }
    let batch = 3 + index % 3;
    loop {
        let mut net = Network::new(&specs, 0.1, rng).unwrap();
        for layer in &mut net.layers {
            layer.bias.mapv_inplace(|_| normal.sample(rng));
        }
        let x = standard_normal(batch, inputs, rng);
        if near_kink(&net, &x) {
            continue;
        }
        let targets = match loss {
            LossKind::SigmoidCrossEntropyWithLogits => {
                Array2::from_shape_simple_fn((batch, width), || if rng.random::<bool>() { 1.0 } else { 0.0 })
            }
            LossKind::CategoricalCrossEntropy => {
                let mut t = Array2::zeros((batch, width));
                for mut row in t.rows_mut() {
                    row[rng.random_range(0..width)] = 1.0;
                }
                t
            }
        };
        return GradCase {
            net,
            x,
            targets,
            loss,
            fused,
        };
    }
}

fn loss_at(net: &Network, x: &Array2<f64>, targets: &Array2<f64>, kind: LossKind) -> f64 {
    let out = net.predict(x.view()).unwrap();
    loss_value_and_grad(kind, out.view(), targets.view()).unwrap().0
}

/// Largest relative error between backprop and central differences over
/// every weight, bias and input entry.
pub fn max_gradient_error(case: &GradCase) -> f64 {
    let mut rng = seeded(0, 0);
    let (out, cache) = case.net.forward_train(case.x.view(), &mut rng).unwrap();
    let analytic = if case.fused {
        let g = softmax_cross_entropy_fused_grad(out.view(), case.targets.view()).unwrap();
        case.net.backward(Some(&cache), OutputGrad::PreActivation(g.view())).unwrap()
    } else {
        let (_, g) = loss_value_and_grad(case.loss, out.view(), case.targets.view()).unwrap();
        case.net.backward(Some(&cache), OutputGrad::Activation(g.view())).unwrap()
    };

    let mut worst: f64 = 0.0;
    let mut net = case.net.clone();
    for l in 0..net.layers.len() {
        for idx in 0..net.layers[l].weights.len() {
            let (r, c) = (idx / net.layers[l].inputs(), idx % net.layers[l].inputs());
            let orig = net.layers[l].weights[[r, c]];
            net.layers[l].weights[[r, c]] = orig + FD_STEP;
            let plus = loss_at(&net, &case.x, &case.targets, case.loss);
            net.layers[l].weights[[r, c]] = orig - FD_STEP;
            let minus = loss_at(&net, &case.x, &case.targets, case.loss);
            net.layers[l].weights[[r, c]] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic.layers[l].weights[[r, c]], numeric));
        }
        for i in 0..net.layers[l].bias.len() {
            let orig = net.layers[l].bias[i];
            net.layers[l].bias[i] = orig + FD_STEP;
            let plus = loss_at(&net, &case.x, &case.targets, case.loss);
            net.layers[l].bias[i] = orig - FD_STEP;
            let minus = loss_at(&net, &case.x, &case.targets, case.loss);
            net.layers[l].bias[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic.layers[l].bias[i], numeric));
        }
    }
    let mut x = case.x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = x[[r, c]];
        x[[r, c]] = orig + FD_STEP;
        let plus = loss_at(&net, &x, &case.targets, case.loss);
        x[[r, c]] = orig - FD_STEP;
        let minus = loss_at(&net, &x, &case.targets, case.loss);
        x[[r, c]] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic.input[[r, c]], numeric));
    }
    worst
}

/// Report line printed straight to stdout so it shows up even when the test
/// harness captures output.
pub fn report(criterion: u32, title: &str, passed: bool, detail: &str) {
    use std::io::Write;
    let status = if passed { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {criterion:>2} [{status}] {title}: {detail}");
    let _ = out.flush();
}
