use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NeuralError;

/// Element-wise (or row-wise, for softmax) nonlinearity applied after the
/// affine transform of a [`DenseLayer`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Softmax,
    Linear,
}

impl Activation {
    pub fn apply(&self, z: &Array2<f64>) -> Array2<f64> {
        match *self {
            Activation::Relu => z.mapv(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::LeakyRelu(alpha) => z.mapv(|v| if v > 0.0 { v } else { alpha * v }),
            Activation::Sigmoid => z.mapv(sigmoid),
            Activation::Linear => z.clone(),
            Activation::Softmax => {
                let mut out = z.clone();
                for mut row in out.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
                out
            }
        }
    }

    /// Pull `grad` (w.r.t. the activation output) back through the
    /// activation. `z` is the pre-activation and `a` the activation output.
    fn backprop(&self, z: &Array2<f64>, a: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
        match *self {
            Activation::Relu => {
                let mut out = grad.clone();
                Zip::from(&mut out).and(z).for_each(|g, &v| {
                    if v <= 0.0 {
                        *g = 0.0
                    }
                });
                out
            }
            Activation::LeakyRelu(alpha) => {
                let mut out = grad.clone();
                Zip::from(&mut out).and(z).for_each(|g, &v| {
                    if v <= 0.0 {
                        *g *= alpha
                    }
                });
                out
            }
            Activation::Sigmoid => {
                let mut out = grad.clone();
                Zip::from(&mut out).and(a).for_each(|g, &s| *g *= s * (1.0 - s));
                out
            }
            Activation::Linear => grad.clone(),
            Activation::Softmax => {
                // dz = p * (g - <g, p>) row by row
                let dots = (grad * a).sum_axis(Axis(1));
                let mut out = grad.clone();
                for (mut row, dot) in out.rows_mut().into_iter().zip(dots.iter()) {
                    row.mapv_inplace(|g| g - dot);
                }
                out * a
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Shape and behaviour of one layer, used to build a [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub dropout: f64,
}

impl LayerSpec {
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            activation,
            dropout: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }
}

/// Fully connected layer `a = act(x · Wᵀ + b)`, weights stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub dropout: f64,
}

impl DenseLayer {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            inputs: self.inputs(),
            outputs: self.outputs(),
            activation: self.activation,
            dropout: self.dropout,
        }
    }

    fn affine(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

/// Intermediates kept by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    pre_activation: Array2<f64>,
    activation: Array2<f64>,
    mask: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub output: Array2<f64>,
    pub cache: Option<ForwardCache>,
}

/// Where the upstream gradient handed to [`Network::backward`] attaches.
#[derive(Debug, Clone, Copy)]
pub enum OutputGrad<'a> {
    /// Gradient w.r.t. the network output (after the final activation).
    Activation(ArrayView2<'a, f64>),
    /// Gradient w.r.t. the final layer's pre-activation, e.g. the fused
    /// softmax + cross-entropy gradient `(p - t) / B`.
    PreActivation(ArrayView2<'a, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    /// Gradient w.r.t. the network input batch.
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Network, batch: usize) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
            input: Array2::zeros((batch, net.input_dim())),
        }
    }

    /// `self += scale * other` over the parameter gradients.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(scale, &b.weights);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.iter().all(|v| v.is_finite()) && g.bias.iter().all(|v| v.is_finite()))
    }
}

/// Ordered stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
    pub mode: Mode,
}

impl Network {
    /// Build a network with Gaussian `N(0, init_std²)` weights and zero biases.
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], init_std: f64, rng: &mut R) -> Result<Self, NeuralError> {
        let normal = Normal::new(0.0, init_std).map_err(|_| NeuralError::InvalidConfig(format!("init std {init_std}")))?;
        let layers = specs
            .iter()
            .map(|s| DenseLayer {
                weights: Array2::from_shape_simple_fn((s.outputs, s.inputs), || normal.sample(rng)),
                bias: Array1::zeros(s.outputs),
                activation: s.activation,
                dropout: s.dropout,
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self, NeuralError> {
        if layers.is_empty() {
            return Err(NeuralError::InvalidConfig("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs() == 0 || l.outputs() == 0 {
                return Err(NeuralError::InvalidConfig(format!("layer {i} has a zero dimension")));
            }
            if l.bias.len() != l.outputs() {
                return Err(NeuralError::ShapeMismatch {
                    context: format!("bias of layer {i}"),
                    expected: l.outputs(),
                    found: l.bias.len(),
                });
            }
            if !(0.0..1.0).contains(&l.dropout) {
                return Err(NeuralError::InvalidConfig(format!("dropout {} of layer {i} outside [0,1)", l.dropout)));
            }
            if let Activation::LeakyRelu(a) = l.activation {
                if !a.is_finite() {
                    return Err(NeuralError::InvalidConfig(format!("leaky slope {a} of layer {i}")));
                }
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(NeuralError::ShapeMismatch {
                    context: format!("input of layer {}", i + 1),
                    expected: pair[0].outputs(),
                    found: pair[1].inputs(),
                });
            }
        }
        Ok(Network {
            layers,
            mode: Mode::Eval,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NeuralError> {
        if x.ncols() != self.input_dim() {
            return Err(NeuralError::ShapeMismatch {
                context: "network input width".into(),
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Forward pass honouring `self.mode`. In `Train` mode dropout masks are
    /// drawn from `rng` and intermediates are cached for [`Network::backward`].
    pub fn forward<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, rng: &mut R) -> Result<ForwardPass, NeuralError> {
        match self.mode {
            Mode::Eval => Ok(ForwardPass {
                output: self.predict(x)?,
                cache: None,
            }),
            Mode::Train => {
                let (output, cache) = self.forward_train(x, rng)?;
                Ok(ForwardPass {
                    output,
                    cache: Some(cache),
                })
            }
        }
    }

    /// Eval-mode forward: no dropout, no cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_input(&x)?;
        let mut current = self.layers[0].affine(&x);
        current = self.layers[0].activation.apply(&current);
        for layer in &self.layers[1..] {
            let z = layer.affine(&current.view());
            current = layer.activation.apply(&z);
        }
        Ok(current)
    }

    /// Train-mode forward with inverted dropout.
    pub fn forward_train<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, rng: &mut R) -> Result<(Array2<f64>, ForwardCache), NeuralError> {
        self.forward_with_cache(x, Some(rng))
    }

    /// Forward pass that keeps intermediates for [`Network::backward`] but
    /// applies no dropout. Used to backpropagate through a frozen network.
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache), NeuralError> {
        self.forward_with_cache::<crate::rng::Rng>(x, None)
    }

    fn forward_with_cache<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, mut rng: Option<&mut R>) -> Result<(Array2<f64>, ForwardCache), NeuralError> {
        self.check_input(&x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        for layer in &self.layers {
            let z = layer.affine(&current.view());
            let a = layer.activation.apply(&z);
            let (out, mask) = if let (true, Some(rng)) = (layer.dropout > 0.0, rng.as_deref_mut()) {
                let keep = 1.0 - layer.dropout;
                let scale = 1.0 / keep;
                let mask = Array2::from_shape_simple_fn(a.raw_dim(), || if rng.random::<f64>() < keep { scale } else { 0.0 });
                (&a * &mask, Some(mask))
            } else {
                (a.clone(), None)
            };
            caches.push(LayerCache {
                input: current,
                pre_activation: z,
                activation: a,
                mask,
            });
            current = out;
        }
        Ok((current, ForwardCache { layers: caches }))
    }

    /// Gradients of a scalar loss w.r.t. every weight and bias and the input,
    /// given the upstream gradient at the output.
    pub fn backward(&self, cache: Option<&ForwardCache>, grad: OutputGrad<'_>) -> Result<Gradients, NeuralError> {
        let cache = cache.ok_or(NeuralError::MissingCache)?;
        if cache.layers.len() != self.layers.len() {
            return Err(NeuralError::MissingCache);
        }
        let last = self.layers.len() - 1;
        let (upstream, at_pre_activation) = match grad {
            OutputGrad::Activation(g) => (g, false),
            OutputGrad::PreActivation(g) => (g, true),
        };
        let out_shape = cache.layers[last].activation.dim();
        if upstream.dim() != out_shape {
            return Err(NeuralError::ShapeMismatch {
                context: "output gradient".into(),
                expected: out_shape.0 * out_shape.1,
                found: upstream.len(),
            });
        }
        if at_pre_activation && cache.layers[last].mask.is_some() {
            return Err(NeuralError::InvalidConfig(
                "pre-activation gradient requires the final layer to have no dropout".into(),
            ));
        }

        let mut layer_grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.to_owned();
        for (i, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let dz = if i == last && at_pre_activation {
                g
            } else {
                if let Some(mask) = &lc.mask {
                    g *= mask;
                }
                layer.activation.backprop(&lc.pre_activation, &lc.activation, &g)
            };
            let dw = dz.t().dot(&lc.input);
            let db = dz.sum_axis(Axis(0));
            g = dz.dot(&layer.weights);
            layer_grads.push(LayerGrad { weights: dw, bias: db });
        }
        layer_grads.reverse();
        Ok(Gradients {
            layers: layer_grads,
            input: g,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }
}
