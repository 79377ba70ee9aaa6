//! Unconditional GAN baseline and the adversarial update steps shared with
//! the conditional GAN.
//!
//! The discriminator outputs a raw logit and is trained with sigmoid
//! cross-entropy on a real batch stacked over a generated batch. The
//! generator is updated through a frozen, dropout-free discriminator.

use std::io::{Read, Write};

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{gather, sample_rows, BalancePlan, DatasetError, LabeledDataset};
use crate::neural::checkpoint::{read_array, read_u32};
use crate::neural::{
    loss_value_and_grad, mlp_specs, read_network, write_network, Activation, AdamConfig, AdamState, LayerSpec, LossKind, Mode,
    Network, NeuralError, OutputGrad, INIT_STD, LEAKY_SLOPE,
};
use crate::rng::{seeded, standard_normal};

pub const GAN_MAGIC: &[u8; 6] = b"PBVGAN";

const STREAM_G_INIT: u64 = 1;
const STREAM_D_INIT: u64 = 2;
const STREAM_TRAIN: u64 = 3;

#[derive(Debug, thiserror::Error)]
pub enum GanError {
    #[error("invalid GAN configuration: {0}")]
    InvalidConfig(String),
    #[error("no training rows")]
    EmptyData,
    #[error("training data width {found} does not match data_dim {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("training value {value} at row {row} is outside [0, 1]")]
    OutOfRange { row: usize, value: f64 },
    #[error("non-finite {which} loss at step {step}")]
    NonFinite { step: usize, which: &'static str },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("model has not been trained")]
    Untrained,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LossVariant {
    /// Minimise `log(1 - D(G(z)))` as written in the minimax objective.
    MinimaxEq1,
    /// Maximise `log D(G(z))`.
    #[default]
    NonSaturating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub noise_dim: usize,
    pub data_dim: usize,
    pub g_hidden: Vec<usize>,
    /// Prepend a dense layer as wide as the discriminator input.
    pub d_input_layer: bool,
    pub d_hidden: Vec<usize>,
    pub d_dropout: f64,
    pub leaky_slope: f64,
    pub init_std: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub g_adam: AdamConfig,
    pub d_adam: AdamConfig,
    pub loss_variant: LossVariant,
    pub seed: u64,
}

/// Adam settings used for both adversaries unless configured otherwise.
pub fn gan_adam() -> AdamConfig {
    AdamConfig::with_learning_rate(2e-4)
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            noise_dim: 100,
            data_dim: crate::preprocess::DEFAULT_FIXED_LEN,
            g_hidden: vec![256, 512],
            d_input_layer: true,
            d_hidden: vec![512, 256, 128],
            d_dropout: 0.3,
            leaky_slope: LEAKY_SLOPE,
            init_std: INIT_STD,
            steps: 200_000,
            batch_size: 64,
            g_adam: gan_adam(),
            d_adam: gan_adam(),
            loss_variant: LossVariant::NonSaturating,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: &str| Err(GanError::InvalidConfig(m.into()));
        if self.noise_dim == 0 {
            return bad("noise_dim must be at least 1");
        }
        if self.data_dim == 0 {
            return bad("data_dim must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.g_hidden.contains(&0) || self.d_hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.d_dropout) {
            return bad("d_dropout must be in [0, 1)");
        }
        Ok(())
    }
}

/// Generator stack: `inputs → g_hidden… → data_dim` with leaky ReLU hidden
/// layers and a sigmoid output.
pub fn generator_specs(inputs: usize, data_dim: usize, hidden: &[usize], slope: f64) -> Vec<LayerSpec> {
    mlp_specs(inputs, hidden, data_dim, Activation::LeakyRelu(slope), 0.0, Activation::Sigmoid)
}

/// Discriminator stack: `inputs → [inputs] → d_hidden… → 1` with leaky ReLU
/// and dropout on hidden layers and a linear (logit) output.
pub fn discriminator_specs(inputs: usize, input_layer: bool, hidden: &[usize], slope: f64, dropout: f64) -> Vec<LayerSpec> {
    let mut widths = Vec::with_capacity(hidden.len() + 1);
    if input_layer {
        widths.push(inputs);
    }
    widths.extend_from_slice(hidden);
    mlp_specs(inputs, &widths, 1, Activation::LeakyRelu(slope), dropout, Activation::Linear)
}

/// Per-step discriminator and generator losses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub d_loss: Vec<f64>,
    pub g_loss: Vec<f64>,
}

impl LossHistory {
    pub fn with_capacity(steps: usize) -> Self {
        Self {
            d_loss: Vec::with_capacity(steps),
            g_loss: Vec::with_capacity(steps),
        }
    }

    /// Total number of recorded entries (one D and one G entry per step).
    pub fn len(&self) -> usize {
        self.d_loss.len() + self.g_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn steps(&self) -> usize {
        self.d_loss.len().min(self.g_loss.len())
    }

    pub fn is_finite(&self) -> bool {
        self.d_loss.iter().chain(&self.g_loss).all(|v| v.is_finite())
    }

    /// CSV with header `step,d_loss,g_loss`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "step,d_loss,g_loss")?;
        for (i, (d, g)) in self.d_loss.iter().zip(&self.g_loss).enumerate() {
            writeln!(out, "{i},{d},{g}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Append the conditioning block `y` (if any) to the columns of `x`.
pub fn with_condition(x: ArrayView2<f64>, y: Option<ArrayView2<f64>>) -> Array2<f64> {
    match y {
        Some(y) => concatenate![Axis(1), x, y],
        None => x.to_owned(),
    }
}

/// One discriminator update on `real` (target 1) stacked over `fake`
/// (target 0). Inputs already include any conditioning columns. Returns the
/// mean loss, which equals `(loss_real + loss_fake) / 2` for equal batches.
pub fn discriminator_step<R: rand::Rng + ?Sized>(
    d: &mut Network,
    opt: &mut AdamState,
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    rng: &mut R,
) -> Result<f64, NeuralError> {
    let batch = concatenate![Axis(0), real, fake];
    let mut targets = Array2::zeros((batch.nrows(), 1));
    targets.slice_mut(s![..real.nrows(), ..]).fill(1.0);
    let (logits, cache) = d.forward_train(batch.view(), rng)?;
    let (loss, grad) = loss_value_and_grad(LossKind::SigmoidCrossEntropyWithLogits, logits.view(), targets.view())?;
    let grads = d.backward(Some(&cache), OutputGrad::Activation(grad.view()))?;
    opt.step(d, &grads)?;
    Ok(loss)
}

fn generator_objective(logits: ArrayView2<f64>, variant: LossVariant) -> Result<(f64, Array2<f64>), NeuralError> {
    match variant {
        LossVariant::NonSaturating => {
            let ones = Array2::ones(logits.raw_dim());
            loss_value_and_grad(LossKind::SigmoidCrossEntropyWithLogits, logits, ones.view())
        }
        LossVariant::MinimaxEq1 => {
            // log(1 - σ(l)) = -softplus(l), the negated "fake" cross-entropy
            let zeros = Array2::zeros(logits.raw_dim());
            let (loss, grad) = loss_value_and_grad(LossKind::SigmoidCrossEntropyWithLogits, logits, zeros.view())?;
            Ok((-loss, -grad))
        }
    }
}

/// Generator loss on a fixed batch, both networks in eval form.
pub fn generator_loss(
    g: &Network,
    d: &Network,
    g_input: ArrayView2<f64>,
    condition: Option<ArrayView2<f64>>,
    variant: LossVariant,
) -> Result<f64, NeuralError> {
    let x = g.predict(g_input)?;
    let logits = d.predict(with_condition(x.view(), condition).view())?;
    Ok(generator_objective(logits.view(), variant)?.0)
}

/// One generator update through the frozen discriminator. `g_input` is the
/// generator input (noise plus any conditioning columns); `condition` is the
/// block appended to the generated rows before they reach `d`.
pub fn generator_step<R: rand::Rng + ?Sized>(
    g: &mut Network,
    opt: &mut AdamState,
    d: &Network,
    g_input: ArrayView2<f64>,
    condition: Option<ArrayView2<f64>>,
    variant: LossVariant,
    rng: &mut R,
) -> Result<f64, NeuralError> {
    let (x, g_cache) = g.forward_train(g_input, rng)?;
    let d_input = with_condition(x.view(), condition);
    let (logits, d_cache) = d.forward_cached(d_input.view())?;
    let (loss, grad) = generator_objective(logits.view(), variant)?;
    let d_grads = d.backward(Some(&d_cache), OutputGrad::Activation(grad.view()))?;
    let data_grad = d_grads.input.slice(s![.., ..x.ncols()]);
    let g_grads = g.backward(Some(&g_cache), OutputGrad::Activation(data_grad))?;
    opt.step(g, &g_grads)?;
    Ok(loss)
}

pub(crate) fn check_rows(rows: ArrayView2<f64>, data_dim: usize) -> Result<(), GanError> {
    if rows.nrows() == 0 {
        return Err(GanError::EmptyData);
    }
    if rows.ncols() != data_dim {
        return Err(GanError::WidthMismatch {
            expected: data_dim,
            found: rows.ncols(),
        });
    }
    for (row, r) in rows.rows().into_iter().enumerate() {
        if let Some(&value) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(GanError::OutOfRange { row, value });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub generator: Network,
    pub discriminator: Network,
    pub noise_dim: usize,
}

impl GanModel {
    pub fn new(config: &GanConfig) -> Result<Self, GanError> {
        Self::with_stream(config, 0)
    }

    fn with_stream(config: &GanConfig, offset: u64) -> Result<Self, GanError> {
        config.validate()?;
        let g_specs = generator_specs(config.noise_dim, config.data_dim, &config.g_hidden, config.leaky_slope);
        let d_specs = discriminator_specs(
            config.data_dim,
            config.d_input_layer,
            &config.d_hidden,
            config.leaky_slope,
            config.d_dropout,
        );
        let generator = Network::new(&g_specs, config.init_std, &mut seeded(config.seed, offset + STREAM_G_INIT))?;
        let discriminator = Network::new(&d_specs, config.init_std, &mut seeded(config.seed, offset + STREAM_D_INIT))?;
        Ok(Self {
            generator,
            discriminator,
            noise_dim: config.noise_dim,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.generator.output_dim()
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<(), NeuralError> {
        out.write_all(GAN_MAGIC)?;
        out.write_all(&(self.noise_dim as u32).to_le_bytes())?;
        write_network(&self.generator, out)?;
        write_network(&self.discriminator, out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read<R: Read>(input: &mut R) -> Result<Self, NeuralError> {
        let magic: [u8; 6] = read_array(input)?;
        if &magic != GAN_MAGIC {
            return Err(NeuralError::Checkpoint("not a GAN checkpoint (bad magic)".into()));
        }
        let noise_dim = read_u32(input)? as usize;
        let generator = read_network(input)?;
        let discriminator = read_network(input)?;
        if generator.input_dim() != noise_dim || discriminator.input_dim() != generator.output_dim() {
            return Err(NeuralError::Checkpoint("generator and discriminator shapes disagree".into()));
        }
        Ok(Self {
            generator,
            discriminator,
            noise_dim,
        })
    }
}

/// Train an unconditional GAN on `real` rows (all values in `[0, 1]`).
pub fn train_gan(real: ArrayView2<f64>, config: &GanConfig) -> Result<(GanModel, LossHistory), GanError> {
    train_gan_stream(real, config, 0)
}

fn train_gan_stream(real: ArrayView2<f64>, config: &GanConfig, offset: u64) -> Result<(GanModel, LossHistory), GanError> {
    config.validate()?;
    check_rows(real, config.data_dim)?;
    let mut model = GanModel::with_stream(config, offset)?;
    model.discriminator.set_mode(Mode::Train);
    let mut g_opt = AdamState::new(&model.generator, config.g_adam);
    let mut d_opt = AdamState::new(&model.discriminator, config.d_adam);
    let mut rng = seeded(config.seed, offset + STREAM_TRAIN);
    let mut history = LossHistory::with_capacity(config.steps);
    let m = config.batch_size;
    for step in 0..config.steps {
        let real_batch = gather(real, &sample_rows(m, real.nrows(), &mut rng));
        let z = standard_normal(m, config.noise_dim, &mut rng);
        let fake = model.generator.predict(z.view())?;
        let d_loss = discriminator_step(&mut model.discriminator, &mut d_opt, real_batch.view(), fake.view(), &mut rng)?;
        if !d_loss.is_finite() {
            return Err(GanError::NonFinite { step, which: "discriminator" });
        }
        let z = standard_normal(m, config.noise_dim, &mut rng);
        let g_loss = generator_step(
            &mut model.generator,
            &mut g_opt,
            &model.discriminator,
            z.view(),
            None,
            config.loss_variant,
            &mut rng,
        )?;
        if !g_loss.is_finite() {
            return Err(GanError::NonFinite { step, which: "generator" });
        }
        history.d_loss.push(d_loss);
        history.g_loss.push(g_loss);
    }
    model.discriminator.set_mode(Mode::Eval);
    Ok((model, history))
}

/// Draw `n` samples: `z ~ N(0, I)` through the generator in eval mode.
pub fn sample(model: &GanModel, n: usize, seed: u64) -> Result<Array2<f64>, GanError> {
    let z = standard_normal(n, model.noise_dim, &mut seeded(seed, 0));
    Ok(model.generator.predict(z.view())?)
}

/// Optimal discriminator output `p_data / (p_data + p_g)` for a fixed generator.
pub fn optimal_discriminator_value(p_data: f64, p_g: f64) -> Result<f64, GanError> {
    if !(p_data >= 0.0 && p_g >= 0.0) || p_data + p_g <= 0.0 {
        return Err(GanError::InvalidConfig(format!(
            "densities must be non-negative with a positive sum, got ({p_data}, {p_g})"
        )));
    }
    Ok(p_data / (p_data + p_g))
}

fn class_offset(class: usize) -> u64 {
    16 * (class as u64 + 1)
}

/// Train the GAN for one class of `ds` on its own random streams.
pub fn train_class_gan(ds: &LabeledDataset, class: usize, config: &GanConfig) -> Result<(GanModel, LossHistory), GanError> {
    if class >= ds.num_classes() {
        return Err(GanError::LabelOutOfRange {
            label: class,
            classes: ds.num_classes(),
        });
    }
    let rows = ds.class_rows(class);
    if rows.nrows() == 0 {
        return Err(DatasetError::EmptyClass {
            name: ds.class_names()[class].clone(),
            deficit: 0,
        }
        .into());
    }
    train_gan_stream(rows.view(), config, class_offset(class))
}

/// `n` synthetic rows labelled `class`, drawn from a model trained by
/// [`train_class_gan`] with the same `seed`.
pub fn sample_class(model: &GanModel, ds: &LabeledDataset, class: usize, n: usize, seed: u64) -> Result<LabeledDataset, GanError> {
    let samples = sample(model, n, seed.wrapping_add(class_offset(class)))?;
    Ok(LabeledDataset::new(samples, vec![class; n], ds.class_names().to_vec())?.into_synthetic())
}

/// Vanilla-GAN augmentation: one model per deficient class, trained on that
/// class's rows, sampled for its deficit. Returns synthetic rows only, plus
/// the trained models and loss histories keyed by class.
pub fn augment_per_class(
    ds: &LabeledDataset,
    plan: &BalancePlan,
    config: &GanConfig,
) -> Result<(LabeledDataset, Vec<(usize, GanModel, LossHistory)>), GanError> {
    if plan.num_classes() != ds.num_classes() {
        return Err(DatasetError::PlanSize {
            plan: plan.num_classes(),
            dataset: ds.num_classes(),
        }
        .into());
    }
    let mut out = LabeledDataset::empty(ds.width(), ds.class_names().to_vec());
    let mut trained = Vec::new();
    for class in 0..ds.num_classes() {
        let deficit = plan.deficit(class);
        if deficit == 0 {
            continue;
        }
        if ds.class_indices(class).is_empty() {
            return Err(DatasetError::EmptyClass {
                name: ds.class_names()[class].clone(),
                deficit,
            }
            .into());
        }
        let (model, history) = train_class_gan(ds, class, config)?;
        let synthetic = sample_class(&model, ds, class, deficit, config.seed)?;
        out = crate::dataset::merge(&out, &synthetic)?;
        trained.push((class, model, history));
    }
    Ok((out, trained))
}
