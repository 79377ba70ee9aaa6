//! Conditional GAN over packet byte vectors.
//!
//! The generator maps `[z ‖ y]` to a `data_dim` row of sigmoid outputs; the
//! discriminator scores `[x ‖ y]`. A single trained model generates rows for
//! any requested class, which is how a [`BalancePlan`] is filled.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{class_histogram, gather, sample_rows, BalancePlan, DatasetError, LabeledDataset, OneHot};
use crate::gan::{
    check_rows, discriminator_specs, discriminator_step, gan_adam, generator_specs, generator_step, with_condition, GanError,
    LossHistory, LossVariant,
};
use crate::neural::checkpoint::{read_array, read_u32};
use crate::neural::{read_network, write_network, AdamConfig, AdamState, Mode, Network, NeuralError, INIT_STD, LEAKY_SLOPE};
use crate::rng::{seeded, standard_normal};

pub const CGAN_MAGIC: &[u8; 6] = b"PBVCGN";
pub const CGAN_FORMAT_VERSION: u16 = 1;

const STREAM_G_INIT: u64 = 1;
const STREAM_D_INIT: u64 = 2;
const STREAM_TRAIN: u64 = 3;

/// How generator labels are drawn during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LabelSampling {
    #[default]
    Uniform,
    /// Follow the class frequencies of the training data.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CganConfig {
    pub noise_dim: usize,
    pub label_dim: usize,
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
    pub label_sampling: LabelSampling,
    pub seed: u64,
}

impl Default for CganConfig {
    fn default() -> Self {
        Self::full_size(15)
    }
}

impl CganConfig {
    /// Full-size settings: 1480-byte rows, 100-d noise, 256/512 generator,
    /// 512/256/128 discriminator, 200000 steps of 64.
    pub fn full_size(label_dim: usize) -> Self {
        Self {
            noise_dim: 100,
            label_dim,
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
            label_sampling: LabelSampling::Uniform,
            seed: 0,
        }
    }

    /// Same layer layout on narrower rows and a shorter schedule.
    pub fn desk(data_dim: usize, label_dim: usize, steps: usize) -> Self {
        Self {
            data_dim,
            steps,
            ..Self::full_size(label_dim)
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: &str| Err(GanError::InvalidConfig(m.into()));
        if self.label_dim < 2 {
            return bad("label_dim must be at least 2");
        }
        if self.noise_dim == 0 || self.data_dim == 0 || self.batch_size == 0 {
            return bad("noise_dim, data_dim and batch_size must be positive");
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

/// Minibatch of rows with their one-hot labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalBatch {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl ConditionalBatch {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self, GanError> {
        if x.nrows() != y.nrows() {
            return Err(GanError::InvalidConfig(format!("{} rows but {} labels", x.nrows(), y.nrows())));
        }
        for row in y.rows() {
            if row.sum() != 1.0 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(GanError::InvalidConfig("label rows must be one-hot".into()));
            }
        }
        Ok(Self { x, y })
    }

    /// Discriminator input `[x ‖ y]`.
    pub fn joined(&self) -> Array2<f64> {
        with_condition(self.x.view(), Some(self.y.view()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CganModel {
    pub generator: Network,
    pub discriminator: Network,
    pub noise_dim: usize,
    pub label_dim: usize,
    pub class_names: Vec<String>,
    /// Number of completed training steps; zero means untrained.
    pub steps_trained: u64,
}

impl CganModel {
    /// Freshly initialised networks for `config`.
    pub fn new(config: &CganConfig, class_names: Vec<String>) -> Result<Self, GanError> {
        config.validate()?;
        if class_names.len() != config.label_dim {
            return Err(GanError::InvalidConfig(format!(
                "{} class names for label_dim {}",
                class_names.len(),
                config.label_dim
            )));
        }
        let g_specs = generator_specs(
            config.noise_dim + config.label_dim,
            config.data_dim,
            &config.g_hidden,
            config.leaky_slope,
        );
        let d_specs = discriminator_specs(
            config.data_dim + config.label_dim,
            config.d_input_layer,
            &config.d_hidden,
            config.leaky_slope,
            config.d_dropout,
        );
        Ok(Self {
            generator: Network::new(&g_specs, config.init_std, &mut seeded(config.seed, STREAM_G_INIT))?,
            discriminator: Network::new(&d_specs, config.init_std, &mut seeded(config.seed, STREAM_D_INIT))?,
            noise_dim: config.noise_dim,
            label_dim: config.label_dim,
            class_names,
            steps_trained: 0,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.generator.output_dim()
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<(), NeuralError> {
        out.write_all(CGAN_MAGIC)?;
        out.write_all(&CGAN_FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.noise_dim as u32).to_le_bytes())?;
        out.write_all(&(self.label_dim as u32).to_le_bytes())?;
        out.write_all(&self.steps_trained.to_le_bytes())?;
        out.write_all(&(self.class_names.len() as u32).to_le_bytes())?;
        for name in &self.class_names {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
        }
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
        if &magic != CGAN_MAGIC {
            return Err(NeuralError::Checkpoint("not a conditional GAN checkpoint (bad magic)".into()));
        }
        let version = u16::from_le_bytes(read_array(input)?);
        if version != CGAN_FORMAT_VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let noise_dim = read_u32(input)? as usize;
        let label_dim = read_u32(input)? as usize;
        let steps_trained = u64::from_le_bytes(read_array(input)?);
        let names = read_u32(input)? as usize;
        if names != label_dim {
            return Err(NeuralError::Checkpoint(format!("{names} class names for label_dim {label_dim}")));
        }
        let mut class_names = Vec::with_capacity(names);
        for _ in 0..names {
            let len = read_u32(input)? as usize;
            if len > 4096 {
                return Err(NeuralError::Checkpoint(format!("implausible class name length {len}")));
            }
            let mut buf = vec![0u8; len];
            input
                .read_exact(&mut buf)
                .map_err(|e| NeuralError::Checkpoint(format!("truncated checkpoint: {e}")))?;
            class_names.push(String::from_utf8(buf).map_err(|e| NeuralError::Checkpoint(e.to_string()))?);
        }
        let generator = read_network(input)?;
        let discriminator = read_network(input)?;
        if generator.input_dim() != noise_dim + label_dim || discriminator.input_dim() != generator.output_dim() + label_dim {
            return Err(NeuralError::Checkpoint("generator and discriminator shapes disagree".into()));
        }
        Ok(Self {
            generator,
            discriminator,
            noise_dim,
            label_dim,
            class_names,
            steps_trained,
        })
    }
}

fn draw_labels<R: rand::Rng + ?Sized>(n: usize, sampling: LabelSampling, label_dim: usize, real: &[usize], rng: &mut R) -> Vec<usize> {
    match sampling {
        LabelSampling::Uniform => (0..n).map(|_| rng.random_range(0..label_dim)).collect(),
        LabelSampling::Empirical => sample_rows(n, real.len(), rng).into_iter().map(|i| real[i]).collect(),
    }
}

/// Train the conditional GAN on every row of `ds`.
///
/// Each step takes one discriminator update on a real minibatch and a
/// generated minibatch, then one generator update through the frozen
/// discriminator. The label block given to the generator is the same one
/// appended to its output for the discriminator.
pub fn train_cgan(ds: &LabeledDataset, config: &CganConfig) -> Result<(CganModel, LossHistory), GanError> {
    config.validate()?;
    if ds.num_classes() != config.label_dim {
        return Err(GanError::InvalidConfig(format!(
            "dataset has {} classes, label_dim is {}",
            ds.num_classes(),
            config.label_dim
        )));
    }
    check_rows(ds.pbm().view(), config.data_dim)?;
    let hist = class_histogram(ds);
    if let Some(c) = hist.counts.iter().position(|&n| n == 0) {
        return Err(DatasetError::EmptyClass {
            name: ds.class_names()[c].clone(),
            deficit: 0,
        }
        .into());
    }

    let mut model = CganModel::new(config, ds.class_names().to_vec())?;
    model.discriminator.set_mode(Mode::Train);
    let mut g_opt = AdamState::new(&model.generator, config.g_adam);
    let mut d_opt = AdamState::new(&model.discriminator, config.d_adam);
    let mut rng = seeded(config.seed, STREAM_TRAIN);
    let one_hot = OneHot::new(config.label_dim);
    let m = config.batch_size;
    let mut history = LossHistory::with_capacity(config.steps);

    for step in 0..config.steps {
        let idx = sample_rows(m, ds.len(), &mut rng);
        let real_labels: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
        let real = ConditionalBatch::new(gather(ds.pbm().view(), &idx), one_hot.encode_batch(&real_labels))?;

        let y_fake = one_hot.encode_batch(&draw_labels(m, config.label_sampling, config.label_dim, ds.labels(), &mut rng));
        let z = standard_normal(m, config.noise_dim, &mut rng);
        let x_fake = model.generator.predict(with_condition(z.view(), Some(y_fake.view())).view())?;
        let fake = ConditionalBatch::new(x_fake, y_fake)?;

        let d_loss = discriminator_step(
            &mut model.discriminator,
            &mut d_opt,
            real.joined().view(),
            fake.joined().view(),
            &mut rng,
        )?;
        if !d_loss.is_finite() {
            return Err(GanError::NonFinite { step, which: "discriminator" });
        }

        let y = one_hot.encode_batch(&draw_labels(m, config.label_sampling, config.label_dim, ds.labels(), &mut rng));
        let z = standard_normal(m, config.noise_dim, &mut rng);
        let g_input = with_condition(z.view(), Some(y.view()));
        let g_loss = generator_step(
            &mut model.generator,
            &mut g_opt,
            &model.discriminator,
            g_input.view(),
            Some(y.view()),
            config.loss_variant,
            &mut rng,
        )?;
        if !g_loss.is_finite() {
            return Err(GanError::NonFinite { step, which: "generator" });
        }
        history.d_loss.push(d_loss);
        history.g_loss.push(g_loss);
        model.steps_trained += 1;
    }
    model.discriminator.set_mode(Mode::Eval);
    log::debug!("trained conditional GAN for {} steps", config.steps);
    Ok((model, history))
}

/// `n` rows for `class_label`: `[z ‖ onehot(class_label)]` through the
/// generator in eval mode.
pub fn generate_conditional(model: &CganModel, class_label: usize, n: usize, seed: u64) -> Result<Array2<f64>, GanError> {
    if class_label >= model.label_dim {
        return Err(GanError::LabelOutOfRange {
            label: class_label,
            classes: model.label_dim,
        });
    }
    let z = standard_normal(n, model.noise_dim, &mut seeded(seed, class_label as u64));
    let y = OneHot::new(model.label_dim).encode_batch(&vec![class_label; n]);
    Ok(model.generator.predict(with_condition(z.view(), Some(y.view())).view())?)
}

/// Generated rows for every deficit in `plan`, labelled by construction.
/// Returns synthetic rows only.
pub fn augment_to_balance(model: &CganModel, ds: &LabeledDataset, plan: &BalancePlan, seed: u64) -> Result<LabeledDataset, GanError> {
    if model.steps_trained == 0 {
        return Err(GanError::Untrained);
    }
    if ds.class_names() != model.class_names.as_slice() {
        return Err(DatasetError::ClassTableMismatch(ds.class_names().to_vec(), model.class_names.clone()).into());
    }
    if plan.num_classes() != model.label_dim {
        return Err(DatasetError::PlanSize {
            plan: plan.num_classes(),
            dataset: model.label_dim,
        }
        .into());
    }
    let mut blocks: Vec<Array2<f64>> = Vec::new();
    let mut labels = Vec::with_capacity(plan.total_deficit());
    for class in 0..model.label_dim {
        let deficit = plan.deficit(class);
        if deficit == 0 {
            continue;
        }
        blocks.push(generate_conditional(model, class, deficit, seed)?);
        labels.extend(std::iter::repeat_n(class, deficit));
    }
    let views: Vec<ArrayView2<f64>> = blocks.iter().map(|b| b.view()).collect();
    let pbm = if views.is_empty() {
        Array2::zeros((0, model.data_dim()))
    } else {
        ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths")
    };
    Ok(LabeledDataset::new(pbm, labels, model.class_names.clone())?.into_synthetic())
}
