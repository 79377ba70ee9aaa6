//! MLP packet classifier, confusion matrices, precision / recall / F1, and
//! side-by-side comparison of augmentation methods.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_histogram, gather, LabeledDataset, OneHot};
use crate::neural::{
    loss_value_and_grad, mlp_specs, softmax_cross_entropy_fused_grad, Activation, AdamConfig, AdamState, LossKind, Network,
    NeuralError, OutputGrad,
};
use crate::rng::seeded;

const EVAL_CHUNK: usize = 1024;

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("invalid classifier configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("class tables differ between {0} and {1}")]
    ClassTableMismatch(String, String),
    #[error("non-finite training loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("report parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub init_std: f64,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128],
            epochs: 50,
            batch_size: 64,
            adam: AdamConfig::default(),
            init_std: 0.05,
            patience: 10,
            seed: 0,
        }
    }
}

/// Per-epoch training curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurves {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub validation_accuracy: Vec<f64>,
    /// Epoch whose parameters were returned, if any epoch ran.
    pub best_epoch: Option<usize>,
}

fn mean_cce(net: &Network, data: &LabeledDataset) -> Result<(f64, f64), NeuralError> {
    let one_hot = OneHot::new(data.num_classes());
    let mut total = 0.0;
    let mut correct = 0usize;
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let x = data.pbm().slice(ndarray::s![start..end, ..]);
        let probs = net.predict(x)?;
        let labels = &data.labels()[start..end];
        let targets = one_hot.encode_batch(labels);
        let (loss, _) = loss_value_and_grad(LossKind::CategoricalCrossEntropy, probs.view(), targets.view())?;
        total += loss * (end - start) as f64;
        correct += argmax_rows(probs.view()).iter().zip(labels).filter(|(p, t)| p == t).count();
    }
    let n = data.len() as f64;
    Ok((total / n, correct as f64 / n))
}

/// Index of the largest entry per row; the first index wins ties.
pub fn argmax_rows(probs: ArrayView2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Train a softmax MLP with categorical cross-entropy and Adam, returning
/// the parameters from the epoch with the lowest validation loss.
/// An empty validation split falls back to the training loss.
pub fn train_classifier(
    train: &LabeledDataset,
    validation: &LabeledDataset,
    config: &ClassifierConfig,
) -> Result<(Network, TrainingCurves), ClassifyError> {
    if config.batch_size == 0 {
        return Err(ClassifyError::InvalidConfig("batch_size must be at least 1".into()));
    }
    if config.hidden.contains(&0) {
        return Err(ClassifyError::InvalidConfig("hidden layer sizes must be positive".into()));
    }
    if train.is_empty() {
        return Err(ClassifyError::Empty("training split"));
    }
    if !validation.is_empty() && validation.width() != train.width() {
        return Err(ClassifyError::WidthMismatch {
            expected: train.width(),
            found: validation.width(),
        });
    }
    if validation.class_names() != train.class_names() {
        return Err(ClassifyError::ClassTableMismatch("training split".into(), "validation split".into()));
    }
    let classes = train.num_classes();
    for (c, &n) in class_histogram(train).counts.iter().enumerate() {
        if n == 0 {
            log::warn!("class {:?} is absent from the training split", train.class_names()[c]);
        }
    }

    let specs = mlp_specs(train.width(), &config.hidden, classes, Activation::Relu, 0.0, Activation::Softmax);
    let mut net = Network::new(&specs, config.init_std, &mut seeded(config.seed, 1))?;
    let mut opt = AdamState::new(&net, config.adam);
    let mut rng = seeded(config.seed, 2);
    let one_hot = OneHot::new(classes);
    let monitor = if validation.is_empty() { train } else { validation };

    let mut curves = TrainingCurves::default();
    let mut best: Option<(f64, Network)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = gather(train.pbm().view(), batch);
            let labels: Vec<usize> = batch.iter().map(|&i| train.labels()[i]).collect();
            let targets = one_hot.encode_batch(&labels);
            let (probs, cache) = net.forward_train(x.view(), &mut rng)?;
            let (loss, _) = loss_value_and_grad(LossKind::CategoricalCrossEntropy, probs.view(), targets.view())?;
            let grad = softmax_cross_entropy_fused_grad(probs.view(), targets.view())?;
            let grads = net.backward(Some(&cache), OutputGrad::PreActivation(grad.view()))?;
            opt.step(&mut net, &grads)?;
            epoch_loss += loss * batch.len() as f64;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let (val_loss, val_acc) = mean_cce(&net, monitor)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(ClassifyError::NonFinite { epoch });
        }
        curves.train_loss.push(train_loss);
        curves.validation_loss.push(val_loss);
        curves.validation_accuracy.push(val_acc);
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, net.clone()));
            curves.best_epoch = Some(epoch);
        } else if epoch - curves.best_epoch.unwrap_or(0) >= config.patience {
            log::debug!("early stop at epoch {epoch}");
            break;
        }
    }
    Ok((best.map(|(_, n)| n).unwrap_or(net), curves))
}

/// `counts[[i, j]]` = number of rows of true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Self {
        assert_eq!(truth.len(), predicted.len(), "truth and predictions differ in length");
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.counts[t][p] += 1;
        }
        cm
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.classes()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    /// CSV with a header row of class names and the true class name leading
    /// each row.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for name in class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in class_names.iter().zip(&self.counts) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when TP + FP = 0; precision is then reported as 0.
    pub precision_undefined: bool,
    /// Set when TP + FN = 0; recall is then reported as 0.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub dataset_hash: String,
    pub seed: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    #[serde(rename = "class")]
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl MetricsReport {
    /// Per-class and macro metrics from a confusion matrix.
    pub fn from_confusion(cm: &ConfusionMatrix, class_names: &[String]) -> Self {
        let rows = cm.row_sums();
        let cols = cm.column_sums();
        let per_class: Vec<ClassMetrics> = (0..cm.classes())
            .map(|c| {
                let tp = cm.counts[c][c];
                let (precision, precision_undefined) = ratio(tp, cols[c]);
                let (recall, recall_undefined) = ratio(tp, rows[c]);
                ClassMetrics {
                    name: class_names.get(c).cloned().unwrap_or_else(|| format!("class{c}")),
                    support: rows[c],
                    precision,
                    recall,
                    f1: f1_score(precision, recall),
                    precision_undefined,
                    recall_undefined,
                }
            })
            .collect();
        let k = per_class.len().max(1) as f64;
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
        Self {
            method: String::new(),
            dataset_hash: String::new(),
            seed: 0,
            accuracy: ratio(cm.trace(), cm.total()).0,
            macro_precision: mean(|m| m.precision),
            macro_recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.f1),
            per_class,
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.per_class.iter().map(|m| m.name.clone()).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metrics report serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ClassifyError> {
        toml::from_str(text).map_err(|e| ClassifyError::Parse(e.to_string()))
    }

    /// One row per class plus a trailing macro-average row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,support,precision,recall,f1,precision_undefined,recall_undefined\n");
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                m.name, m.support, m.precision, m.recall, m.f1, m.precision_undefined, m.recall_undefined
            );
        }
        let support: u64 = self.per_class.iter().map(|m| m.support).sum();
        let _ = writeln!(
            out,
            "average,{support},{},{},{},false,false",
            self.macro_precision, self.macro_recall, self.macro_f1
        );
        out
    }
}

/// Predict every row of `test` and tally the confusion matrix and metrics.
pub fn evaluate(net: &Network, test: &LabeledDataset) -> Result<(ConfusionMatrix, MetricsReport), ClassifyError> {
    if test.is_empty() {
        return Err(ClassifyError::Empty("test split"));
    }
    if net.output_dim() != test.num_classes() {
        return Err(ClassifyError::WidthMismatch {
            expected: test.num_classes(),
            found: net.output_dim(),
        });
    }
    let mut predicted = Vec::with_capacity(test.len());
    for chunk in test.pbm().axis_chunks_iter(Axis(0), EVAL_CHUNK) {
        predicted.extend(argmax_rows(net.predict(chunk)?.view()));
    }
    let cm = ConfusionMatrix::from_predictions(test.labels(), &predicted, test.num_classes());
    let mut report = MetricsReport::from_confusion(&cm, test.class_names());
    report.dataset_hash = test.content_hash();
    Ok((cm, report))
}

/// Column order of the comparison table.
pub const COMPARISON_COLUMNS: [&str; 5] = ["method", "accuracy", "precision", "recall", "f1"];

/// Full-scale results for a 15-class public capture corpus balanced to 10000
/// rows per class, classified by an MLP after 200000 GAN training steps.
/// Columns follow [`COMPARISON_COLUMNS`]. These need the full corpus and
/// are kept as reference values only; desk-scale runs are not expected to
/// match them.
pub const FULL_SCALE_REFERENCE: [(&str, [f64; 4]); 5] = [
    ("unbalanced", [0.9797, 0.9759, 0.9775, 0.9766]),
    ("ROS", [0.9889, 0.9892, 0.9889, 0.9891]),
    ("SMOTE", [0.9769, 0.9751, 0.9789, 0.971]),
    ("GAN", [0.9766, 0.9766, 0.9767, 0.9766]),
    ("CGAN", [0.9951, 0.9936, 0.9958, 0.9947]),
];

/// Method-by-metric table built from several reports on one class table.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reports: Vec<MetricsReport>,
}

/// Collect reports into a comparison; rows keep the given order. See
/// [`FULL_SCALE_REFERENCE`] for the values reported on the full corpus.
pub fn compare_methods(reports: &[MetricsReport]) -> Result<Comparison, ClassifyError> {
    if let Some(first) = reports.first() {
        let names = first.class_names();
        for r in &reports[1..] {
            if r.class_names() != names {
                return Err(ClassifyError::ClassTableMismatch(first.method.clone(), r.method.clone()));
            }
        }
    }
    Ok(Comparison {
        reports: reports.to_vec(),
    })
}

impl Comparison {
    fn rows(&self) -> Vec<[String; 5]> {
        self.reports
            .iter()
            .map(|r| {
                [
                    r.method.clone(),
                    format!("{:.4}", r.accuracy),
                    format!("{:.4}", r.macro_precision),
                    format!("{:.4}", r.macro_recall),
                    format!("{:.4}", r.macro_f1),
                ]
            })
            .collect()
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let header = COMPARISON_COLUMNS.map(String::from);
        let rows = self.rows();
        let width = (0..5)
            .map(|c| rows.iter().chain(std::iter::once(&header)).map(|r| r[c].len()).max().unwrap_or(0))
            .collect::<Vec<_>>();
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&rows) {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = width[c]) } else { format!("{v:>w$}", w = width[c]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = COMPARISON_COLUMNS.join(",");
        out.push('\n');
        for r in &self.reports {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.method, r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1
            );
        }
        out
    }

    /// Per-class precision / recall / F1 for every method, with an average
    /// row per method.
    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("method,class,precision,recall,f1\n");
        for r in &self.reports {
            for m in &r.per_class {
                let _ = writeln!(out, "{},{},{},{},{}", r.method, m.name, m.precision, m.recall, m.f1);
            }
            let _ = writeln!(
                out,
                "{},average,{},{},{}",
                r.method, r.macro_precision, r.macro_recall, r.macro_f1
            );
        }
        out
    }
}

/// Class probabilities for every row, eval mode.
pub fn predict_proba(net: &Network, x: ArrayView2<f64>) -> Result<Array2<f64>, ClassifyError> {
    Ok(net.predict(x)?)
}
