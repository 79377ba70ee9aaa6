//! Packet Byte Matrix with labels, class bookkeeping, stratified splitting,
//! balance planning and merging of real with synthetic rows.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::{seeded, standard_normal};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{rows} matrix rows but {labels} labels")]
    RowLabelMismatch { rows: usize, labels: usize },
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },
    #[error("matrix entry {value} at ({row}, {col}) is outside [0, 1]")]
    ValueOutOfRange { row: usize, col: usize, value: f64 },
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    InvalidFractions([f64; 3]),
    #[error("class {name:?} has {rows} rows, fewer than the {parts} split parts")]
    ClassTooSmall { name: String, rows: usize, parts: usize },
    #[error("data width mismatch: {expected} vs {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("class tables differ: {0:?} vs {1:?}")]
    ClassTableMismatch(Vec<String>, Vec<String>),
    #[error("class {name:?} has no rows; cannot fill a deficit of {deficit}")]
    EmptyClass { name: String, deficit: usize },
    #[error("plan covers {plan} classes but the dataset has {dataset}")]
    PlanSize { plan: usize, dataset: usize },
    #[error("balanced class {name:?} has {found} rows, plan requires {target}")]
    PlanNotMet { name: String, target: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Real,
    Synthetic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Real => "real",
            Provenance::Synthetic => "synthetic",
        })
    }
}

/// `N × D` Packet Byte Matrix, `N` labels in `[0, C)`, `C` class names and a
/// per-row provenance flag.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pbm: Array2<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    provenance: Vec<Provenance>,
}

impl LabeledDataset {
    /// Real-data dataset; validates every invariant.
    pub fn new(pbm: Array2<f64>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self, DatasetError> {
        let n = labels.len();
        Self::with_provenance(pbm, labels, class_names, vec![Provenance::Real; n])
    }

    pub fn with_provenance(
        pbm: Array2<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        provenance: Vec<Provenance>,
    ) -> Result<Self, DatasetError> {
        if pbm.nrows() != labels.len() || provenance.len() != labels.len() {
            return Err(DatasetError::RowLabelMismatch {
                rows: pbm.nrows(),
                labels: labels.len(),
            });
        }
        let classes = class_names.len();
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(DatasetError::LabelOutOfRange { row, label, classes });
        }
        if let Some(((row, col), &value)) = pbm.indexed_iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(DatasetError::ValueOutOfRange { row, col, value });
        }
        Ok(Self {
            pbm,
            labels,
            class_names,
            provenance,
        })
    }

    /// Empty dataset with the given width and class table.
    pub fn empty(width: usize, class_names: Vec<String>) -> Self {
        Self {
            pbm: Array2::zeros((0, width)),
            labels: Vec::new(),
            class_names,
            provenance: Vec::new(),
        }
    }

    /// Mark every row as synthetic.
    pub fn into_synthetic(mut self) -> Self {
        self.provenance.fill(Provenance::Synthetic);
        self
    }

    pub fn pbm(&self) -> &Array2<f64> {
        &self.pbm
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.pbm.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Row indices carrying `label`, in order.
    pub fn class_indices(&self, label: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Rows of one class as a matrix.
    pub fn class_rows(&self, label: usize) -> Array2<f64> {
        self.pbm.select(Axis(0), &self.class_indices(label))
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            pbm: self.pbm.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
        }
    }

    pub fn synthetic_count(&self) -> usize {
        self.provenance.iter().filter(|&&p| p == Provenance::Synthetic).count()
    }

    /// SHA-256 over the matrix shape, the little-endian bits of every value
    /// and the labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.pbm.nrows() as u64).to_le_bytes());
        h.update((self.pbm.ncols() as u64).to_le_bytes());
        for v in self.pbm.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-class counts and shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: Vec<usize>,
    pub percentages: Vec<f64>,
}

impl ClassDistribution {
    pub fn from_counts(counts: Vec<usize>) -> Self {
        let total: usize = counts.iter().sum();
        let percentages = counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect();
        Self { counts, percentages }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn class_histogram(ds: &LabeledDataset) -> ClassDistribution {
    let mut counts = vec![0; ds.num_classes()];
    for &l in ds.labels() {
        counts[l] += 1;
    }
    ClassDistribution::from_counts(counts)
}

/// Histogram rendered as a TOML document, one table per class.
pub fn histogram_report(ds: &LabeledDataset) -> String {
    #[derive(Serialize)]
    struct Entry<'a> {
        name: &'a str,
        count: usize,
        percentage: f64,
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        total: usize,
        class: Vec<Entry<'a>>,
    }
    let dist = class_histogram(ds);
    let doc = Doc {
        total: dist.total(),
        class: ds
            .class_names()
            .iter()
            .zip(dist.counts.iter().zip(&dist.percentages))
            .map(|(name, (&count, &percentage))| Entry { name, count, percentage })
            .collect(),
    };
    toml::to_string(&doc).expect("histogram serializes")
}

/// Split counts for `n` rows by largest remainder; ties go to the earlier part.
pub fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &part in order.iter().take(n.saturating_sub(assigned)) {
        counts[part] += 1;
    }
    counts
}

/// Train / validation / test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

/// Per-class stratified split. Rows of each class are shuffled with `seed`
/// and cut by largest-remainder counts; each part keeps original row order.
pub fn stratified_split(ds: &LabeledDataset, fractions: [f64; 3], seed: u64) -> Result<Split, DatasetError> {
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidFractions(fractions));
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    for class in 0..ds.num_classes() {
        let mut rows = ds.class_indices(class);
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 3 {
            return Err(DatasetError::ClassTooSmall {
                name: ds.class_names()[class].clone(),
                rows: rows.len(),
                parts: 3,
            });
        }
        rows.shuffle(&mut seeded(seed, class as u64));
        let counts = largest_remainder(rows.len(), &fractions);
        let mut start = 0;
        for (part, count) in parts.iter_mut().zip(counts) {
            part.extend_from_slice(&rows[start..start + count]);
            start += count;
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    let [train, validation, test] = parts;
    Ok(Split {
        train: ds.select(&train),
        validation: ds.select(&validation),
        test: ds.select(&test),
    })
}

/// Target row count per class together with the counts it was planned from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancePlan {
    pub target_per_class: Vec<usize>,
    pub current: Vec<usize>,
}

impl BalancePlan {
    pub fn new(dist: &ClassDistribution, targets: Vec<usize>) -> Result<Self, DatasetError> {
        if targets.len() != dist.counts.len() {
            return Err(DatasetError::PlanSize {
                plan: targets.len(),
                dataset: dist.counts.len(),
            });
        }
        Ok(Self {
            target_per_class: targets,
            current: dist.counts.clone(),
        })
    }

    /// Same target for every class.
    pub fn uniform(dist: &ClassDistribution, target: usize) -> Self {
        Self {
            target_per_class: vec![target; dist.counts.len()],
            current: dist.counts.clone(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.target_per_class.len()
    }

    pub fn deficit(&self, class: usize) -> usize {
        self.target_per_class[class].saturating_sub(self.current[class])
    }

    pub fn surplus(&self, class: usize) -> usize {
        self.current[class].saturating_sub(self.target_per_class[class])
    }

    pub fn deficits(&self) -> Vec<usize> {
        (0..self.num_classes()).map(|c| self.deficit(c)).collect()
    }

    pub fn total_deficit(&self) -> usize {
        self.deficits().iter().sum()
    }

    pub fn total_target(&self) -> usize {
        self.target_per_class.iter().sum()
    }

    pub fn to_toml(&self, class_names: &[String]) -> String {
        #[derive(Serialize)]
        struct Entry<'a> {
            name: &'a str,
            current: usize,
            target: usize,
            deficit: usize,
            surplus: usize,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            total_target: usize,
            class: Vec<Entry<'a>>,
        }
        let doc = Doc {
            total_target: self.total_target(),
            class: (0..self.num_classes())
                .map(|c| Entry {
                    name: class_names.get(c).map(String::as_str).unwrap_or(""),
                    current: self.current[c],
                    target: self.target_per_class[c],
                    deficit: self.deficit(c),
                    surplus: self.surplus(c),
                })
                .collect(),
        };
        toml::to_string(&doc).expect("plan serializes")
    }
}

/// Reduce every class above its target to the target by uniform sampling
/// without replacement. Classes at or below target are untouched.
pub fn downsample_to_plan(ds: &LabeledDataset, plan: &BalancePlan, seed: u64) -> Result<LabeledDataset, DatasetError> {
    if plan.num_classes() != ds.num_classes() {
        return Err(DatasetError::PlanSize {
            plan: plan.num_classes(),
            dataset: ds.num_classes(),
        });
    }
    let mut keep = Vec::with_capacity(ds.len());
    for class in 0..ds.num_classes() {
        let mut rows = ds.class_indices(class);
        let target = plan.target_per_class[class];
        if rows.len() > target {
            let mut rng = seeded(seed, 0x1000 + class as u64);
            rows.shuffle(&mut rng);
            rows.truncate(target);
        }
        keep.extend(rows);
    }
    keep.sort_unstable();
    Ok(ds.select(&keep))
}

/// Row-wise concatenation; synthetic rows keep their provenance flag.
pub fn merge(real: &LabeledDataset, synthetic: &LabeledDataset) -> Result<LabeledDataset, DatasetError> {
    if real.class_names != synthetic.class_names {
        return Err(DatasetError::ClassTableMismatch(real.class_names.clone(), synthetic.class_names.clone()));
    }
    if synthetic.is_empty() {
        return Ok(real.clone());
    }
    if real.width() != synthetic.width() {
        return Err(DatasetError::WidthMismatch {
            expected: real.width(),
            found: synthetic.width(),
        });
    }
    let pbm = ndarray::concatenate(Axis(0), &[real.pbm.view(), synthetic.pbm.view()]).expect("widths checked");
    let mut labels = real.labels.clone();
    labels.extend_from_slice(&synthetic.labels);
    let mut provenance = real.provenance.clone();
    provenance.extend_from_slice(&synthetic.provenance);
    Ok(LabeledDataset {
        pbm,
        labels,
        class_names: real.class_names.clone(),
        provenance,
    })
}

/// Execute a plan: down-sample surplus classes of `real`, append `synthetic`
/// and check that every class now sits exactly at its target.
pub fn apply_plan(real: &LabeledDataset, plan: &BalancePlan, synthetic: &LabeledDataset, seed: u64) -> Result<LabeledDataset, DatasetError> {
    let reduced = downsample_to_plan(real, plan, seed)?;
    let merged = merge(&reduced, synthetic)?;
    let hist = class_histogram(&merged);
    for (c, (&found, &target)) in hist.counts.iter().zip(&plan.target_per_class).enumerate() {
        if found != target {
            return Err(DatasetError::PlanNotMet {
                name: merged.class_names[c].clone(),
                target,
                found,
            });
        }
    }
    Ok(merged)
}

/// One-hot encoder over `dim` classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHot {
    pub dim: usize,
}

impl OneHot {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// Panics if `label >= dim`.
    pub fn encode(&self, label: usize) -> Array1<f64> {
        assert!(label < self.dim, "label {label} out of range for {} classes", self.dim);
        let mut v = Array1::zeros(self.dim);
        v[label] = 1.0;
        v
    }

    pub fn encode_batch(&self, labels: &[usize]) -> Array2<f64> {
        let mut m = Array2::zeros((labels.len(), self.dim));
        for (i, &l) in labels.iter().enumerate() {
            assert!(l < self.dim, "label {l} out of range for {} classes", self.dim);
            m[[i, l]] = 1.0;
        }
        m
    }
}

/// Default class names `class0, class1, …`.
pub fn default_class_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class{i}")).collect()
}

/// Labelled three-or-more-class toy data for desk-scale experiments.
///
/// Class `c` has a byte template near `c·80` (each position offset by a
/// small class-specific pattern in `0..16`), divided by 255, plus Gaussian
/// noise of standard deviation `sigma`, clamped to `[0, 1]`.
pub fn template_dataset(counts: &[usize], data_dim: usize, sigma: f64, seed: u64) -> LabeledDataset {
    let classes = counts.len();
    let total: usize = counts.iter().sum();
    let mut pbm = Array2::zeros((total, data_dim));
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for (c, &count) in counts.iter().enumerate() {
        let template: Vec<f64> = (0..data_dim)
            .map(|j| ((c * 80 + (j * 13 + c * 29) % 16) as f64 / 255.0).min(1.0))
            .collect();
        let mut rng = seeded(seed, c as u64);
        let noise = standard_normal(count, data_dim, &mut rng);
        for i in 0..count {
            for j in 0..data_dim {
                pbm[[row, j]] = (template[j] + sigma * noise[[i, j]]).clamp(0.0, 1.0);
            }
            labels.push(c);
            row += 1;
        }
    }
    LabeledDataset::new(pbm, labels, default_class_names(classes)).expect("template data is valid")
}

/// Keep the first `counts[c]` rows of each class.
pub fn take_per_class(ds: &LabeledDataset, counts: &[usize]) -> LabeledDataset {
    let mut keep = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        keep.extend(ds.class_indices(c).into_iter().take(n));
    }
    keep.sort_unstable();
    ds.select(&keep)
}

/// Draw `n` row indices uniformly with replacement.
pub fn sample_rows<R: rand::Rng + ?Sized>(n: usize, rows: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..rows)).collect()
}

/// Gather a minibatch of rows.
pub fn gather(data: ArrayView2<f64>, indices: &[usize]) -> Array2<f64> {
    data.select(Axis(0), indices)
}
