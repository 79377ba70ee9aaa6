//! Baseline augmenters that fill a [`BalancePlan`]'s deficits without any
//! training: random oversampling (exact copies) and SMOTE (interpolation
//! towards same-class nearest neighbours).
//!
//! Each class draws from its own RNG stream, and output rows are ordered by
//! class then generation index, so results only depend on the seed.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{BalancePlan, DatasetError, LabeledDataset};
use crate::rng::seeded;

#[derive(Debug, thiserror::Error)]
pub enum ResampleError {
    #[error("k = {k} must be at least 1 and below the point count {points}")]
    InvalidK { k: usize, points: usize },
    #[error("query index {query} out of range for {points} points")]
    QueryOutOfRange { query: usize, points: usize },
    #[error("class {name:?} has {rows} rows; SMOTE with k = {k} needs more than k")]
    ClassTooSmall { name: String, rows: usize, k: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoteConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self { k: 5, seed: 0 }
    }
}

fn check_plan(ds: &LabeledDataset, plan: &BalancePlan) -> Result<(), DatasetError> {
    if plan.num_classes() != ds.num_classes() {
        return Err(DatasetError::PlanSize {
            plan: plan.num_classes(),
            dataset: ds.num_classes(),
        });
    }
    Ok(())
}

fn stream(class: usize) -> u64 {
    0x2000 + class as u64
}

/// Random oversampling: for each deficient class emit `deficit` exact copies
/// of uniformly chosen rows of that class. Returns synthetic rows only.
pub fn ros_oversample(ds: &LabeledDataset, plan: &BalancePlan, seed: u64) -> Result<LabeledDataset, ResampleError> {
    check_plan(ds, plan)?;
    let mut picks = Vec::with_capacity(plan.total_deficit());
    for class in 0..ds.num_classes() {
        let deficit = plan.deficit(class);
        if deficit == 0 {
            continue;
        }
        let rows = ds.class_indices(class);
        if rows.is_empty() {
            return Err(DatasetError::EmptyClass {
                name: ds.class_names()[class].clone(),
                deficit,
            }
            .into());
        }
        let mut rng = seeded(seed, stream(class));
        picks.extend((0..deficit).map(|_| rows[rng.random_range(0..rows.len())]));
    }
    Ok(ds.select(&picks).into_synthetic())
}

fn squared_distance(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact k nearest neighbours of row `query` among the rows of `points`
/// (Euclidean), excluding the query itself. Ties go to the lower index.
pub fn knn(points: ArrayView2<f64>, query: usize, k: usize) -> Result<Vec<usize>, ResampleError> {
    let m = points.nrows();
    if query >= m {
        return Err(ResampleError::QueryOutOfRange { query, points: m });
    }
    if k == 0 || k >= m {
        return Err(ResampleError::InvalidK { k, points: m });
    }
    let q = points.row(query);
    let mut dist: Vec<(f64, usize)> = points
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| *i != query)
        .map(|(i, row)| (squared_distance(q, row), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    dist.select_nth_unstable_by(k - 1, cmp);
    let mut nearest = dist[..k].to_vec();
    nearest.sort_by(cmp);
    Ok(nearest.into_iter().map(|(_, i)| i).collect())
}

/// SMOTE synthetic rows: `x + u·(x_nn − x)` with `x` drawn uniformly (with
/// replacement) from the class, `x_nn` one of its `k` nearest same-class
/// neighbours and `u ~ U[0, 1)`. Returns synthetic rows only.
pub fn smote(ds: &LabeledDataset, plan: &BalancePlan, config: &SmoteConfig) -> Result<LabeledDataset, ResampleError> {
    check_plan(ds, plan)?;
    let width = ds.width();
    let mut rows = Vec::with_capacity(plan.total_deficit() * width);
    let mut labels = Vec::with_capacity(plan.total_deficit());
    for class in 0..ds.num_classes() {
        let deficit = plan.deficit(class);
        if deficit == 0 {
            continue;
        }
        let members = ds.class_rows(class);
        if members.nrows() <= config.k || config.k == 0 {
            return Err(ResampleError::ClassTooSmall {
                name: ds.class_names()[class].clone(),
                rows: members.nrows(),
                k: config.k,
            });
        }
        let mut neighbours: Vec<Option<Vec<usize>>> = vec![None; members.nrows()];
        let mut rng = seeded(config.seed, stream(class));
        for _ in 0..deficit {
            let base = rng.random_range(0..members.nrows());
            let nn = match &neighbours[base] {
                Some(nn) => nn,
                None => neighbours[base].insert(knn(members.view(), base, config.k)?),
            };
            let other = nn[rng.random_range(0..nn.len())];
            let u: f64 = rng.random();
            let x = members.row(base);
            let y = members.row(other);
            rows.extend(x.iter().zip(y.iter()).map(|(&a, &b)| (a + u * (b - a)).clamp(0.0, 1.0)));
            labels.push(class);
        }
    }
    let n = labels.len();
    let pbm = Array2::from_shape_vec((n, width), rows).expect("row width fixed");
    Ok(LabeledDataset::new(pbm, labels, ds.class_names().to_vec())?.into_synthetic())
}
