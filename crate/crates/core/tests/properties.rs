use std::collections::HashSet;

use ndarray::Array2;
use pbvgan::classify::{f1_score, ConfusionMatrix, MetricsReport};
use pbvgan::dataset::{
    apply_plan, class_histogram, default_class_names, largest_remainder, stratified_split, BalancePlan, LabeledDataset,
    DEFAULT_SPLIT,
};
use pbvgan::preprocess::{denormalize, fix_length, normalize, read_csv, write_matrix_csv};
use pbvgan::resample::{knn, ros_oversample, smote, SmoteConfig};
use proptest::collection::vec;
use proptest::prelude::*;

fn dataset(values: Vec<f64>, labels: Vec<usize>, width: usize, classes: usize) -> LabeledDataset {
    let pbm = Array2::from_shape_vec((labels.len(), width), values).unwrap();
    LabeledDataset::new(pbm, labels, default_class_names(classes)).unwrap()
}

/// Rows `counts[c]` per class, values from the strategy, width `width`.
fn labelled(counts: Vec<usize>, width: usize) -> impl Strategy<Value = LabeledDataset> {
    let total: usize = counts.iter().sum();
    let classes = counts.len();
    vec(0.0f64..=1.0, total * width).prop_map(move |values| {
        let labels = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        dataset(values, labels, width, classes)
    })
}

fn row_key(row: ndarray::ArrayView1<f64>) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #[test]
    fn fix_length_and_normalize(bytes in vec(any::<u8>(), 0..3000), len in 1usize..2000) {
        let fixed = fix_length(&bytes, len);
        prop_assert_eq!(fixed.len(), len);
        let keep = bytes.len().min(len);
        prop_assert_eq!(&fixed[..keep], &bytes[..keep]);
        prop_assert!(fixed[keep..].iter().all(|&b| b == 0));
        let pbv = normalize(&fixed);
        prop_assert!(pbv.values().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(denormalize(pbv.values()), fixed);
    }

    #[test]
    fn csv_round_trip(rows in 0usize..20, width in 1usize..40, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = pbvgan::rng::seeded(seed, 0);
        let pbm = Array2::from_shape_simple_fn((rows, width), || rng.random::<f64>());
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..1000)).collect();
        let mut buf = Vec::new();
        write_matrix_csv(&pbm, &labels, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.labels, labels);
        if rows > 0 {
            prop_assert_eq!(back.pbm, pbm);
        }
    }

    #[test]
    fn largest_remainder_sums(n in 0usize..100_000, a in 1u32..100, b in 1u32..100, c in 1u32..100) {
        let total = f64::from(a + b + c);
        let parts = largest_remainder(n, &[f64::from(a) / total, f64::from(b) / total, f64::from(c) / total]);
        prop_assert_eq!(parts.iter().sum::<usize>(), n);
    }

    #[test]
    fn split_partitions_each_class(
        ds in (3usize..40, 3usize..40, 3usize..40).prop_flat_map(|(a, b, c)| labelled(vec![a, b, c], 2)),
        seed in any::<u64>(),
    ) {
        let split = stratified_split(&ds, DEFAULT_SPLIT, seed).unwrap();
        let h = class_histogram(&ds).counts;
        for c in 0..3 {
            let parts = [&split.train, &split.validation, &split.test].map(|p| class_histogram(p).counts[c]);
            prop_assert_eq!(parts.iter().sum::<usize>(), h[c]);
            prop_assert_eq!(parts.to_vec(), largest_remainder(h[c], &DEFAULT_SPLIT));
        }
        prop_assert_eq!(split.train.len() + split.validation.len() + split.test.len(), ds.len());
        prop_assert_eq!(stratified_split(&ds, DEFAULT_SPLIT, seed).unwrap(), split);
    }

    #[test]
    fn ros_rows_come_from_their_class(
        ds in (1usize..30, 1usize..30).prop_flat_map(|(a, b)| labelled(vec![a, b], 3)),
        target in 0usize..80,
        seed in any::<u64>(),
    ) {
        let plan = BalancePlan::uniform(&class_histogram(&ds), target);
        let out = ros_oversample(&ds, &plan, seed).unwrap();
        prop_assert_eq!(class_histogram(&out).counts, plan.deficits());
        for (row, &label) in out.pbm().rows().into_iter().zip(out.labels()) {
            let members: HashSet<Vec<u64>> = ds.class_rows(label).rows().into_iter().map(row_key).collect();
            prop_assert!(members.contains(&row_key(row)));
        }
        let merged = apply_plan(&ds, &plan, &out, seed).unwrap();
        prop_assert_eq!(class_histogram(&merged).counts, plan.target_per_class.clone());
    }

    #[test]
    fn smote_stays_inside_class_bounds(
        ds in (6usize..30, 6usize..30).prop_flat_map(|(a, b)| labelled(vec![a, b], 4)),
        target in 0usize..60,
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let plan = BalancePlan::uniform(&class_histogram(&ds), target);
        let out = smote(&ds, &plan, &SmoteConfig { k, seed }).unwrap();
        prop_assert_eq!(class_histogram(&out).counts, plan.deficits());
        for (row, &label) in out.pbm().rows().into_iter().zip(out.labels()) {
            let members = ds.class_rows(label);
            for (j, &v) in row.iter().enumerate() {
                let col = members.column(j);
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
        prop_assert_eq!(smote(&ds, &plan, &SmoteConfig { k, seed }).unwrap(), out);
    }

    #[test]
    fn knn_matches_exhaustive_sort(points in vec(-5.0f64..5.0, 6..120), k in 1usize..5, q in 0usize..60) {
        let m = points.len() / 2;
        prop_assume!(k < m);
        let pts = Array2::from_shape_vec((m, 2), points[..2 * m].to_vec()).unwrap();
        let q = q % m;
        let mut all: Vec<(f64, usize)> = (0..m)
            .filter(|&i| i != q)
            .map(|i| {
                let d: f64 = (0..2).map(|j| (pts[[i, j]] - pts[[q, j]]).powi(2)).sum();
                (d, i)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expected: Vec<usize> = all[..k].iter().map(|p| p.1).collect();
        prop_assert_eq!(knn(pts.view(), q, k).unwrap(), expected);
    }

    #[test]
    fn metrics_match_a_brute_force_tally(
        pairs in vec((0usize..4, 0usize..4), 1..200),
    ) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let cm = ConfusionMatrix::from_predictions(&truth, &pred, 4);
        let r = MetricsReport::from_confusion(&cm, &default_class_names(4));
        prop_assert_eq!(cm.total() as usize, pairs.len());
        for c in 0..4 {
            let tp = pairs.iter().filter(|p| p.0 == c && p.1 == c).count() as f64;
            let predicted = pairs.iter().filter(|p| p.1 == c).count() as f64;
            let actual = pairs.iter().filter(|p| p.0 == c).count() as f64;
            prop_assert_eq!(cm.row_sums()[c] as f64, actual);
            let m = &r.per_class[c];
            let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let rc = if actual > 0.0 { tp / actual } else { 0.0 };
            prop_assert!((m.precision - p).abs() < 1e-12);
            prop_assert!((m.recall - rc).abs() < 1e-12);
            if p + rc > 0.0 {
                prop_assert!((m.f1 - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
            }
            prop_assert!((m.f1 - f1_score(m.precision, m.recall)).abs() < 1e-12);
        }
        let correct = pairs.iter().filter(|p| p.0 == p.1).count() as f64;
        prop_assert_eq!(r.accuracy, correct / pairs.len() as f64);
        prop_assert!([r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1].iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
