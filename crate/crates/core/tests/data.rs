mod common;

use common::*;
use krv::data::{rescale, stratified_kfold, Scaling, Standardizer};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fold_scaling_ignores_test_rows(seed in 0u64..1_000_000, n in 20usize..60, d in 1usize..5) {
        let mut r = rng(seed);
        let data = random_dataset(&mut r, n, d, 2);
        let plan = stratified_kfold(&data, 5, seed).unwrap();
        let train = data.subset(&plan.train_indices(0));
        let test_idx = plan.test_indices(0);
        // corrupt every held-out row; statistics fitted on the training fold must not move
        let mut rows: Vec<Vec<f64>> = (0..n).map(|i| data.row(i).to_vec()).collect();
        for &i in &test_idx {
            rows[i].iter_mut().for_each(|v| *v = 1e6);
        }
        let poisoned = krv::Dataset::from_rows("p", &rows, data.labels().to_vec()).unwrap();
        for scaling in [Scaling::ZScore, Scaling::UnitRange] {
            let (_, clean) = rescale(&train, scaling);
            let (_, other) = rescale(&poisoned.subset(&plan.train_indices(0)), scaling);
            prop_assert_eq!(&clean, &other);
            prop_assert_eq!(&clean, &Standardizer::fit_with(train.instances(), scaling));
        }
    }

    #[test]
    fn unit_range_keeps_training_rows_in_the_unit_box(seed in 0u64..1_000_000, n in 2usize..40, d in 1usize..5) {
        let mut r = rng(seed);
        let data = random_dataset(&mut r, n, d, 2);
        let (s, _) = rescale(&data, Scaling::UnitRange);
        for i in 0..s.n_instances() {
            prop_assert!(s.row(i).iter().all(|v| (0.0..=1.0).contains(v)));
        }
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| s.row(i)[j]).collect();
            let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            // a constant column maps to 0; otherwise the extremes land on 0 and 1
            prop_assert!((lo, hi) == (0.0, 0.0) || (lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12));
        }
    }
}
