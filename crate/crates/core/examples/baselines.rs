//! The nearest-neighbour baselines (k-NN, w-NN, ker-NN) on one Wine split.

use krv::data::{rescale, stratified_kfold, Scaling};
use krv::neighbors::{inverse_variance_weights, knn_predict, wnn_predict};
use krv::{load_csv, CsvOptions, KernelSpec, KernnModel};

fn main() -> krv::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/wine.csv");
    let data = load_csv(path, &CsvOptions::default())?;
    let plan = stratified_kfold(&data, 10, 3)?;
    let (train, test) = (
        data.subset(&plan.train_indices(0)),
        data.subset(&plan.test_indices(0)),
    );
    let weights = inverse_variance_weights(train.instances());
    let (std_train, scaler) = rescale(&train, Scaling::UnitRange);
    let std_test = scaler.apply(&test)?;
    let kernn = KernnModel::fit(&std_train, &KernelSpec::gaussian(0.6)?)?;

    let k = 5;
    let mut hits = [0usize; 3];
    for i in 0..test.n_instances() {
        let y = test.label(i);
        hits[0] += usize::from(knn_predict(&train, test.row(i), k)? == y);
        hits[1] += usize::from(wnn_predict(&train, test.row(i), &weights, k)? == y);
        hits[2] += usize::from(kernn.predict(std_test.row(i), k)? == y);
    }
    for (name, h) in ["k-NN", "w-NN", "ker-NN"].iter().zip(hits) {
        println!("{name:>6}: {:.4}", h as f64 / test.n_instances() as f64);
    }
    Ok(())
}
