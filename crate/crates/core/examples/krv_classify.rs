//! Trains a k-RV classifier on Iris and reports held-out accuracy and how
//! many relevance vectors it kept.

use krv::data::{rescale, stratified_kfold, Scaling};
use krv::{krv_train, load_csv, CsvOptions, KernelSpec, SblConfig};

fn main() -> krv::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv");
    let data = load_csv(path, &CsvOptions::default())?;
    let plan = stratified_kfold(&data, 5, 1)?;
    let (train, test) = (
        data.subset(&plan.train_indices(0)),
        data.subset(&plan.test_indices(0)),
    );
    let (train, scaler) = rescale(&train, Scaling::UnitRange);
    let test = scaler.apply(&test)?;

    let model = krv_train(
        &train,
        &KernelSpec::gaussian(0.7)?,
        5,
        &SblConfig::with_delta_alpha(0.1),
    )?;
    let correct = (0..test.n_instances())
        .filter(|&i| {
            model
                .predict(test.row(i))
                .map(|c| c == test.label(i))
                .unwrap_or(false)
        })
        .count();
    println!(
        "k-RV kept {} of {} training vectors ({:.1}%), held-out accuracy {:.4}",
        model.rv_count(),
        train.n_instances(),
        100.0 * model.rv_count() as f64 / train.n_instances() as f64,
        correct as f64 / test.n_instances() as f64
    );
    Ok(())
}
