//! Trains an RVM, saves it, reloads it and checks the scores agree.

use krv::{load_csv, Classifier, CsvOptions, KernelSpec, Likelihood, SblConfig, Scaling};

fn main() -> krv::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.csv");
    let data = load_csv(path, &CsvOptions::default())?;
    let model = Classifier::train_rvm(
        &data,
        &KernelSpec::gaussian(0.5)?,
        Likelihood::Bernoulli,
        Scaling::UnitRange,
        &SblConfig::default(),
    )?;
    let file = std::env::temp_dir().join("iris-rvm.krv");
    model.save(&file)?;
    let back = Classifier::load(&file)?;
    let mut worst = 0.0f64;
    for i in 0..data.n_instances() {
        let (a, b) = (model.scores(data.row(i))?, back.scores(data.row(i))?);
        worst = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(worst, f64::max);
    }
    println!(
        "saved {} bytes; largest score difference after reload: {worst:e}",
        std::fs::metadata(&file).map(|m| m.len()).unwrap_or(0)
    );
    Ok(())
}
