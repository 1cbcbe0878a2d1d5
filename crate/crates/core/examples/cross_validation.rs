//! A small grid-searched cross-validation benchmark run in-process, with the
//! report tables written to the temp dir.

use krv::bench::{emit_tables, run_experiment, ExperimentConfig, LearnerKind};

fn main() -> krv::Result<()> {
    let data = |f: &str| format!("{}/data/{f}", env!("CARGO_MANIFEST_DIR")).into();
    let cfg = ExperimentConfig {
        datasets: vec![data("iris.csv"), data("wine.csv")],
        learners: vec![LearnerKind::Knn, LearnerKind::Kernn, LearnerKind::Krv],
        k_grid: vec![1, 3, 5, 7],
        width_grid: vec![0.5, 1.0],
        delta_grid: vec![0.1],
        runs: 1,
        folds: 5,
        output_dir: std::env::temp_dir().join("krv-cv-report"),
        ..Default::default()
    };
    let report = run_experiment(&cfg)?;
    for r in &report.results {
        println!(
            "{:>5} {:>6}: {:.4} ± {:.4}  [{}]",
            r.dataset, r.learner, r.mean_accuracy, r.std_accuracy, r.best
        );
    }
    let files = emit_tables(&report, &cfg.output_dir)?;
    println!(
        "{} report files in {}",
        files.len(),
        cfg.output_dir.display()
    );
    Ok(())
}
