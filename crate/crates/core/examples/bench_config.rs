//! Loads a TOML benchmark config (default `configs/small.toml`) and prints
//! the grid sizes it implies, without running anything.

use krv::bench::{ExperimentConfig, LearnerKind};

fn main() -> krv::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/small.toml").into());
    let cfg = ExperimentConfig::load(&path)?;
    cfg.validate()?;
    println!(
        "{path}: {} datasets, {} runs x {} folds",
        cfg.datasets.len(),
        cfg.runs,
        cfg.folds
    );
    for l in LearnerKind::ALL
        .into_iter()
        .filter(|l| cfg.learners.contains(l))
    {
        println!("  {l:>9}: {} grid cells", cfg.grid_size(l));
    }
    Ok(())
}
