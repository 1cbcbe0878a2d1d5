//! Friedman test and Nemenyi critical difference over a learner x dataset
//! accuracy table; writes the diagram to `nemenyi.svg` in the temp dir.

use krv::bench::emit_nemenyi_diagram;
use krv::stats::RankReport;

fn main() -> krv::Result<()> {
    let learners = ["a", "b", "c", "d"].map(String::from).to_vec();
    let acc = vec![
        vec![0.81, 0.84, 0.86, 0.90],
        vec![0.70, 0.69, 0.74, 0.77],
        vec![0.93, 0.95, 0.94, 0.97],
        vec![0.60, 0.66, 0.63, 0.68],
        vec![0.88, 0.87, 0.90, 0.89],
        vec![0.75, 0.80, 0.79, 0.83],
    ];
    let datasets = (1..=acc.len()).map(|i| format!("set{i}")).collect();
    let report = RankReport::new(learners, datasets, acc, 0.05)?;
    print!("{}", report.to_text());
    let out = std::env::temp_dir().join("nemenyi.svg");
    emit_nemenyi_diagram(&report, &out)?;
    println!("diagram: {}", out.display());
    Ok(())
}
