//! Sparse Bayesian learning on a two-cluster problem: how many basis
//! functions survive each early-stopping threshold, read off one trajectory.

use krv::sbl::train_path;
use krv::{design_matrix, KernelSpec, Likelihood, RowMatrix, SblConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> krv::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for i in 0..60 {
        let c = (i % 2) as f64;
        rows.push([
            c * 2.0 + rng.gen_range(-0.8..0.8),
            c * 2.0 + rng.gen_range(-0.8..0.8),
        ]);
        targets.push(c);
    }
    let x = RowMatrix::from_rows(&rows)?;
    let h = design_matrix(&KernelSpec::gaussian(0.7)?, &x, &x)?;
    let thresholds = [10.0, 1.0, 0.1, 1e-3];
    let path = train_path(
        h.values(),
        &targets,
        Likelihood::Bernoulli,
        &SblConfig::default(),
        &thresholds,
    )?;
    println!(
        "{} candidate basis functions (bias + {} kernels)",
        h.n_basis(),
        x.n_rows()
    );
    for (t, m) in thresholds.iter().zip(&path) {
        let correct = (0..x.n_rows())
            .filter(|&i| {
                let phi: Vec<f64> = h.values().row(i).iter().copied().collect();
                m.predict_full(&phi)
                    .map(|o| (o.score() >= 0.5) == (targets[i] == 1.0))
                    .unwrap_or(false)
            })
            .count();
        println!(
            "delta_alpha {t:>6}: {:>2} active after {:>3} iterations, train accuracy {:.3}",
            m.n_active(),
            m.history.len(),
            correct as f64 / x.n_rows() as f64
        );
    }
    Ok(())
}
