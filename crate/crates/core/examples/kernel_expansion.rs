//! Expands a few points against themselves with both kernel families and
//! prints the design matrix (bias column first).

use krv::kernels::expand_row;
use krv::{design_matrix, KernelSpec, RowMatrix};

fn main() -> krv::Result<()> {
    let x = RowMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])?;
    for spec in [KernelSpec::gaussian(0.8)?, KernelSpec::polynomial(2)?] {
        let h = design_matrix(&spec, &x, &x)?;
        println!("{spec}: {} x {}", h.n_rows(), h.n_basis());
        for row in h.values().row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:8.4}")).collect();
            println!("  {}", cells.join(" "));
        }
        let q = expand_row(&spec, &[0.5, 0.5], &x)?;
        println!("  query (0.5, 0.5) -> {q:.4?}");
    }
    Ok(())
}
