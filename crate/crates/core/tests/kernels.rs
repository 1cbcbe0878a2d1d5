use krv::kernels::{expand_columns, kernel_eval};
use krv::{design_matrix, KernelSpec, RowMatrix};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::collection::vec;
use proptest::prelude::*;

fn points(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    vec(vec(-3.0f64..3.0, d), 1..12)
}

proptest! {
    #[test]
    fn kernels_are_symmetric(u in vec(-3.0f64..3.0, 3), v in vec(-3.0f64..3.0, 3), w in 0.05f64..4.0, c in 1u32..5) {
        for k in [KernelSpec::gaussian(w).unwrap(), KernelSpec::polynomial(c).unwrap()] {
            prop_assert_eq!(kernel_eval(&k, &u, &v).unwrap(), kernel_eval(&k, &v, &u).unwrap());
        }
    }

    #[test]
    fn gaussian_is_bounded_and_one_on_the_diagonal(u in vec(-3.0f64..3.0, 4), v in vec(-3.0f64..3.0, 4), w in 0.05f64..4.0) {
        let k = KernelSpec::gaussian(w).unwrap();
        let x = kernel_eval(&k, &u, &v).unwrap();
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(kernel_eval(&k, &u, &u).unwrap(), 1.0);
    }

    #[test]
    fn gram_matrices_are_positive_semidefinite(rows in points(3), w in 0.1f64..3.0, c in 1u32..4) {
        let x = RowMatrix::from_rows(&rows).unwrap();
        for k in [KernelSpec::gaussian(w).unwrap(), KernelSpec::polynomial(c).unwrap()] {
            let h = design_matrix(&k, &x, &x).unwrap();
            let g = h.values().columns(1, x.n_rows()).into_owned();
            let scale = g.amax().max(1.0);
            let eig = SymmetricEigen::new(g).eigenvalues;
            prop_assert!(eig.min() >= -1e-9 * scale * x.n_rows() as f64, "{eig}");
        }
    }

    #[test]
    fn design_rows_hold_bias_then_kernels(rows in points(2), w in 0.1f64..3.0) {
        let x = RowMatrix::from_rows(&rows).unwrap();
        let k = KernelSpec::gaussian(w).unwrap();
        let h = design_matrix(&k, &x, &x).unwrap();
        let v: &DMatrix<f64> = h.values();
        prop_assert_eq!(v.shape(), (x.n_rows(), x.n_rows() + 1));
        for i in 0..x.n_rows() {
            prop_assert_eq!(v[(i, 0)], 1.0);
            for j in 0..x.n_rows() {
                prop_assert_eq!(v[(i, j + 1)], k.eval(x.row(i), x.row(j)));
            }
            let cols: Vec<usize> = (0..=x.n_rows()).rev().collect();
            let e = expand_columns(&k, x.row(i), &x, &cols).unwrap();
            for (p, &c) in cols.iter().enumerate() {
                prop_assert_eq!(e[p], v[(i, c)]);
            }
        }
    }
}

#[test]
fn polynomial_matches_closed_form() {
    let k = KernelSpec::polynomial(3).unwrap();
    // (1*2 + -1*0.5 + 1)^3 = 2.5^3
    assert_eq!(kernel_eval(&k, &[1.0, -1.0], &[2.0, 0.5]).unwrap(), 15.625);
}
