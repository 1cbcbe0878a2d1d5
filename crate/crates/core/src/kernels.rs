//! Kernel functions and the design matrix used for feature expansion.
//!
//! Instances are rows; column 0 of a design matrix is the bias basis (all
//! ones) and column `j + 1` holds the kernel against anchor `j`.

use std::fmt;

use nalgebra::DMatrix;

use crate::data::RowMatrix;
use crate::error::{KrvError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `exp(-|u - v|^2 / (2 width^2))`
    Gaussian { width: f64 },
    /// `(u . v + 1)^order`
    Polynomial { order: u32 },
}

impl KernelSpec {
    pub fn gaussian(width: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { width };
        k.validate()?;
        Ok(k)
    }

    pub fn polynomial(order: u32) -> Result<Self> {
        let k = KernelSpec::Polynomial { order };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { width } if !(width > 0.0 && width.is_finite()) => Err(
                KrvError::invalid(format!("gaussian width must be positive, got {width}")),
            ),
            KernelSpec::Polynomial { order: 0 } => {
                Err(KrvError::invalid("polynomial order must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    /// Kernel value without the length check; callers guarantee equal
    /// dimensions.
    #[inline]
    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), v.len());
        match *self {
            KernelSpec::Gaussian { width } => {
                let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
            KernelSpec::Polynomial { order } => {
                let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                (dot + 1.0).powi(order as i32)
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { width } => write!(f, "gaussian(width={width})"),
            KernelSpec::Polynomial { order } => write!(f, "polynomial(order={order})"),
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(KrvError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(spec.eval(u, v))
}

/// Kernel expansion of a set of rows against a set of anchors.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    anchors: RowMatrix,
    spec: KernelSpec,
}

impl DesignMatrix {
    /// N x (M + 1) matrix, column 0 being the bias.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn anchors(&self) -> &RowMatrix {
        &self.anchors
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.values.ncols()
    }

    pub fn has_bias(&self) -> bool {
        true
    }

    pub fn select_columns(&self, columns: &[usize]) -> DMatrix<f64> {
        self.values.select_columns(columns)
    }
}

fn check_dims(spec: &KernelSpec, rows: &RowMatrix, anchors: &RowMatrix) -> Result<()> {
    spec.validate()?;
    if anchors.n_rows() == 0 {
        return Err(KrvError::invalid("design matrix needs at least one anchor"));
    }
    if rows.n_cols() != anchors.n_cols() {
        return Err(KrvError::DimensionMismatch {
            expected: anchors.n_cols(),
            found: rows.n_cols(),
        });
    }
    Ok(())
}

pub fn design_matrix(
    spec: &KernelSpec,
    rows: &RowMatrix,
    anchors: &RowMatrix,
) -> Result<DesignMatrix> {
    check_dims(spec, rows, anchors)?;
    let n = rows.n_rows();
    let m = anchors.n_rows();
    let mut values = DMatrix::from_element(n, m + 1, 1.0);
    for j in 0..m {
        let a = anchors.row(j);
        let mut col = values.column_mut(j + 1);
        for i in 0..n {
            col[i] = spec.eval(rows.row(i), a);
        }
    }
    Ok(DesignMatrix {
        values,
        anchors: anchors.clone(),
        spec: *spec,
    })
}

/// Expands a single query against `anchors`, returning only the requested
/// basis columns (0 is the bias). Equals the corresponding entries of the
/// full design-matrix row.
pub fn expand_columns(
    spec: &KernelSpec,
    z: &[f64],
    anchors: &RowMatrix,
    columns: &[usize],
) -> Result<Vec<f64>> {
    if z.len() != anchors.n_cols() {
        return Err(KrvError::DimensionMismatch {
            expected: anchors.n_cols(),
            found: z.len(),
        });
    }
    columns
        .iter()
        .map(|&c| match c {
            0 => Ok(1.0),
            c if c <= anchors.n_rows() => Ok(spec.eval(z, anchors.row(c - 1))),
            c => Err(KrvError::invalid(format!(
                "basis column {c} out of range 0..={}",
                anchors.n_rows()
            ))),
        })
        .collect()
}

/// Full expanded row of one query (bias plus every anchor).
pub fn expand_row(spec: &KernelSpec, z: &[f64], anchors: &RowMatrix) -> Result<Vec<f64>> {
    if z.len() != anchors.n_cols() {
        return Err(KrvError::DimensionMismatch {
            expected: anchors.n_cols(),
            found: z.len(),
        });
    }
    let mut out = Vec::with_capacity(anchors.n_rows() + 1);
    out.push(1.0);
    out.extend(anchors.rows().map(|a| spec.eval(z, a)));
    Ok(out)
}
