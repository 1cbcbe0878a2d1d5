//! Kernel-space nearest neighbours with relevance-vector attribute
//! weighting (k-RV), plus the baselines and statistics used to compare it.
//!
//! The pipeline: expand each row into kernel space against the training
//! rows, fit a sparse Bayesian model over that expansion, keep the
//! surviving columns (the relevance vectors) and their weights, then run a
//! weighted k-nearest-neighbour vote in the reduced space.

// `!(x > 0.0)` is the NaN-rejecting form used for every positivity check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod data;
pub mod error;
pub mod kernels;
pub mod model;
pub mod neighbors;
pub mod sbl;
pub mod stats;

pub use data::{load_csv, CsvOptions, Dataset, LabelColumn, RowMatrix, Scaling, Standardizer};
pub use error::{KrvError, Result};
pub use kernels::{design_matrix, KernelSpec};
pub use model::Classifier;
pub use neighbors::{krv_predict, krv_train, KernnModel, KrvModel};
pub use sbl::{Likelihood, SblConfig, SblEnsemble, SblModel};
