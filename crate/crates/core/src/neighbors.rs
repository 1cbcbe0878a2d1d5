//! Nearest-neighbour rules: plain k-NN, attribute-weighted w-NN, k-NN in
//! kernel feature space (ker-NN) and the relevance-weighted k-RV rule.
//!
//! All four rank training rows by distance (ties by training index) and take
//! a majority vote over the first `k`. A vote tie goes to the class of the
//! single nearest neighbour when that class is among the tied ones, and to
//! the lowest tied class id otherwise.

use crate::data::{Dataset, RowMatrix};
use crate::error::{KrvError, Result};
use crate::kernels::{design_matrix, expand_columns, expand_row, DesignMatrix, KernelSpec};
use crate::sbl::{train_ensemble, Likelihood, SblConfig, SblEnsemble};

/// Training indices sorted by ascending distance, ties by index.
pub fn neighbor_order(distances: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..distances.len()).collect();
    idx.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    idx
}

fn decide(counts: &[usize], nearest_class: usize) -> usize {
    let max = counts.iter().copied().max().unwrap_or(0);
    if counts[nearest_class] == max {
        nearest_class
    } else {
        counts.iter().position(|&c| c == max).expect("non-empty")
    }
}

/// Majority vote over the first `k` entries of `order`.
pub fn majority_vote(order: &[usize], labels: &[usize], n_classes: usize, k: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &i in order.iter().take(k) {
        counts[labels[i]] += 1;
    }
    decide(&counts, labels[order[0]])
}

/// Votes for several neighbour counts from one ordering. `ks` may be in any
/// order; each must lie in `1..=order.len()`.
pub fn votes_for_ks(
    order: &[usize],
    labels: &[usize],
    n_classes: usize,
    ks: &[usize],
) -> Vec<usize> {
    let mut sorted: Vec<(usize, usize)> = ks
        .iter()
        .copied()
        .enumerate()
        .map(|(p, k)| (k, p))
        .collect();
    sorted.sort_unstable();
    let mut out = vec![0; ks.len()];
    let mut counts = vec![0usize; n_classes];
    let nearest = labels[order[0]];
    let mut taken = 0;
    for (k, pos) in sorted {
        while taken < k {
            counts[labels[order[taken]]] += 1;
            taken += 1;
        }
        out[pos] = decide(&counts, nearest);
    }
    out
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(KrvError::invalid(format!("k must lie in 1..={n}, got {k}")));
    }
    Ok(())
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(KrvError::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn weighted_euclidean(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distances from `z` to every row of `rows`.
pub fn distances(rows: &RowMatrix, z: &[f64]) -> Vec<f64> {
    rows.rows().map(|r| euclidean(r, z)).collect()
}

/// Weighted distances `sqrt(sum w_i (x_i - z_i)^2)` to every row.
pub fn weighted_distances(rows: &RowMatrix, z: &[f64], weights: &[f64]) -> Vec<f64> {
    rows.rows()
        .map(|r| weighted_euclidean(r, z, weights))
        .collect()
}

pub fn knn_predict(train: &Dataset, z: &[f64], k: usize) -> Result<usize> {
    check_k(k, train.n_instances())?;
    check_dim(train.dim(), z.len())?;
    let order = neighbor_order(&distances(train.instances(), z));
    Ok(majority_vote(&order, train.labels(), train.n_classes(), k))
}

pub fn check_attribute_weights(weights: &[f64], dim: usize) -> Result<()> {
    check_dim(dim, weights.len())?;
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(KrvError::invalid(
            "attribute weights must be finite and non-negative",
        ));
    }
    Ok(())
}

pub fn wnn_predict(train: &Dataset, z: &[f64], weights: &[f64], k: usize) -> Result<usize> {
    check_k(k, train.n_instances())?;
    check_dim(train.dim(), z.len())?;
    check_attribute_weights(weights, train.dim())?;
    let order = neighbor_order(&weighted_distances(train.instances(), z, weights));
    Ok(majority_vote(&order, train.labels(), train.n_classes(), k))
}

/// Inverse-variance attribute weights; constant attributes get weight 0.
pub fn inverse_variance_weights(rows: &RowMatrix) -> Vec<f64> {
    let st = crate::data::Standardizer::fit(rows);
    st.stds
        .iter()
        .map(|&s| if s == 0.0 { 0.0 } else { 1.0 / (s * s) })
        .collect()
}

/// k-NN over kernel-expanded features (bias plus one kernel per training
/// instance), with the training rows expanded once.
#[derive(Debug, Clone)]
pub struct KernnModel {
    spec: KernelSpec,
    anchors: RowMatrix,
    features: RowMatrix,
    labels: Vec<usize>,
    n_classes: usize,
}

impl KernnModel {
    pub fn fit(train: &Dataset, spec: &KernelSpec) -> Result<Self> {
        let h = design_matrix(spec, train.instances(), train.instances())?;
        Ok(Self::from_design(
            &h,
            train.labels().to_vec(),
            train.n_classes(),
        ))
    }

    pub fn from_design(h: &DesignMatrix, labels: Vec<usize>, n_classes: usize) -> Self {
        let v = h.values();
        let mut data = Vec::with_capacity(v.len());
        for i in 0..v.nrows() {
            data.extend(v.row(i).iter());
        }
        KernnModel {
            spec: h.spec(),
            anchors: h.anchors().clone(),
            features: RowMatrix::new(data, v.nrows(), v.ncols()).expect("shape"),
            labels,
            n_classes,
        }
    }

    pub fn n_train(&self) -> usize {
        self.labels.len()
    }

    pub fn neighbor_order(&self, z: &[f64]) -> Result<Vec<usize>> {
        let phi = expand_row(&self.spec, z, &self.anchors)?;
        Ok(neighbor_order(&distances(&self.features, &phi)))
    }

    pub fn predict(&self, z: &[f64], k: usize) -> Result<usize> {
        check_k(k, self.n_train())?;
        let order = self.neighbor_order(z)?;
        Ok(majority_vote(&order, &self.labels, self.n_classes, k))
    }

    pub fn predict_for_ks(&self, z: &[f64], ks: &[usize]) -> Result<Vec<usize>> {
        for &k in ks {
            check_k(k, self.n_train())?;
        }
        let order = self.neighbor_order(z)?;
        Ok(votes_for_ks(&order, &self.labels, self.n_classes, ks))
    }
}

pub fn kernn_predict(train: &Dataset, z: &[f64], spec: &KernelSpec, k: usize) -> Result<usize> {
    check_k(k, train.n_instances())?;
    check_dim(train.dim(), z.len())?;
    KernnModel::fit(train, spec)?.predict(z, k)
}

/// The k-RV classifier: training rows in the sparsified kernel feature
/// space, compared under the relevance-weighted distance
/// `sqrt(sum |w_i| (h_i - z_i)^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrvModel {
    pub kernel: KernelSpec,
    pub anchors: RowMatrix,
    /// Retained design-matrix columns (0 is the bias), ascending.
    pub retained_dims: Vec<usize>,
    /// Signed sparse weights aligned with `retained_dims`.
    pub sparse_weights: Vec<f64>,
    /// Training rows restricted to `retained_dims`.
    pub train_features: RowMatrix,
    pub train_labels: Vec<usize>,
    pub n_classes: usize,
    pub k: usize,
}

impl KrvModel {
    /// Builds the model from a trained ensemble over `h`. With one-vs-rest
    /// members the retained set is the union of their active columns and
    /// each column keeps the weight of largest magnitude.
    pub fn from_ensemble(
        h: &DesignMatrix,
        ensemble: &SblEnsemble,
        labels: Vec<usize>,
        k: usize,
    ) -> Result<Self> {
        let dims = ensemble.active_union();
        let mut weights = vec![0.0f64; dims.len()];
        for (_, model) in &ensemble.models {
            for (&c, &w) in model.active.iter().zip(model.weights.iter()) {
                let slot = dims.binary_search(&c).expect("in union");
                if w.abs() > weights[slot].abs() {
                    weights[slot] = w;
                }
            }
        }
        Self::from_weights(h, labels, ensemble.n_classes, dims, weights, k)
    }

    /// Builds the model from explicit retained columns and weights.
    pub fn from_weights(
        h: &DesignMatrix,
        labels: Vec<usize>,
        n_classes: usize,
        retained_dims: Vec<usize>,
        sparse_weights: Vec<f64>,
        k: usize,
    ) -> Result<Self> {
        check_k(k, labels.len())?;
        check_dim(h.n_rows(), labels.len())?;
        check_dim(retained_dims.len(), sparse_weights.len())?;
        if retained_dims.is_empty() {
            return Err(KrvError::invalid(
                "k-RV model needs at least one retained dimension",
            ));
        }
        if let Some(&c) = retained_dims.iter().find(|&&c| c >= h.n_basis()) {
            return Err(KrvError::invalid(format!(
                "retained column {c} out of range"
            )));
        }
        let v = h.values();
        let mut data = Vec::with_capacity(v.nrows() * retained_dims.len());
        for i in 0..v.nrows() {
            data.extend(retained_dims.iter().map(|&c| v[(i, c)]));
        }
        Ok(KrvModel {
            kernel: h.spec(),
            anchors: h.anchors().clone(),
            train_features: RowMatrix::new(data, v.nrows(), retained_dims.len())?,
            retained_dims,
            sparse_weights,
            train_labels: labels,
            n_classes,
            k,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_labels.len()
    }

    /// Query expanded against the anchors and restricted to the retained
    /// columns.
    pub fn sparsify(&self, z: &[f64]) -> Result<Vec<f64>> {
        expand_columns(&self.kernel, z, &self.anchors, &self.retained_dims)
    }

    pub fn distances(&self, z: &[f64]) -> Result<Vec<f64>> {
        let zs = self.sparsify(z)?;
        let w: Vec<f64> = self.sparse_weights.iter().map(|w| w.abs()).collect();
        Ok(weighted_distances(&self.train_features, &zs, &w))
    }

    pub fn neighbor_order(&self, z: &[f64]) -> Result<Vec<usize>> {
        Ok(neighbor_order(&self.distances(z)?))
    }

    pub fn predict(&self, z: &[f64]) -> Result<usize> {
        let order = self.neighbor_order(z)?;
        Ok(majority_vote(
            &order,
            &self.train_labels,
            self.n_classes,
            self.k,
        ))
    }

    pub fn predict_for_ks(&self, z: &[f64], ks: &[usize]) -> Result<Vec<usize>> {
        for &k in ks {
            check_k(k, self.n_train())?;
        }
        let order = self.neighbor_order(z)?;
        Ok(votes_for_ks(&order, &self.train_labels, self.n_classes, ks))
    }

    /// Retained kernel dimensions, excluding the bias column.
    pub fn rv_count(&self) -> usize {
        self.retained_dims.iter().filter(|&&c| c != 0).count()
    }
}

pub fn krv_train(
    train: &Dataset,
    spec: &KernelSpec,
    k: usize,
    cfg: &SblConfig,
) -> Result<KrvModel> {
    check_k(k, train.n_instances())?;
    let h = design_matrix(spec, train.instances(), train.instances())?;
    let ensemble = train_ensemble(
        h.values(),
        train.labels(),
        train.n_classes(),
        Likelihood::Bernoulli,
        cfg,
    )?;
    KrvModel::from_ensemble(&h, &ensemble, train.labels().to_vec(), k)
}

pub fn krv_predict(model: &KrvModel, z: &[f64]) -> Result<usize> {
    model.predict(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        // A = 0, B = 1
        Dataset::from_rows("toy", &[[0.0, 1.0], [0.0, 2.0], [5.0, 5.0]], vec![0, 1, 1]).unwrap()
    }

    #[test]
    fn knn_examples() {
        let d = toy();
        assert_eq!(knn_predict(&d, &[0.0, 0.0], 1).unwrap(), 0);
        assert_eq!(knn_predict(&d, &[0.0, 0.0], 3).unwrap(), 1);
        assert!(knn_predict(&d, &[0.0, 0.0], 4).is_err());
        assert!(knn_predict(&d, &[0.0], 1).is_err());
        let single = Dataset::from_rows("s", &[[3.0]], vec![0]).unwrap();
        assert_eq!(knn_predict(&single, &[-10.0], 1).unwrap(), 0);
    }

    #[test]
    fn wnn_suppresses_coordinates() {
        let d = Dataset::from_rows("w", &[[0.0, 10.0], [1.0, 0.0]], vec![0, 1]).unwrap();
        assert_eq!(wnn_predict(&d, &[0.0, 0.0], &[1.0, 0.0], 1).unwrap(), 0);
        assert!(wnn_predict(&d, &[0.0, 0.0], &[1.0, -1.0], 1).is_err());
        assert!(wnn_predict(&d, &[0.0, 0.0], &[1.0], 1).is_err());
    }

    #[test]
    fn vote_tie_prefers_nearest_class() {
        // order 0 (class 1), 1 (class 0): one vote each
        assert_eq!(majority_vote(&[0, 1], &[1, 0], 2, 2), 1);
        // nearest class 2 not tied: lowest tied id wins
        assert_eq!(majority_vote(&[0, 1, 2, 3, 4], &[2, 0, 1, 0, 1], 3, 5), 0);
        assert_eq!(
            votes_for_ks(&[0, 1, 2], &[1, 0, 0], 2, &[3, 1, 2]),
            vec![0, 1, 1]
        );
    }

    #[test]
    fn kernn_single_instance() {
        let single = Dataset::from_rows("s", &[[3.0, 1.0]], vec![0]).unwrap();
        let g = KernelSpec::gaussian(0.5).unwrap();
        assert_eq!(kernn_predict(&single, &[0.0, 0.0], &g, 1).unwrap(), 0);
    }

    #[test]
    fn krv_two_points() {
        let d = Dataset::from_rows("p", &[[0.0, 0.0], [2.0, 2.0]], vec![0, 1]).unwrap();
        let g = KernelSpec::gaussian(1.0).unwrap();
        let m = krv_train(&d, &g, 1, &SblConfig::default()).unwrap();
        assert!(!m.retained_dims.is_empty());
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), 0);
        assert_eq!(m.predict(&[2.0, 2.0]).unwrap(), 1);
    }

    #[test]
    fn krv_vote_saturation() {
        let rows = [[0.0], [0.1], [0.2], [3.0], [3.1]];
        let d = Dataset::from_rows("v", &rows, vec![0, 0, 0, 1, 1]).unwrap();
        let g = KernelSpec::gaussian(0.5).unwrap();
        let mut m = krv_train(&d, &g, 1, &SblConfig::default()).unwrap();
        m.k = 5;
        for z in [-1.0, 0.0, 3.05, 10.0] {
            assert_eq!(m.predict(&[z]).unwrap(), 0);
        }
    }
}
