//! Shared fixtures and brute-force oracles. Oracles recompute everything
//! from the defining formulas and select neighbours by exhaustive passes,
//! sharing no code with the library.

#![allow(dead_code)]

use krv::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_path(file: &str) -> String {
    format!("{}/data/{file}", env!("CARGO_MANIFEST_DIR"))
}

/// Random labelled dataset with `n` rows, `d` attributes and up to
/// `classes` classes (every class present when `n >= classes`).
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            if i < classes {
                i
            } else {
                rng.gen_range(0..classes)
            }
        })
        .collect();
    Dataset::from_rows("random", &rows, labels).expect("valid rows")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(u: &[f64], v: &[f64], width: f64) -> f64 {
    let mut d2 = 0.0;
    for i in 0..u.len() {
        d2 += (u[i] - v[i]).powi(2);
    }
    (-d2 / (2.0 * width * width)).exp()
}

/// Exhaustive k-nearest selection: k passes, each taking the smallest
/// unused distance (lowest index on ties).
pub fn brute_nearest(dist: &[f64], k: usize) -> Vec<usize> {
    let mut used = vec![false; dist.len()];
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..dist.len() {
            if used[i] {
                continue;
            }
            match best {
                Some(b) if dist[i] >= dist[b] => {}
                _ => best = Some(i),
            }
        }
        let b = best.expect("k <= n");
        used[b] = true;
        out.push(b);
    }
    out
}

/// Plurality over the neighbours; a tie goes to the nearest neighbour's
/// class when it is tied, else to the lowest tied class.
pub fn brute_vote(nearest: &[usize], labels: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0; n_classes];
    for &i in nearest {
        counts[labels[i]] += 1;
    }
    let max = *counts.iter().max().unwrap();
    let first = labels[nearest[0]];
    if counts[first] == max {
        return first;
    }
    (0..n_classes).find(|&c| counts[c] == max).unwrap()
}

pub fn oracle_wnn(train: &Dataset, z: &[f64], w: &[f64], k: usize) -> usize {
    let dist: Vec<f64> = (0..train.n_instances())
        .map(|i| {
            let x = train.row(i);
            (0..z.len())
                .map(|j| w[j] * (x[j] - z[j]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    brute_vote(&brute_nearest(&dist, k), train.labels(), train.n_classes())
}

pub fn oracle_knn(train: &Dataset, z: &[f64], k: usize) -> usize {
    oracle_wnn(train, z, &vec![1.0; z.len()], k)
}

/// Feature `c` of a point: 1 for the bias, else the kernel against row c-1.
fn feature(train: &Dataset, x: &[f64], c: usize, width: f64) -> f64 {
    if c == 0 {
        1.0
    } else {
        gaussian(x, train.row(c - 1), width)
    }
}

/// Relevance-weighted nearest neighbours over the columns `dims` with
/// weights `w` (all columns and unit weights give ker-NN).
pub fn oracle_weighted_feature_nn(
    train: &Dataset,
    z: &[f64],
    width: f64,
    dims: &[usize],
    w: &[f64],
    k: usize,
) -> usize {
    let zf: Vec<f64> = dims.iter().map(|&c| feature(train, z, c, width)).collect();
    let dist: Vec<f64> = (0..train.n_instances())
        .map(|i| {
            let mut s = 0.0;
            for (p, &c) in dims.iter().enumerate() {
                s += w[p].abs() * (feature(train, train.row(i), c, width) - zf[p]).powi(2);
            }
            s.sqrt()
        })
        .collect();
    brute_vote(&brute_nearest(&dist, k), train.labels(), train.n_classes())
}

pub fn oracle_kernn(train: &Dataset, z: &[f64], width: f64, k: usize) -> usize {
    let dims: Vec<usize> = (0..=train.n_instances()).collect();
    oracle_weighted_feature_nn(train, z, width, &dims, &vec![1.0; dims.len()], k)
}

/// Learner columns of [`PUBLISHED_GAUSSIAN_ACCURACY`].
pub const PUBLISHED_LEARNERS: [&str; 6] = ["knn", "wnn", "kernn", "krv", "rvm_gauss", "rvm_bern"];

/// Published mean accuracies with the Gaussian kernel on 20 datasets, one
/// row per dataset, columns as in [`PUBLISHED_LEARNERS`].
pub const PUBLISHED_GAUSSIAN_ACCURACY: [(&str, [f64; 6]); 20] = [
    ("wbcd", [0.9011, 0.9302, 0.9267, 0.9419, 0.6964, 0.9490]),
    (
        "australia",
        [0.8845, 0.9226, 0.9191, 0.9372, 0.8519, 0.8415],
    ),
    ("heart", [0.8702, 0.8517, 0.8626, 0.8593, 0.8633, 0.8180]),
    ("teaching", [0.6286, 0.6492, 0.6484, 0.7978, 0.7691, 0.7572]),
    (
        "ionosphere",
        [0.8080, 0.8055, 0.8166, 0.9105, 0.8638, 0.8502],
    ),
    ("pima", [0.7325, 0.7392, 0.7382, 0.7771, 0.7410, 0.7441]),
    ("bupa", [0.5611, 0.5640, 0.5522, 0.6973, 0.7164, 0.6912]),
    ("shuttle", [0.9047, 0.9255, 0.9252, 0.9747, 0.9817, 0.9854]),
    (
        "parkinson",
        [0.7703, 0.7801, 0.7844, 0.8732, 0.9349, 0.8975],
    ),
    ("titanic", [0.8045, 0.8059, 0.8045, 0.795, 0.7703, 0.7718]),
    ("sonar", [0.8245, 0.8207, 0.8218, 0.8476, 0.6167, 0.7833]),
    ("iris", [0.90, 0.9424, 0.9333, 0.9511, 0.9347, 0.9372]),
    ("wine", [0.9050, 0.9112, 0.914, 0.9963, 0.9636, 0.9657]),
    ("balance", [0.8748, 0.8805, 0.8855, 0.939, 0.9371, 0.9177]),
    ("vehicle", [0.7505, 0.7522, 0.7548, 0.7377, 0.7317, 0.7325]),
    ("nursery", [0.9272, 0.9320, 0.9351, 0.9275, 0.9028, 0.9112]),
    ("zoo", [0.9433, 0.9514, 0.9503, 0.9402, 0.9139, 0.9364]),
    ("segment", [0.7422, 0.7503, 0.7496, 0.9356, 0.8396, 0.8375]),
    ("ecoli", [0.7840, 0.7778, 0.7919, 0.8686, 0.8547, 0.8391]),
    ("pendigit", [0.9901, 0.9905, 0.9928, 0.9944, 0.9818, 0.9785]),
];

pub fn published_rank_report() -> krv::stats::RankReport {
    krv::stats::RankReport::new(
        PUBLISHED_LEARNERS.iter().map(|s| s.to_string()).collect(),
        PUBLISHED_GAUSSIAN_ACCURACY
            .iter()
            .map(|(d, _)| d.to_string())
            .collect(),
        PUBLISHED_GAUSSIAN_ACCURACY
            .iter()
            .map(|(_, r)| r.to_vec())
            .collect(),
        0.05,
    )
    .expect("published matrix is well formed")
}
