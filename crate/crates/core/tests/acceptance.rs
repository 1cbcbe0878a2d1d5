//! Acceptance suite. Each criterion is one test; all of them hold a common
//! lock so that timed runs never share the CPU with another test. Every
//! test writes a PASS/FAIL line straight to stderr, which the harness does
//! not capture.
//!
//! Protocols: criteria 1 and 2 use the default grids with 10 runs of
//! 10-fold CV. Criteria 4 and 5 use one run of 10-fold CV, widths
//! {0.25, 0.5, 0.75, 1.0} (a subset of the default grid) and the default k
//! and delta grids. Heart's best cell for criterion 3 comes from the
//! criterion 4 run.

mod common;

use std::io::Write as _;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use common::*;
use krv::bench::{
    emit_tables, run_on_datasets, ExperimentConfig, KernelFamily, LearnerKind, LearnerResult,
    RunReport,
};
use krv::neighbors::{kernn_predict, knn_predict, wnn_predict, KrvModel};
use krv::sbl::{posterior_mode, train};
use krv::stats::{chi2_critical, fisher_f, friedman_chi2, friedman_decision, nemenyi_cd, rank_row};
use krv::{
    design_matrix, krv_train, load_csv, Classifier, CsvOptions, Dataset, KernelSpec, Likelihood,
    RowMatrix, SblConfig, Scaling,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const SMALL_EIGHT: [&str; 8] = [
    "wbcd",
    "heart",
    "teaching",
    "ionosphere",
    "pima",
    "bupa",
    "iris",
    "wine",
];
const DELTA_FIVE: [&str; 5] = ["iris", "wine", "heart", "teaching", "bupa"];

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: usize, title: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{id:>2}] {tag} {title}: {detail}");
}

fn load(name: &str) -> Dataset {
    load_csv(data_path(&format!("{name}.csv")), &CsvOptions::default()).expect("bundled dataset")
}

struct Timed {
    report: RunReport,
    secs: f64,
}

fn run(names: &[&str], cfg: ExperimentConfig) -> Timed {
    let start = Instant::now();
    let data: Vec<Dataset> = names.iter().map(|n| load(n)).collect();
    let report = run_on_datasets(&cfg, &data, Vec::new()).expect("experiment runs");
    Timed {
        report,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn full_protocol(learners: Vec<LearnerKind>) -> ExperimentConfig {
    ExperimentConfig {
        learners,
        parallel: true,
        ..ExperimentConfig::default()
    }
}

fn reduced_protocol(learners: Vec<LearnerKind>) -> ExperimentConfig {
    ExperimentConfig {
        learners,
        runs: 1,
        width_grid: (1..=4).map(|i| f64::from(5 * i) / 20.0).collect(),
        parallel: true,
        ..ExperimentConfig::default()
    }
}

fn iris_full() -> &'static Timed {
    static CELL: OnceLock<Timed> = OnceLock::new();
    CELL.get_or_init(|| run(&["iris"], full_protocol(vec![LearnerKind::Krv])))
}

fn wbcd_poly() -> &'static Timed {
    static CELL: OnceLock<Timed> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = ExperimentConfig {
            kernel: KernelFamily::Polynomial,
            poly_order: 2,
            ..full_protocol(vec![LearnerKind::Krv])
        };
        run(&["wbcd"], cfg)
    })
}

fn wine_full() -> &'static Timed {
    static CELL: OnceLock<Timed> = OnceLock::new();
    CELL.get_or_init(|| run(&["wine"], full_protocol(vec![LearnerKind::Krv])))
}

fn small_eight() -> &'static Timed {
    static CELL: OnceLock<Timed> = OnceLock::new();
    CELL.get_or_init(|| {
        run(
            &SMALL_EIGHT,
            reduced_protocol(vec![LearnerKind::Kernn, LearnerKind::Krv]),
        )
    })
}

fn result<'a>(t: &'a Timed, dataset: &str, learner: LearnerKind) -> &'a LearnerResult {
    t.report
        .result(dataset, learner)
        .unwrap_or_else(|| panic!("no {learner} result for {dataset}"))
}

#[test]
fn c01_iris_krv_full_grid() {
    let _g = serial();
    let t = iris_full();
    let r = result(t, "iris", LearnerKind::Krv);
    let acc_ok = (r.mean_accuracy - 0.9511).abs() <= 0.05;
    let time_ok = t.secs < 300.0;
    let detail = format!(
        "accuracy {:.4} (target 0.9511 +/- 0.05) at {}; {} cells in {:.1} s (limit 300 s, {} cpu)",
        r.mean_accuracy,
        r.best,
        t.report.evaluated_cells,
        t.secs,
        std::thread::available_parallelism().map_or(1, |n| n.get()),
    );
    verdict(
        1,
        "iris k-RV, full grids, 10x10 CV",
        acc_ok && time_ok,
        &detail,
    );
    assert!(acc_ok, "{detail}");
    assert!(time_ok, "{detail}");
}

#[test]
fn c02_wbcd_polynomial_and_wine_gaussian() {
    let _g = serial();
    let wbcd = result(wbcd_poly(), "wbcd", LearnerKind::Krv);
    let wine = result(wine_full(), "wine", LearnerKind::Krv);
    let wbcd_ok = (wbcd.mean_accuracy - 0.9695).abs() <= 0.05;
    let wine_ok = (wine.mean_accuracy - 0.9963).abs() <= 0.05;
    let detail = format!(
        "wbcd poly(2) {:.4} (target 0.9695 +/- 0.05, {:.1} s); wine gaussian {:.4} (target 0.9963 +/- 0.05, {:.1} s)",
        wbcd.mean_accuracy,
        wbcd_poly().secs,
        wine.mean_accuracy,
        wine_full().secs,
    );
    verdict(
        2,
        "wbcd and wine k-RV accuracy",
        wbcd_ok && wine_ok,
        &detail,
    );
    assert!(wbcd_ok && wine_ok, "{detail}");
}

#[test]
fn c03_best_cells_are_sparse() {
    let _g = serial();
    let cells = [
        ("iris", result(iris_full(), "iris", LearnerKind::Krv)),
        ("wine", result(wine_full(), "wine", LearnerKind::Krv)),
        ("wbcd", result(wbcd_poly(), "wbcd", LearnerKind::Krv)),
        ("heart", result(small_eight(), "heart", LearnerKind::Krv)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in cells {
        let used = r.used_fraction.expect("k-RV reports sparsity");
        pass &= used <= 0.15;
        parts.push(format!(
            "{name} {used:.4} ({:.1} RV)",
            r.rv_count.unwrap_or(f64::NAN)
        ));
    }
    let detail = format!("used fraction <= 0.15: {}", parts.join(", "));
    verdict(3, "sparsity of the best cells", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c04_krv_matches_or_beats_kernn() {
    let _g = serial();
    let t = small_eight();
    let mut wins = 0;
    let mut parts = Vec::new();
    for name in SMALL_EIGHT {
        let krv = result(t, name, LearnerKind::Krv).mean_accuracy;
        let kernn = result(t, name, LearnerKind::Kernn).mean_accuracy;
        wins += usize::from(krv >= kernn);
        parts.push(format!("{name} {krv:.4}/{kernn:.4}"));
    }
    let pass = wins >= 6;
    let detail = format!(
        "k-RV >= ker-NN on {wins}/8 (need 6) in {:.1} s; k-RV/ker-NN: {}",
        t.secs,
        parts.join(", ")
    );
    verdict(4, "k-RV versus ker-NN on identical folds", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c05_smaller_delta_alpha_for_rvm_bernoulli() {
    let _g = serial();
    let at = |delta: f64| {
        let cfg = ExperimentConfig {
            delta_grid: vec![delta],
            ..reduced_protocol(vec![LearnerKind::RvmBern])
        };
        run(&DELTA_FIVE, cfg)
    };
    let (fine, coarse) = (at(1e-4), at(0.1));
    let mut pass = true;
    let mut parts = Vec::new();
    for name in DELTA_FIVE {
        let f = result(&fine, name, LearnerKind::RvmBern);
        let c = result(&coarse, name, LearnerKind::RvmBern);
        let (rv_f, rv_c) = (f.rv_count.unwrap_or(0.0), c.rv_count.unwrap_or(0.0));
        let ok = rv_f >= rv_c && f.mean_accuracy >= c.mean_accuracy - 0.01;
        pass &= ok;
        parts.push(format!(
            "{name} RV {rv_f:.1} vs {rv_c:.1}, acc {:.4} vs {:.4}",
            f.mean_accuracy, c.mean_accuracy
        ));
    }
    let detail = format!("delta 1e-4 vs 0.1: {}", parts.join("; "));
    verdict(5, "RVM-Bernoulli delta_alpha 1e-4 vs 0.1", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c06_rank_statistics() {
    let _g = serial();
    let cd = nemenyi_cd(6, 20, 2.850);
    let ff = fisher_f(19.6571, 20, 6).unwrap();
    let ranks: Vec<Vec<f64>> = PUBLISHED_GAUSSIAN_ACCURACY
        .iter()
        .map(|(_, row)| rank_row(row))
        .collect();
    let chi2 = friedman_chi2(&ranks).unwrap();
    let critical = chi2_critical(5, 0.05).unwrap();
    let rejects = friedman_decision(chi2, 6, 20, 0.05).unwrap();
    let pass = (cd - 1.6861).abs() <= 1e-3
        && (ff - 4.6487).abs() <= 1e-3
        && (chi2 - 19.6571).abs() <= 0.5
        && (critical - 11.0705).abs() <= 1e-4
        && rejects;
    let detail = format!(
        "CD {cd:.4}, F_F {ff:.4}, chi2_F {chi2:.4} from the published matrix, critical {critical:.4}, rejected {rejects}"
    );
    verdict(6, "Friedman and Nemenyi statistics", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c07_rules_agree_with_brute_force() {
    let _g = serial();
    let (mut agree, mut total) = (0usize, 0usize);
    for seed in 0..50 {
        let mut r = rng(1000 + seed);
        let classes = r.gen_range(2..=4);
        let n = r.gen_range(classes.max(5)..=100);
        let d = r.gen_range(1..=10);
        let train = random_dataset(&mut r, n, d, classes);
        let w: Vec<f64> = (0..d).map(|_| r.gen_range(0.0..2.0)).collect();
        let width = r.gen_range(0.3..2.0);
        let kernel = KernelSpec::gaussian(width).unwrap();
        let k_rv = r.gen_range(1..=n.min(9));
        let model = krv_train(&train, &kernel, k_rv, &SblConfig::default()).unwrap();
        for _ in 0..10 {
            let z: Vec<f64> = (0..d).map(|_| r.gen_range(-2.5..2.5)).collect();
            let k = r.gen_range(1..=n);
            let checks = [
                knn_predict(&train, &z, k).unwrap() == oracle_knn(&train, &z, k),
                wnn_predict(&train, &z, &w, k).unwrap() == oracle_wnn(&train, &z, &w, k),
                kernn_predict(&train, &z, &kernel, k).unwrap()
                    == oracle_kernn(&train, &z, width, k),
                model.predict(&z).unwrap()
                    == oracle_weighted_feature_nn(
                        &train,
                        &z,
                        width,
                        &model.retained_dims,
                        &model.sparse_weights,
                        k_rv,
                    ),
            ];
            total += checks.len();
            agree += checks.iter().filter(|&&c| c).count();
        }
    }
    let pass = agree == total;
    let detail = format!("{agree}/{total} predictions agree over 50 random datasets");
    verdict(
        7,
        "k-NN, w-NN, ker-NN and k-RV against oracles",
        pass,
        &detail,
    );
    assert!(pass, "{detail}");
}

/// Gradient of the penalized Bernoulli log-likelihood from its formula.
fn gradient(h: &DMatrix<f64>, t: &[f64], alphas: &[f64], w: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(w.len());
    for r in 0..h.nrows() {
        let a: f64 = (0..w.len()).map(|c| h[(r, c)] * w[c]).sum();
        let e = t[r] - 1.0 / (1.0 + (-a).exp());
        for c in 0..w.len() {
            g[c] += e * h[(r, c)];
        }
    }
    for c in 0..w.len() {
        g[c] -= alphas[c] * w[c];
    }
    g
}

fn kernel_problem(seed: u64, n: usize, width: f64) -> (DMatrix<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|_| [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)])
        .collect();
    let mut t: Vec<f64> = rows
        .iter()
        .map(|p| f64::from(u8::from(p[0] * p[1] + r.gen_range(-0.5..0.5) > 0.0)))
        .collect();
    t[0] = 0.0;
    t[1] = 1.0;
    let x = RowMatrix::from_rows(&rows).unwrap();
    let h = design_matrix(&KernelSpec::gaussian(width).unwrap(), &x, &x)
        .unwrap()
        .into_values();
    (h, t)
}

#[test]
fn c08_sparse_bayes_numerics() {
    let _g = serial();
    let (mut iterations, mut not_pd, mut gamma_out) = (0usize, 0usize, 0usize);
    for seed in 0..30u64 {
        let n = 6 + (seed as usize % 19);
        let width = 0.3 + 0.05 * seed as f64;
        let (h, t) = kernel_problem(seed, n, width);
        for lik in [Likelihood::Bernoulli, Likelihood::Gaussian] {
            let cfg = |cap| SblConfig {
                delta_alpha: 1e-9,
                max_outer_iters: cap,
                ..SblConfig::default()
            };
            let full = train(&h, &t, lik, &cfg(40)).unwrap();
            for (i, rec) in full.history.iter().enumerate() {
                iterations += 1;
                gamma_out += usize::from(rec.gamma_min < -1e-6 || rec.gamma_max > 1.0 + 1e-6);
                let m = train(&h, &t, lik, &cfg(i + 1)).unwrap();
                let c = &m.covariance;
                let sym = (c + c.transpose()) * 0.5;
                let symmetric = (c - &sym).amax() <= 1e-9 * c.amax().max(1.0);
                not_pd += usize::from(!symmetric || sym.cholesky().is_none());
            }
        }
    }

    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng(500 + seed);
        let (n, m) = (12, 4);
        let h = DMatrix::from_fn(
            n,
            m,
            |_, c| if c == 0 { 1.0 } else { r.gen_range(-1.5..1.5) },
        );
        let mut t: Vec<f64> = (0..n)
            .map(|_| f64::from(u8::from(r.gen_bool(0.5))))
            .collect();
        t[0] = 0.0;
        t[1] = 1.0;
        let alphas: Vec<f64> = (0..m).map(|_| r.gen_range(0.2..5.0)).collect();
        let post = posterior_mode(&h, &t, &alphas, &SblConfig::default()).unwrap();
        let eps = 1e-5;
        let mut hess = DMatrix::zeros(m, m);
        for c in 0..m {
            let (mut up, mut dn) = (post.weights.clone(), post.weights.clone());
            up[c] += eps;
            dn[c] -= eps;
            let col =
                (gradient(&h, &t, &alphas, &up) - gradient(&h, &t, &alphas, &dn)) / (2.0 * eps);
            hess.set_column(c, &col);
        }
        let fd = (-hess).try_inverse().unwrap();
        worst = worst.max((&post.covariance - &fd).amax() / fd.amax());
    }

    let pass = not_pd == 0 && gamma_out == 0 && worst < 1e-4;
    let detail = format!(
        "{iterations} recorded iterations: {not_pd} covariances not positive definite, {gamma_out} gamma out of range; worst relative covariance error vs finite differences {worst:.2e}"
    );
    verdict(8, "posterior numerics", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c09_unit_weight_reductions() {
    let _g = serial();
    let (mut wnn_miss, mut kern_miss) = (0usize, 0usize);
    for seed in 0..20u64 {
        let mut r = rng(2000 + seed);
        let classes = r.gen_range(2..=4);
        let n = r.gen_range(classes.max(5)..=60);
        let d = r.gen_range(1..=8);
        let train = random_dataset(&mut r, n, d, classes);
        let kernel = KernelSpec::gaussian(r.gen_range(0.3..2.0)).unwrap();
        let h = design_matrix(&kernel, train.instances(), train.instances()).unwrap();
        let dims: Vec<usize> = (0..h.n_basis()).collect();
        let k = r.gen_range(1..=n);
        let unit = vec![1.0; d];
        let model = KrvModel::from_weights(
            &h,
            train.labels().to_vec(),
            train.n_classes(),
            dims.clone(),
            vec![1.0; dims.len()],
            k,
        )
        .unwrap();
        for _ in 0..50 {
            let z: Vec<f64> = (0..d).map(|_| r.gen_range(-2.5..2.5)).collect();
            wnn_miss += usize::from(
                wnn_predict(&train, &z, &unit, k).unwrap() != knn_predict(&train, &z, k).unwrap(),
            );
            kern_miss += usize::from(
                model.predict(&z).unwrap() != kernn_predict(&train, &z, &kernel, k).unwrap(),
            );
        }
    }
    let pass = wnn_miss == 0 && kern_miss == 0;
    let detail = format!(
        "unit-weight w-NN vs k-NN: {wnn_miss}/1000 mismatches; unit-weight unpruned k-RV vs ker-NN: {kern_miss}/1000 mismatches"
    );
    verdict(9, "unit-weight reductions", pass, &detail);
    assert!(pass, "{detail}");
}

fn report_files(cfg: &ExperimentConfig, dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let data: Vec<Dataset> = ["iris", "wine"].iter().map(|n| load(n)).collect();
    let report = run_on_datasets(cfg, &data, Vec::new()).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = emit_tables(&report, dir)
        .unwrap()
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&p).unwrap())
        })
        // wall-clock timings are the one output that varies by design
        .filter(|(name, _)| name != "timings.csv")
        .collect();
    files.sort();
    files
}

#[test]
fn c10_determinism_and_persistence() {
    let _g = serial();
    let cfg = ExperimentConfig {
        learners: LearnerKind::ALL.to_vec(),
        k_grid: vec![1, 3, 5],
        width_grid: vec![0.5, 1.0],
        delta_grid: vec![1e-3, 0.1],
        runs: 2,
        folds: 5,
        seed: 7,
        ..ExperimentConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = report_files(&cfg, a.path());
    let second = report_files(
        &ExperimentConfig {
            parallel: true,
            ..cfg.clone()
        },
        b.path(),
    );
    let identical = first == second && !first.is_empty();

    let iris = load("iris");
    let kernel = KernelSpec::gaussian(0.5).unwrap();
    let sbl = SblConfig::default();
    let models = [
        Classifier::train_krv(&iris, &kernel, 5, Scaling::default(), &sbl).unwrap(),
        Classifier::train_rvm(
            &iris,
            &kernel,
            Likelihood::Bernoulli,
            Scaling::default(),
            &sbl,
        )
        .unwrap(),
        Classifier::train_rvm(
            &iris,
            &kernel,
            Likelihood::Gaussian,
            Scaling::default(),
            &sbl,
        )
        .unwrap(),
    ];
    let mut worst = 0.0f64;
    let mut same_class = true;
    for (i, model) in models.iter().enumerate() {
        let path = a.path().join(format!("model{i}.krv"));
        model.save(&path).unwrap();
        let back = Classifier::load(&path).unwrap();
        for row in 0..iris.n_instances() {
            let z = iris.row(row);
            let (s, t) = (model.scores(z).unwrap(), back.scores(z).unwrap());
            worst = s
                .iter()
                .zip(&t)
                .map(|(x, y)| (x - y).abs())
                .fold(worst, f64::max);
            same_class &= model.predict(z).unwrap() == back.predict(z).unwrap();
        }
    }
    let pass = identical && worst <= 1e-12 && same_class;
    let detail = format!(
        "{} report files byte-identical across sequential and parallel reruns: {identical}; largest score change after save/load {worst:.1e}",
        first.len()
    );
    verdict(10, "determinism and persistence", pass, &detail);
    assert!(pass, "{detail}");
}
