use std::fmt;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, LearnerKind};
use crate::data::{load_csv, rescale, stratified_kfold, CsvOptions, Dataset, RowMatrix};
use crate::error::{KrvError, Result};
use crate::kernels::{design_matrix, KernelSpec};
use crate::neighbors::{
    distances, inverse_variance_weights, neighbor_order, votes_for_ks, weighted_distances, KrvModel,
};
use crate::sbl::{train_ensemble_path, Likelihood, SblConfig, SblEnsemble};
use crate::stats::RankReport;

/// Significance level of the rank statistics and the paired t-tests.
pub const ALPHA: f64 = 0.05;

/// One hyperparameter cell. Axes a learner does not use are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub k: Option<usize>,
    pub width: Option<f64>,
    pub delta: Option<f64>,
}

impl fmt::Display for Params {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(k) = self.k {
            parts.push(format!("k={k}"));
        }
        if let Some(w) = self.width {
            parts.push(format!("width={w}"));
        }
        if let Some(d) = self.delta {
            parts.push(format!("delta={d:e}"));
        }
        f.write_str(&parts.join(" "))
    }
}

/// Best grid cell of one learner on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerResult {
    pub dataset: String,
    pub learner: LearnerKind,
    pub best: Params,
    /// Mean of `fold_accuracies`.
    pub mean_accuracy: f64,
    /// Sample standard deviation of `fold_accuracies`.
    pub std_accuracy: f64,
    /// Best cell's test accuracy on every (run, fold), run-major.
    pub fold_accuracies: Vec<f64>,
    /// Seed of the first run; run `r` splits with `seed + r`.
    pub seed: u64,
    /// Mean relevance-vector count of the best cell (sparse learners).
    pub rv_count: Option<f64>,
    /// Mean of `rv_count / training size` over the folds.
    pub used_fraction: Option<f64>,
    /// Grid cells evaluated for this learner.
    pub cells: usize,
}

/// Wall-clock time summed over all folds and grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub dataset: String,
    pub learner: LearnerKind,
    pub train_secs: f64,
    pub test_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub runs: usize,
    pub folds: usize,
    pub kernel: String,
    pub learners: Vec<LearnerKind>,
    pub datasets: Vec<String>,
    /// Dataset-major, learners in `learners` order.
    pub results: Vec<LearnerResult>,
    /// `(path, reason)` for datasets that could not be loaded.
    pub skipped: Vec<(String, String)>,
    /// Datasets times the summed grid sizes of the learners.
    pub evaluated_cells: usize,
    /// Present with at least two datasets and two learners.
    pub ranks: Option<RankReport>,
    /// Not deterministic; kept apart from the other report files.
    pub timings: Vec<Timing>,
}

impl RunReport {
    pub fn result(&self, dataset: &str, learner: LearnerKind) -> Option<&LearnerResult> {
        self.results
            .iter()
            .find(|r| r.dataset == dataset && r.learner == learner)
    }

    /// Mean accuracies, one row per dataset, one column per learner.
    pub fn accuracy_matrix(&self) -> Vec<Vec<f64>> {
        self.datasets
            .iter()
            .map(|d| {
                self.learners
                    .iter()
                    .map(|&l| self.result(d, l).map_or(f64::NAN, |r| r.mean_accuracy))
                    .collect()
            })
            .collect()
    }
}

/// `(rv_count, used_fraction)` of a k-RV model: retained kernel columns
/// without the bias, and their share of the training set.
pub fn sparsity_accounting(model: &KrvModel, train_size: usize) -> (usize, f64) {
    let rv = model.rv_count();
    (rv, rv as f64 / train_size as f64)
}

/// Runs every configured learner on every loadable dataset.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let options = CsvOptions::with_label(cfg.label());
    let mut datasets = Vec::new();
    let mut skipped = Vec::new();
    for path in &cfg.datasets {
        match load_csv(path, &options) {
            Ok(d) => datasets.push(d),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push((path.display().to_string(), e.to_string()));
            }
        }
    }
    run_on_datasets(cfg, &datasets, skipped)
}

/// As [`run_experiment`] on already loaded datasets.
pub fn run_on_datasets(
    cfg: &ExperimentConfig,
    datasets: &[Dataset],
    skipped: Vec<(String, String)>,
) -> Result<RunReport> {
    if cfg.learners.is_empty() {
        return Err(KrvError::Config("learner set is empty".into()));
    }
    let mut learners = cfg.learners.clone();
    learners.sort();
    learners.dedup();
    let cfg = ExperimentConfig {
        learners: learners.clone(),
        ..cfg.clone()
    };

    let mut results = Vec::new();
    let mut timings = Vec::new();
    for d in datasets {
        let (r, t) = evaluate_dataset(d, &cfg)?;
        results.extend(r);
        timings.extend(t);
    }
    let per_dataset: usize = learners.iter().map(|&l| cfg.grid_size(l)).sum();
    let evaluated_cells = datasets.len() * per_dataset;
    log::info!("evaluated {evaluated_cells} grid cells");

    let names: Vec<String> = datasets.iter().map(|d| d.name().to_string()).collect();
    let mut report = RunReport {
        seed: cfg.seed,
        runs: cfg.runs,
        folds: cfg.folds,
        kernel: cfg.kernel.to_string(),
        learners: learners.clone(),
        datasets: names.clone(),
        results,
        skipped,
        evaluated_cells,
        ranks: None,
        timings,
    };
    if names.len() >= 2 && learners.len() >= 2 {
        let ids = learners.iter().map(|l| l.id().to_string()).collect();
        report.ranks = Some(RankReport::new(
            ids,
            names,
            report.accuracy_matrix(),
            ALPHA,
        )?);
    }
    Ok(report)
}

/// Position of a learner's cells: kernel-major, then delta, then k.
struct Grid {
    nk: usize,
    nd: usize,
    nkern: usize,
}

impl Grid {
    fn of(cfg: &ExperimentConfig, learner: LearnerKind, n_kernels: usize) -> Self {
        Grid {
            nk: if learner.uses_k() {
                cfg.k_grid.len()
            } else {
                1
            },
            nd: if learner.uses_delta() {
                cfg.delta_grid.len()
            } else {
                1
            },
            nkern: if learner.uses_kernel() { n_kernels } else { 1 },
        }
    }

    fn len(&self) -> usize {
        self.nk * self.nd * self.nkern
    }

    fn index(&self, kern: usize, delta: usize, k: usize) -> usize {
        (kern * self.nd + delta) * self.nk + k
    }

    fn params(
        &self,
        idx: usize,
        learner: LearnerKind,
        cfg: &ExperimentConfig,
        kernels: &[KernelSpec],
    ) -> Params {
        let k = idx % self.nk;
        let delta = (idx / self.nk) % self.nd;
        let kern = idx / (self.nk * self.nd);
        Params {
            k: learner.uses_k().then(|| cfg.k_grid[k]),
            width: if learner.uses_kernel() {
                match kernels[kern] {
                    KernelSpec::Gaussian { width } => Some(width),
                    KernelSpec::Polynomial { .. } => None,
                }
            } else {
                None
            },
            delta: learner.uses_delta().then(|| cfg.delta_grid[delta]),
        }
    }
}

/// Per-(run, fold) output: accuracy and RV count of every cell of every
/// learner (in `cfg.learners` order).
struct UnitOutput {
    accuracy: Vec<Vec<f64>>,
    rv_fraction: Vec<Vec<f64>>,
    rv_count: Vec<Vec<f64>>,
    train_secs: Vec<f64>,
    test_secs: Vec<f64>,
}

fn evaluate_dataset(
    data: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<(Vec<LearnerResult>, Vec<Timing>)> {
    let kernels = cfg.kernels()?;
    let mut units = Vec::with_capacity(cfg.runs * cfg.folds);
    for run in 0..cfg.runs {
        let seed = cfg.seed.wrapping_add(run as u64);
        let plan = stratified_kfold(data, cfg.folds, seed)?;
        for fold in 0..cfg.folds {
            units.push((plan.train_indices(fold), plan.test_indices(fold)));
        }
    }
    let eval = |(train, test): &(Vec<usize>, Vec<usize>)| {
        evaluate_unit(&data.subset(train), &data.subset(test), cfg, &kernels)
    };
    let outputs: Vec<UnitOutput> = if cfg.parallel {
        units.par_iter().map(eval).collect::<Result<_>>()?
    } else {
        units.iter().map(eval).collect::<Result<_>>()?
    };

    let mut results = Vec::new();
    let mut timings = Vec::new();
    for (li, &learner) in cfg.learners.iter().enumerate() {
        let grid = Grid::of(cfg, learner, kernels.len());
        let n_units = outputs.len() as f64;
        let mut best = 0;
        let mut best_mean = f64::NEG_INFINITY;
        for cell in 0..grid.len() {
            let mean = outputs.iter().map(|u| u.accuracy[li][cell]).sum::<f64>() / n_units;
            if mean > best_mean {
                best_mean = mean;
                best = cell;
            }
        }
        let fold_accuracies: Vec<f64> = outputs.iter().map(|u| u.accuracy[li][best]).collect();
        let mean_accuracy = fold_accuracies.iter().sum::<f64>() / n_units;
        let std_accuracy = if fold_accuracies.len() > 1 {
            (fold_accuracies
                .iter()
                .map(|a| (a - mean_accuracy).powi(2))
                .sum::<f64>()
                / (n_units - 1.0))
                .sqrt()
        } else {
            0.0
        };
        let (rv_count, used_fraction) = if learner.is_sparse() {
            (
                Some(outputs.iter().map(|u| u.rv_count[li][best]).sum::<f64>() / n_units),
                Some(outputs.iter().map(|u| u.rv_fraction[li][best]).sum::<f64>() / n_units),
            )
        } else {
            (None, None)
        };
        results.push(LearnerResult {
            dataset: data.name().to_string(),
            learner,
            best: grid.params(best, learner, cfg, &kernels),
            mean_accuracy,
            std_accuracy,
            fold_accuracies,
            seed: cfg.seed,
            rv_count,
            used_fraction,
            cells: grid.len(),
        });
        timings.push(Timing {
            dataset: data.name().to_string(),
            learner,
            train_secs: outputs.iter().map(|u| u.train_secs[li]).sum(),
            test_secs: outputs.iter().map(|u| u.test_secs[li]).sum(),
        });
    }
    Ok((results, timings))
}

fn check_k_grid(ks: &[usize], n_train: usize) -> Result<()> {
    match ks.iter().find(|&&k| k > n_train) {
        Some(k) => Err(KrvError::Config(format!(
            "k = {k} exceeds the {n_train} training rows of a fold"
        ))),
        None => Ok(()),
    }
}

/// Fraction of `predictions[q][j]` equal to `truth[q]`, per column `j`.
fn accuracies(predictions: &[Vec<usize>], truth: &[usize], columns: usize) -> Vec<f64> {
    let mut correct = vec![0usize; columns];
    for (p, &t) in predictions.iter().zip(truth) {
        for (c, &v) in correct.iter_mut().zip(p) {
            *c += usize::from(v == t);
        }
    }
    correct
        .into_iter()
        .map(|c| c as f64 / truth.len() as f64)
        .collect()
}

fn evaluate_unit(
    train: &Dataset,
    test: &Dataset,
    cfg: &ExperimentConfig,
    kernels: &[KernelSpec],
) -> Result<UnitOutput> {
    let n_train = train.n_instances();
    let n_classes = train.n_classes();
    let labels = train.labels();
    let truth = test.labels();
    let ks = &cfg.k_grid;
    let nl = cfg.learners.len();
    let mut out = UnitOutput {
        accuracy: vec![Vec::new(); nl],
        rv_fraction: vec![Vec::new(); nl],
        rv_count: vec![Vec::new(); nl],
        train_secs: vec![0.0; nl],
        test_secs: vec![0.0; nl],
    };
    let slot = |l: LearnerKind| cfg.learners.iter().position(|&x| x == l);
    if cfg.learners.iter().any(|l| l.uses_k()) {
        check_k_grid(ks, n_train)?;
    }

    for (li, &learner) in cfg.learners.iter().enumerate() {
        let grid = Grid::of(cfg, learner, kernels.len());
        out.accuracy[li] = vec![0.0; grid.len()];
        if learner.is_sparse() {
            out.rv_fraction[li] = vec![0.0; grid.len()];
            out.rv_count[li] = vec![0.0; grid.len()];
        }
    }

    // input-space baselines see the raw attributes
    for (learner, weighted) in [(LearnerKind::Knn, false), (LearnerKind::Wnn, true)] {
        let Some(li) = slot(learner) else { continue };
        let t0 = Instant::now();
        let weights = weighted.then(|| inverse_variance_weights(train.instances()));
        let t1 = Instant::now();
        let preds: Vec<Vec<usize>> = test
            .instances()
            .rows()
            .map(|z| {
                let d = match &weights {
                    Some(w) => weighted_distances(train.instances(), z, w),
                    None => distances(train.instances(), z),
                };
                votes_for_ks(&neighbor_order(&d), labels, n_classes, ks)
            })
            .collect();
        out.accuracy[li] = accuracies(&preds, truth, ks.len());
        out.train_secs[li] += (t1 - t0).as_secs_f64();
        out.test_secs[li] += t1.elapsed().as_secs_f64();
    }

    if !cfg.learners.iter().any(|l| l.uses_kernel()) {
        return Ok(out);
    }
    // kernel learners see attributes rescaled on the training fold
    let t_std = Instant::now();
    let (s_train, standardizer) = rescale(train, cfg.scaling);
    let s_test = standardizer.apply(test)?;
    let std_secs = t_std.elapsed().as_secs_f64();
    let sbl_cfg = SblConfig::default();

    for (ki, spec) in kernels.iter().enumerate() {
        let t0 = Instant::now();
        let h = design_matrix(spec, s_train.instances(), s_train.instances())?;
        let q = design_matrix(spec, s_test.instances(), s_train.instances())?;
        let expand_secs = t0.elapsed().as_secs_f64() + std_secs;

        if let Some(li) = slot(LearnerKind::Kernn) {
            let grid = Grid::of(cfg, LearnerKind::Kernn, kernels.len());
            let t0 = Instant::now();
            let features = row_major(h.values());
            let t1 = Instant::now();
            let preds: Vec<Vec<usize>> = (0..q.n_rows())
                .map(|i| {
                    let phi: Vec<f64> = q.values().row(i).iter().copied().collect();
                    votes_for_ks(
                        &neighbor_order(&distances(&features, &phi)),
                        labels,
                        n_classes,
                        ks,
                    )
                })
                .collect();
            let acc = accuracies(&preds, truth, ks.len());
            let start = grid.index(ki, 0, 0);
            out.accuracy[li][start..start + ks.len()].copy_from_slice(&acc);
            out.train_secs[li] += expand_secs + (t1 - t0).as_secs_f64();
            out.test_secs[li] += t1.elapsed().as_secs_f64();
        }

        let bern_users = [slot(LearnerKind::Krv), slot(LearnerKind::RvmBern)];
        if bern_users.iter().any(Option::is_some) {
            let t0 = Instant::now();
            let path = train_ensemble_path(
                h.values(),
                labels,
                n_classes,
                Likelihood::Bernoulli,
                &sbl_cfg,
                &cfg.delta_grid,
            )?;
            let sbl_secs = expand_secs + t0.elapsed().as_secs_f64();
            for (di, ens) in path.iter().enumerate() {
                if let Some(li) = slot(LearnerKind::RvmBern) {
                    let grid = Grid::of(cfg, LearnerKind::RvmBern, kernels.len());
                    record_rvm(&mut out, li, grid.index(ki, di, 0), ens, &q, truth, n_train)?;
                }
                if let Some(li) = slot(LearnerKind::Krv) {
                    let grid = Grid::of(cfg, LearnerKind::Krv, kernels.len());
                    let t0 = Instant::now();
                    let model = KrvModel::from_ensemble(&h, ens, labels.to_vec(), ks[0])?;
                    let t1 = Instant::now();
                    let preds: Vec<Vec<usize>> = s_test
                        .instances()
                        .rows()
                        .map(|z| model.predict_for_ks(z, ks))
                        .collect::<Result<_>>()?;
                    let acc = accuracies(&preds, truth, ks.len());
                    let start = grid.index(ki, di, 0);
                    out.accuracy[li][start..start + ks.len()].copy_from_slice(&acc);
                    let (rv, frac) = sparsity_accounting(&model, n_train);
                    for c in start..start + ks.len() {
                        out.rv_count[li][c] = rv as f64;
                        out.rv_fraction[li][c] = frac;
                    }
                    out.train_secs[li] += (t1 - t0).as_secs_f64();
                    out.test_secs[li] += t1.elapsed().as_secs_f64();
                }
            }
            for li in bern_users.into_iter().flatten() {
                out.train_secs[li] += sbl_secs;
            }
        }

        if let Some(li) = slot(LearnerKind::RvmGauss) {
            let grid = Grid::of(cfg, LearnerKind::RvmGauss, kernels.len());
            let t0 = Instant::now();
            let path = train_ensemble_path(
                h.values(),
                labels,
                n_classes,
                Likelihood::Gaussian,
                &sbl_cfg,
                &cfg.delta_grid,
            )?;
            out.train_secs[li] += expand_secs + t0.elapsed().as_secs_f64();
            for (di, ens) in path.iter().enumerate() {
                record_rvm(&mut out, li, grid.index(ki, di, 0), ens, &q, truth, n_train)?;
            }
        }
    }
    Ok(out)
}

fn record_rvm(
    out: &mut UnitOutput,
    li: usize,
    cell: usize,
    ens: &SblEnsemble,
    q: &crate::kernels::DesignMatrix,
    truth: &[usize],
    n_train: usize,
) -> Result<()> {
    let t0 = Instant::now();
    let mut correct = 0usize;
    for (i, &t) in truth.iter().enumerate() {
        let phi: Vec<f64> = q.values().row(i).iter().copied().collect();
        correct += usize::from(ens.predict(&phi)? == t);
    }
    out.accuracy[li][cell] = correct as f64 / truth.len() as f64;
    let rv = ens.active_union().iter().filter(|&&c| c != 0).count();
    out.rv_count[li][cell] = rv as f64;
    out.rv_fraction[li][cell] = rv as f64 / n_train as f64;
    out.test_secs[li] += t0.elapsed().as_secs_f64();
    Ok(())
}

fn row_major(m: &nalgebra::DMatrix<f64>) -> RowMatrix {
    let mut data = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        data.extend(m.row(i).iter());
    }
    RowMatrix::new(data, m.nrows(), m.ncols()).expect("shape")
}

/// Loads the datasets of a config, failing on the first unloadable file.
pub fn load_all(cfg: &ExperimentConfig) -> Result<Vec<Dataset>> {
    let options = CsvOptions::with_label(cfg.label());
    cfg.datasets
        .iter()
        .map(|p| load_csv(Path::new(p), &options))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let rows: Vec<[f64; 2]> = (0..30)
            .map(|i| {
                let c = (i % 2) as f64;
                [
                    c * 3.0 + 0.1 * (i % 5) as f64,
                    c * 2.0 - 0.07 * (i % 3) as f64,
                ]
            })
            .collect();
        let labels = (0..30).map(|i| i % 2).collect();
        Dataset::from_rows("toy", &rows, labels).unwrap()
    }

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            k_grid: vec![1, 3],
            width_grid: vec![0.5, 1.0],
            delta_grid: vec![1e-3, 1.0],
            runs: 2,
            folds: 3,
            ..Default::default()
        }
    }

    #[test]
    fn grid_index_round_trips() {
        let cfg = small_cfg();
        let kernels = cfg.kernels().unwrap();
        let g = Grid::of(&cfg, LearnerKind::Krv, kernels.len());
        assert_eq!(g.len(), 8);
        let p = g.params(g.index(1, 0, 1), LearnerKind::Krv, &cfg, &kernels);
        assert_eq!(
            p,
            Params {
                k: Some(3),
                width: Some(1.0),
                delta: Some(1e-3)
            }
        );
    }

    #[test]
    fn every_learner_reports_a_valid_cell() {
        let cfg = small_cfg();
        let report = run_on_datasets(&cfg, &[toy()], Vec::new()).unwrap();
        assert_eq!(report.results.len(), 6);
        assert_eq!(report.evaluated_cells, 2 + 2 + 4 + 8 + 4 + 4);
        for r in &report.results {
            assert_eq!(r.fold_accuracies.len(), 6);
            assert!((0.0..=1.0).contains(&r.mean_accuracy));
            let mean = r.fold_accuracies.iter().sum::<f64>() / 6.0;
            assert!((mean - r.mean_accuracy).abs() <= 1e-12);
            if let Some(k) = r.best.k {
                assert!(cfg.k_grid.contains(&k));
            }
            if let Some(w) = r.best.width {
                assert!(cfg.width_grid.contains(&w));
            }
            if let Some(d) = r.best.delta {
                assert!(cfg.delta_grid.contains(&d));
            }
            if let Some(f) = r.used_fraction {
                assert!(f > 0.0 && f <= 1.0);
            }
        }
        assert!(report.ranks.is_none());
    }

    #[test]
    fn parallel_matches_sequential() {
        let cfg = small_cfg();
        let a = run_on_datasets(&cfg, &[toy()], Vec::new()).unwrap();
        let par = ExperimentConfig {
            parallel: true,
            ..cfg
        };
        let b = run_on_datasets(&par, &[toy()], Vec::new()).unwrap();
        assert_eq!(a.results, b.results);
    }

    #[test]
    fn oversized_k_is_a_config_error() {
        let cfg = ExperimentConfig {
            k_grid: vec![100],
            learners: vec![LearnerKind::Knn],
            ..small_cfg()
        };
        assert!(run_on_datasets(&cfg, &[toy()], Vec::new()).is_err());
    }
}
