//! Sparse Bayesian learning over a kernel design matrix.
//!
//! Each weight carries its own Gaussian prior `N(0, 1/alpha_i)`. Training
//! alternates between the posterior over weights (Laplace/IRLS for the
//! Bernoulli likelihood, closed form for the Gaussian one) and the MacKay
//! re-estimate `alpha_i <- (1 - alpha_i Sigma_ii) / w_i^2`. Bases whose
//! `alpha` reaches the prune threshold are removed. Training stops once the
//! largest change of a surviving `alpha` between consecutive iterations is
//! at most `delta_alpha`, so a large `delta_alpha` stops early and keeps
//! more bases.

mod posterior;

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{KrvError, Result};

pub use posterior::{gaussian_posterior, posterior_mode, posterior_mode_from, PosteriorMode};

/// Value returned by [`update_alpha`] for a basis that must be pruned.
pub const PRUNED: f64 = f64::INFINITY;

/// Threshold below which a negative `1 - alpha Sigma_ii` is reported.
const GAMMA_WARN: f64 = -1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Likelihood {
    Bernoulli,
    Gaussian,
}

impl fmt::Display for Likelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Likelihood::Bernoulli => "bernoulli",
            Likelihood::Gaussian => "gaussian",
        })
    }
}

impl std::str::FromStr for Likelihood {
    type Err = KrvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(Likelihood::Bernoulli),
            "gaussian" => Ok(Likelihood::Gaussian),
            other => Err(KrvError::invalid(format!("unknown likelihood {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SblConfig {
    /// Stop once the largest change of a surviving alpha is at most this.
    pub delta_alpha: f64,
    pub alpha_init: f64,
    /// Bases whose alpha reaches this value are pruned.
    pub prune_threshold: f64,
    pub max_outer_iters: usize,
    /// Max-abs change of the mode that ends the Newton iterations.
    pub irls_tol: f64,
    pub irls_max_iters: usize,
    /// First diagonal jitter tried when a Cholesky factorization fails.
    pub jitter: f64,
}

impl Default for SblConfig {
    fn default() -> Self {
        SblConfig {
            delta_alpha: 0.1,
            alpha_init: 1.0,
            prune_threshold: 1e12,
            max_outer_iters: 500,
            irls_tol: 1e-6,
            irls_max_iters: 25,
            jitter: 1e-10,
        }
    }
}

impl SblConfig {
    pub fn with_delta_alpha(delta_alpha: f64) -> Self {
        SblConfig {
            delta_alpha,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.delta_alpha) {
            return Err(KrvError::invalid("delta_alpha must be positive"));
        }
        if !positive(self.alpha_init) {
            return Err(KrvError::invalid("alpha_init must be positive"));
        }
        if !(self.prune_threshold > self.alpha_init) {
            return Err(KrvError::invalid("prune_threshold must exceed alpha_init"));
        }
        if self.max_outer_iters == 0 || self.irls_max_iters == 0 {
            return Err(KrvError::invalid("iteration caps must be positive"));
        }
        if !positive(self.irls_tol) {
            return Err(KrvError::invalid("irls_tol must be positive"));
        }
        if !(self.jitter >= 0.0) {
            return Err(KrvError::invalid("jitter must be non-negative"));
        }
        Ok(())
    }
}

/// Diagnostics of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Largest |alpha change| over the bases that survived this iteration.
    pub max_delta_alpha: f64,
    /// Active bases after pruning.
    pub active_count: usize,
    /// Range of `1 - alpha_i Sigma_ii` before pruning.
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Smallest diagonal entry of the posterior covariance.
    pub sigma_min_diag: f64,
    pub irls_converged: bool,
    /// Newton steps taken by the inner solve (1 for the gaussian case).
    pub irls_iterations: usize,
    pub jitter: f64,
}

/// A trained sparse Bayesian model over a subset of design-matrix columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SblModel {
    /// Retained basis indices into the design-matrix columns, ascending.
    pub active: Vec<usize>,
    pub weights: DVector<f64>,
    pub alphas: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub likelihood: Likelihood,
    /// Noise variance of the Gaussian likelihood; `None` for Bernoulli.
    pub noise_var: Option<f64>,
    pub history: Vec<IterationRecord>,
    /// True when the delta-alpha criterion (not the iteration cap) stopped
    /// training.
    pub converged: bool,
}

/// Output of [`SblModel::predict`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SblOutput {
    /// Bernoulli: `score = sigmoid(w . phi)`, `class = 1` iff `score >= 0.5`.
    Class { score: f64, class: usize },
    /// Gaussian: the linear prediction.
    Value(f64),
}

impl SblOutput {
    pub fn score(&self) -> f64 {
        match *self {
            SblOutput::Class { score, .. } => score,
            SblOutput::Value(v) => v,
        }
    }
}

impl SblModel {
    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Linear response `w . phi` for `phi` restricted to the active columns.
    pub fn linear(&self, phi_active: &[f64]) -> Result<f64> {
        if phi_active.len() != self.active.len() {
            return Err(KrvError::DimensionMismatch {
                expected: self.active.len(),
                found: phi_active.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(phi_active)
            .map(|(w, p)| w * p)
            .sum())
    }

    pub fn predict(&self, phi_active: &[f64]) -> Result<SblOutput> {
        let y = self.linear(phi_active)?;
        Ok(match self.likelihood {
            Likelihood::Bernoulli => {
                let score = sigmoid(y);
                SblOutput::Class {
                    score,
                    class: usize::from(score >= 0.5),
                }
            }
            Likelihood::Gaussian => SblOutput::Value(y),
        })
    }

    /// Predicts from a full design-matrix row, picking the active columns.
    pub fn predict_full(&self, phi: &[f64]) -> Result<SblOutput> {
        let restricted: Vec<f64> = self
            .active
            .iter()
            .map(|&c| {
                phi.get(c).copied().ok_or(KrvError::DimensionMismatch {
                    expected: c + 1,
                    found: phi.len(),
                })
            })
            .collect::<Result<_>>()?;
        self.predict(&restricted)
    }
}

/// Logistic sigmoid, stable for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// MacKay update `(1 - alpha Sigma_ii) / w^2`. Returns [`PRUNED`] when the
/// weight is zero or the numerator is not positive (the basis is fully
/// determined by its prior).
pub fn update_alpha(alpha_i: f64, w_hat_i: f64, sigma_ii: f64) -> f64 {
    let gamma = 1.0 - alpha_i * sigma_ii;
    if w_hat_i == 0.0 || !(gamma > 0.0) {
        return PRUNED;
    }
    gamma / (w_hat_i * w_hat_i)
}

/// Largest |curr - prev| over the positions flagged active.
pub fn delta_alpha(prev: &[f64], curr: &[f64], active: &[bool]) -> Result<f64> {
    if prev.len() != curr.len() || prev.len() != active.len() {
        return Err(KrvError::DimensionMismatch {
            expected: prev.len(),
            found: if curr.len() != prev.len() {
                curr.len()
            } else {
                active.len()
            },
        });
    }
    Ok(prev
        .iter()
        .zip(curr)
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|((p, c), _)| (c - p).abs())
        .fold(0.0, f64::max))
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn validate_inputs(h: &DMatrix<f64>, targets: &[f64], likelihood: Likelihood) -> Result<()> {
    if h.nrows() != targets.len() {
        return Err(KrvError::DimensionMismatch {
            expected: h.nrows(),
            found: targets.len(),
        });
    }
    if h.ncols() == 0 || h.nrows() == 0 {
        return Err(KrvError::invalid("empty design matrix"));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(KrvError::Numerical("non-finite design matrix".into()));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(KrvError::Numerical("non-finite targets".into()));
    }
    if likelihood == Likelihood::Bernoulli {
        if targets.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(KrvError::invalid("bernoulli targets must be 0 or 1"));
        }
        let ones = targets.iter().filter(|&&t| t == 1.0).count();
        if ones == 0 || ones == targets.len() {
            return Err(KrvError::invalid("bernoulli targets hold a single label"));
        }
    }
    Ok(())
}

struct Trainer<'a> {
    h: &'a DMatrix<f64>,
    targets: &'a [f64],
    likelihood: Likelihood,
    cfg: &'a SblConfig,
    gram: Option<DMatrix<f64>>,
    h_t: Option<DVector<f64>>,
}

impl Trainer<'_> {
    fn posterior(
        &self,
        active: &[usize],
        alphas: &[f64],
        w: &DVector<f64>,
        noise_var: f64,
        gram: Option<DMatrix<f64>>,
    ) -> Result<(posterior::Fit, Option<DMatrix<f64>>)> {
        match self.likelihood {
            Likelihood::Bernoulli => {
                let h_act = self.h.select_columns(active);
                let (fit, g) =
                    posterior::fit_bernoulli(&h_act, self.targets, alphas, w, gram, self.cfg)?;
                Ok((fit, Some(g)))
            }
            Likelihood::Gaussian => {
                let gram = self.gram.as_ref().expect("gaussian moments");
                let h_t = self.h_t.as_ref().expect("gaussian moments");
                let g = gram.select_rows(active).select_columns(active);
                let ht = h_t.select_rows(active);
                Ok((
                    posterior::fit_gaussian_moments(&g, &ht, alphas, noise_var, self.cfg)?,
                    None,
                ))
            }
        }
    }

    fn residual_sq(&self, active: &[usize], w: &DVector<f64>) -> f64 {
        let h_act = self.h.select_columns(active);
        let fit = h_act * w;
        fit.iter()
            .zip(self.targets)
            .map(|(f, t)| (t - f) * (t - f))
            .sum()
    }

    #[allow(clippy::too_many_arguments)]
    fn snapshot(
        &self,
        active: &[usize],
        alphas: &[f64],
        w: &DVector<f64>,
        noise_var: f64,
        gram: Option<DMatrix<f64>>,
        history: &[IterationRecord],
        converged: bool,
    ) -> Result<SblModel> {
        let (post, _) = self.posterior(active, alphas, w, noise_var, gram)?;
        Ok(SblModel {
            active: active.to_vec(),
            covariance: post.covariance(),
            weights: post.weights,
            alphas: DVector::from_column_slice(alphas),
            likelihood: self.likelihood,
            noise_var: (self.likelihood == Likelihood::Gaussian).then_some(noise_var),
            history: history.to_vec(),
            converged,
        })
    }
}

/// Trains one model, stopping at `cfg.delta_alpha`.
pub fn train(
    h: &DMatrix<f64>,
    targets: &[f64],
    likelihood: Likelihood,
    cfg: &SblConfig,
) -> Result<SblModel> {
    let mut models = train_path(h, targets, likelihood, cfg, &[cfg.delta_alpha])?;
    Ok(models.pop().expect("one threshold"))
}

/// Runs a single training trajectory and returns the model at which each of
/// `thresholds` would have stopped (in the order given). Every entry equals
/// `train` with `delta_alpha` set to that threshold, since a smaller
/// threshold only continues the same deterministic iteration further.
/// `cfg.delta_alpha` is ignored.
pub fn train_path(
    h: &DMatrix<f64>,
    targets: &[f64],
    likelihood: Likelihood,
    cfg: &SblConfig,
    thresholds: &[f64],
) -> Result<Vec<SblModel>> {
    cfg.validate()?;
    validate_inputs(h, targets, likelihood)?;
    if thresholds.is_empty() {
        return Ok(Vec::new());
    }
    if thresholds.iter().any(|t| !(*t > 0.0)) {
        return Err(KrvError::invalid("delta_alpha thresholds must be positive"));
    }
    // thresholds visited from the largest (stops first) to the smallest
    let mut order: Vec<usize> = (0..thresholds.len()).collect();
    order.sort_by(|&a, &b| thresholds[b].total_cmp(&thresholds[a]).then(a.cmp(&b)));

    let (gram, h_t) = match likelihood {
        Likelihood::Gaussian => {
            let t = DVector::from_column_slice(targets);
            (Some(h.tr_mul(h)), Some(h.tr_mul(&t)))
        }
        Likelihood::Bernoulli => (None, None),
    };
    let trainer = Trainer {
        h,
        targets,
        likelihood,
        cfg,
        gram,
        h_t,
    };

    let n = targets.len() as f64;
    let m = h.ncols();
    let mut active: Vec<usize> = (0..m).collect();
    let mut alphas = vec![cfg.alpha_init; m];
    let mut w = DVector::zeros(m);
    let mut noise_var = {
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        (0.1 * var).max(1e-6)
    };
    let mut history = Vec::new();
    let mut results: Vec<Option<SblModel>> = vec![None; thresholds.len()];
    let mut next = 0;

    // H'BH at the previous mode over the current active set
    let mut gram_cache: Option<DMatrix<f64>> = None;

    for _ in 0..cfg.max_outer_iters {
        let (post, gram_at_mode) =
            trainer.posterior(&active, &alphas, &w, noise_var, gram_cache.take())?;
        let k = active.len();
        let sigma_diag = post.covariance_diag();
        let mut gamma_min = f64::INFINITY;
        let mut gamma_max = f64::NEG_INFINITY;
        let mut sigma_min = f64::INFINITY;
        let mut new_alphas = Vec::with_capacity(k);
        for i in 0..k {
            let s = sigma_diag[i];
            let gamma = 1.0 - alphas[i] * s;
            gamma_min = gamma_min.min(gamma);
            gamma_max = gamma_max.max(gamma);
            sigma_min = sigma_min.min(s);
            new_alphas.push(update_alpha(alphas[i], post.weights[i], s));
        }
        if gamma_min < GAMMA_WARN {
            log::warn!("gamma {gamma_min:e} below zero; covariance is inaccurate");
        }
        if likelihood == Likelihood::Gaussian {
            let gamma_sum: f64 = (0..k)
                .map(|i| (1.0 - alphas[i] * sigma_diag[i]).clamp(0.0, 1.0))
                .sum();
            let dof = (n - gamma_sum).max(1e-6);
            noise_var = (trainer.residual_sq(&active, &post.weights) / dof).max(1e-12);
        }

        let mut keep: Vec<bool> = new_alphas
            .iter()
            .map(|&a| a < cfg.prune_threshold)
            .collect();
        let collapsed = !keep.iter().any(|&k| k);
        if collapsed {
            // keep the most relevant basis at its previous alpha
            let best = argmax_lowest(&new_alphas.iter().map(|a| -a).collect::<Vec<_>>());
            keep[best] = true;
            new_alphas[best] = alphas[best];
        }
        let change = delta_alpha(&alphas, &new_alphas, &keep)?;

        let kept: Vec<usize> = (0..k).filter(|&i| keep[i]).collect();
        active = kept.iter().map(|&i| active[i]).collect();
        alphas = kept.iter().map(|&i| new_alphas[i]).collect();
        w = DVector::from_iterator(kept.len(), kept.iter().map(|&i| post.weights[i]));
        gram_cache = gram_at_mode.map(|g| g.select_rows(&kept).select_columns(&kept));
        history.push(IterationRecord {
            max_delta_alpha: change,
            active_count: active.len(),
            gamma_min,
            gamma_max,
            sigma_min_diag: sigma_min,
            irls_converged: post.converged,
            irls_iterations: post.iterations,
            jitter: post.jitter,
        });

        if next < order.len() && (change <= thresholds[order[next]] || collapsed) {
            let model = trainer.snapshot(
                &active,
                &alphas,
                &w,
                noise_var,
                gram_cache.clone(),
                &history,
                true,
            )?;
            while next < order.len() && (change <= thresholds[order[next]] || collapsed) {
                results[order[next]] = Some(model.clone());
                next += 1;
            }
        }
        if next == order.len() {
            break;
        }
    }
    if next < order.len() {
        let model = trainer.snapshot(
            &active,
            &alphas,
            &w,
            noise_var,
            gram_cache.clone(),
            &history,
            false,
        )?;
        for &i in &order[next..] {
            results[i] = Some(model.clone());
        }
    }
    Ok(results.into_iter().map(|m| m.expect("filled")).collect())
}

/// Binary or one-vs-rest set of models sharing one design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SblEnsemble {
    pub n_classes: usize,
    /// `(class, model)`: a single model for class 1 in the binary case, one
    /// model per class present in training otherwise.
    pub models: Vec<(usize, SblModel)>,
}

impl SblEnsemble {
    pub fn likelihood(&self) -> Likelihood {
        self.models[0].1.likelihood
    }

    /// Union of active columns across the member models, ascending.
    pub fn active_union(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self
            .models
            .iter()
            .flat_map(|(_, m)| m.active.iter().copied())
            .collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    /// Per-class scores from a full design-matrix row. Classes without a
    /// model score `-inf`.
    pub fn scores(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let mut scores = vec![f64::NEG_INFINITY; self.n_classes];
        if self.n_classes == 2 && self.models.len() == 1 {
            let s = self.models[0].1.predict_full(phi)?.score();
            scores[1] = s;
            scores[0] = 1.0 - s;
            return Ok(scores);
        }
        for (class, model) in &self.models {
            scores[*class] = model.predict_full(phi)?.score();
        }
        Ok(scores)
    }

    /// Predicted class: the `>= 0.5` rule for binary problems, otherwise
    /// the highest one-vs-rest score (ties to the lowest class id).
    pub fn predict(&self, phi: &[f64]) -> Result<usize> {
        if self.n_classes == 2 && self.models.len() == 1 {
            let s = self.models[0].1.predict_full(phi)?.score();
            return Ok(usize::from(s >= 0.5));
        }
        Ok(argmax_lowest(&self.scores(phi)?))
    }
}

/// Trains a binary model (two classes) or one-vs-rest models (more classes)
/// along one trajectory per member, returning an ensemble per threshold.
pub fn train_ensemble_path(
    h: &DMatrix<f64>,
    labels: &[usize],
    n_classes: usize,
    likelihood: Likelihood,
    cfg: &SblConfig,
    thresholds: &[f64],
) -> Result<Vec<SblEnsemble>> {
    if labels.len() != h.nrows() {
        return Err(KrvError::DimensionMismatch {
            expected: h.nrows(),
            found: labels.len(),
        });
    }
    let present: Vec<usize> = (0..n_classes).filter(|c| labels.contains(c)).collect();
    if present.len() < 2 {
        return Err(KrvError::SingleClass);
    }
    let members: Vec<usize> = if n_classes == 2 { vec![1] } else { present };
    let mut per_threshold: Vec<Vec<(usize, SblModel)>> = vec![Vec::new(); thresholds.len()];
    for class in members {
        let t: Vec<f64> = labels
            .iter()
            .map(|&l| f64::from(u8::from(l == class)))
            .collect();
        let path = train_path(h, &t, likelihood, cfg, thresholds)?;
        for (slot, model) in per_threshold.iter_mut().zip(path) {
            slot.push((class, model));
        }
    }
    Ok(per_threshold
        .into_iter()
        .map(|models| SblEnsemble { n_classes, models })
        .collect())
}

pub fn train_ensemble(
    h: &DMatrix<f64>,
    labels: &[usize],
    n_classes: usize,
    likelihood: Likelihood,
    cfg: &SblConfig,
) -> Result<SblEnsemble> {
    let mut v = train_ensemble_path(h, labels, n_classes, likelihood, cfg, &[cfg.delta_alpha])?;
    Ok(v.pop().expect("one threshold"))
}
