//! Posterior computations for a fixed set of hyperparameters: the Laplace
//! mode of the Bernoulli model (Newton/IRLS) and the closed-form Gaussian
//! posterior.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{sigmoid, SblConfig};
use crate::error::{KrvError, Result};

const MAX_JITTER: f64 = 1e-4;
const MAX_STEP_HALVINGS: usize = 30;

/// Posterior mode and covariance over the active bases.
#[derive(Debug, Clone)]
pub struct PosteriorMode {
    pub weights: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// False when the Newton iterations hit `irls_max_iters`.
    pub converged: bool,
    pub iterations: usize,
    /// Diagonal jitter that was needed to factor the final Hessian.
    pub jitter: f64,
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `H^T diag(beta) H`. Rows of `H` are scaled by `sqrt(beta)` into a
/// zero-padded row-major copy and the lower triangle is accumulated in 4x8
/// blocks, each entry summed over rows in order. Lane-wise vectorization
/// does not reorder any sum, so the result is the same on every target; it
/// is exactly symmetric.
pub(crate) fn weighted_gram(h: &DMatrix<f64>, beta: &[f64]) -> DMatrix<f64> {
    let (n, m) = h.shape();
    let mp = m.div_ceil(8) * 8;
    SCRATCH.with_borrow_mut(|rows| {
        rows.clear();
        rows.resize(n * mp, 0.0);
        let scale: Vec<f64> = beta.iter().map(|b| b.sqrt()).collect();
        for (c, col) in h.as_slice().chunks_exact(n.max(1)).enumerate().take(m) {
            for (r, (v, s)) in col.iter().zip(&scale).enumerate() {
                rows[r * mp + c] = v * s;
            }
        }
        let mut out = DMatrix::zeros(m, m);
        gram_blocks(rows, n, mp, m, out.as_mut_slice());
        out
    })
}

thread_local! {
    static SCRATCH: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// Fills the column-major `m x m` matrix `out` from padded rows of width
/// `mp`.
fn gram_blocks(rows: &[f64], n: usize, mp: usize, m: usize, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { gram_blocks_avx2(rows, n, mp, m, out) };
            return;
        }
    }
    gram_blocks_generic(rows, n, mp, m, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gram_blocks_avx2(rows: &[f64], n: usize, mp: usize, m: usize, out: &mut [f64]) {
    gram_blocks_generic(rows, n, mp, m, out);
}

#[inline(always)]
fn gram_blocks_generic(rows: &[f64], n: usize, mp: usize, m: usize, out: &mut [f64]) {
    for ib in (0..m).step_by(4) {
        for jb in (0..ib + 4).step_by(8) {
            let mut acc = [[0.0f64; 8]; 4];
            for r in 0..n {
                let row = &rows[r * mp..(r + 1) * mp];
                let b: &[f64; 8] = row[jb..jb + 8].try_into().expect("padded row");
                for (ii, accrow) in acc.iter_mut().enumerate() {
                    let a = row[ib + ii];
                    for (x, bv) in accrow.iter_mut().zip(b) {
                        *x += a * bv;
                    }
                }
            }
            for (ii, accrow) in acc.iter().enumerate() {
                let i = ib + ii;
                for (jj, &v) in accrow.iter().enumerate() {
                    let j = jb + jj;
                    if j <= i && i < m {
                        out[j * m + i] = v;
                        out[i * m + j] = v;
                    }
                }
            }
        }
    }
}

/// Lower Cholesky factor of the symmetric matrix `a` (column-major), or
/// `None` when a pivot is not positive. Row-oriented: `L[i][j]` is `a[i][j]`
/// minus a dot product of rows `i` and `j`, summed in four fixed lanes.
fn cholesky_rows(a: &DMatrix<f64>, shift: f64) -> Option<DMatrix<f64>> {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            return unsafe { cholesky_rows_avx2(a, shift) };
        }
    }
    cholesky_rows_generic(a, shift)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn cholesky_rows_avx2(a: &DMatrix<f64>, shift: f64) -> Option<DMatrix<f64>> {
    cholesky_rows_generic(a, shift)
}

#[inline(always)]
fn cholesky_rows_generic(a: &DMatrix<f64>, shift: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let src = a.as_slice();
    // row-major lower triangle; `a` is symmetric, so its column i (read
    // down to the diagonal) is row i
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        let (done, row_i) = l.split_at_mut(i * n);
        let row_i = &mut row_i[..n];
        row_i[..=i].copy_from_slice(&src[i * n..i * n + i + 1]);
        row_i[i] += shift;
        for j in 0..i {
            let row_j = &done[j * n..j * n + j];
            let v = (row_i[j] - dot(&row_i[..j], row_j)) / done[j * n + j];
            row_i[j] = v;
        }
        let d = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        row_i[i] = d.sqrt();
    }
    // row-major lower is column-major upper; transpose into place
    let mut out = DMatrix::zeros(n, n);
    let o = out.as_mut_slice();
    for i in 0..n {
        for j in 0..=i {
            o[j * n + i] = l[i * n + j];
        }
    }
    Some(out)
}

/// Dot product in a fixed summation order: sixteen independent lanes over
/// whole blocks of 16, then four lanes over blocks of 4, then the scalar
/// tail. Independent lanes keep the adds off one dependency chain.
#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let wide = n - n % 16;
    let mut acc = [0.0f64; 16];
    for (x, y) in a[..wide].chunks_exact(16).zip(b[..wide].chunks_exact(16)) {
        for k in 0..16 {
            acc[k] += x[k] * y[k];
        }
    }
    let narrow = wide + (n - wide) / 4 * 4;
    let mut lanes = [0.0f64; 4];
    for (x, y) in a[wide..narrow]
        .chunks_exact(4)
        .zip(b[wide..narrow].chunks_exact(4))
    {
        for k in 0..4 {
            lanes[k] += x[k] * y[k];
        }
    }
    for k in 0..4 {
        lanes[k] += (acc[k] + acc[k + 4]) + (acc[k + 8] + acc[k + 12]);
    }
    let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (x, y) in a[narrow..].iter().zip(&b[narrow..]) {
        s += x * y;
    }
    s
}

/// Cholesky factor of `m`, adding `jitter` to the diagonal (doubling up to
/// 1e-4) when the plain factorization fails.
pub(crate) fn cholesky_jittered(
    m: &DMatrix<f64>,
    jitter: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(l) = cholesky_rows(m, 0.0) {
        return Ok((Cholesky::pack_dirty(l), 0.0));
    }
    let mut j = jitter;
    while j > 0.0 && j <= MAX_JITTER {
        if let Some(l) = cholesky_rows(m, j) {
            return Ok((Cholesky::pack_dirty(l), j));
        }
        j *= 2.0;
    }
    Err(KrvError::Numerical(format!(
        "matrix of order {} is not positive definite even with jitter",
        m.nrows()
    )))
}

/// Posterior mean plus the Cholesky factor of the posterior precision.
pub(crate) struct Fit {
    pub weights: DVector<f64>,
    pub factor: Cholesky<f64, Dyn>,
    pub converged: bool,
    pub iterations: usize,
    pub jitter: f64,
}

impl Fit {
    /// Full covariance, symmetrized.
    pub fn covariance(&self) -> DMatrix<f64> {
        let inv = self.factor.inverse();
        (&inv + inv.transpose()) * 0.5
    }

    /// Diagonal of the covariance: column norms of `L^-1`.
    pub fn covariance_diag(&self) -> Vec<f64> {
        let l = self.factor.l_dirty();
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2, checked just above.
                return unsafe { inverse_column_norms_avx2(l.as_slice(), l.nrows()) };
            }
        }
        inverse_column_norms(l.as_slice(), l.nrows())
    }

    fn into_mode(self) -> PosteriorMode {
        PosteriorMode {
            covariance: self.covariance(),
            weights: self.weights,
            converged: self.converged,
            iterations: self.iterations,
            jitter: self.jitter,
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn inverse_column_norms_avx2(l: &[f64], m: usize) -> Vec<f64> {
    inverse_column_norms(l, m)
}

/// Squared column norms of `L^-1` for the column-major lower factor `l`,
/// by forward substitution on each unit vector.
#[inline(always)]
fn inverse_column_norms(l: &[f64], m: usize) -> Vec<f64> {
    let mut diag = vec![0.0; m];
    let mut x = vec![0.0; m];
    for (i, d) in diag.iter_mut().enumerate() {
        // x[..i] stays zero for e_i
        x[i..].iter_mut().for_each(|v| *v = 0.0);
        x[i] = 1.0;
        for c in i..m {
            let col = &l[c * m..(c + 1) * m];
            let xc = x[c] / col[c];
            *d += xc * xc;
            for (xr, lr) in x[c + 1..].iter_mut().zip(&col[c + 1..]) {
                *xr -= lr * xc;
            }
        }
    }
    diag
}

fn check_problem(h: &DMatrix<f64>, targets: &[f64], alphas: &[f64]) -> Result<()> {
    if h.ncols() != alphas.len() {
        return Err(KrvError::DimensionMismatch {
            expected: h.ncols(),
            found: alphas.len(),
        });
    }
    if h.nrows() != targets.len() {
        return Err(KrvError::DimensionMismatch {
            expected: h.nrows(),
            found: targets.len(),
        });
    }
    if alphas.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(KrvError::invalid(
            "hyperparameters must be positive and finite",
        ));
    }
    Ok(())
}

/// Penalized Bernoulli log-likelihood `sum(t y - softplus(y)) - w'Aw/2`
/// given the linear predictor `y = H w`.
fn objective_at(y: &DVector<f64>, targets: &[f64], alphas: &[f64], w: &DVector<f64>) -> f64 {
    let data: f64 = y
        .iter()
        .zip(targets)
        .map(|(yi, ti)| ti * yi - softplus(*yi))
        .sum();
    let prior: f64 = w.iter().zip(alphas).map(|(wi, a)| a * wi * wi).sum();
    data - 0.5 * prior
}

/// Laplace mode of the Bernoulli posterior starting from `w = 0`.
pub fn posterior_mode(
    h: &DMatrix<f64>,
    targets: &[f64],
    alphas: &[f64],
    cfg: &SblConfig,
) -> Result<PosteriorMode> {
    let start = DVector::zeros(h.ncols());
    posterior_mode_from(h, targets, alphas, &start, cfg)
}

/// Laplace mode of the Bernoulli posterior by damped Newton steps (IRLS),
/// warm-started at `start`. The covariance is `(H'BH + A)^-1` with `B`
/// evaluated at the returned mode.
pub fn posterior_mode_from(
    h: &DMatrix<f64>,
    targets: &[f64],
    alphas: &[f64],
    start: &DVector<f64>,
    cfg: &SblConfig,
) -> Result<PosteriorMode> {
    check_problem(h, targets, alphas)?;
    Ok(fit_bernoulli(h, targets, alphas, start, None, cfg)?
        .0
        .into_mode())
}

/// `H'BH` with `B` evaluated at the linear predictor `y = H w`.
fn bernoulli_gram(h: &DMatrix<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let beta: Vec<f64> = y
        .iter()
        .map(|&v| {
            let p = sigmoid(v);
            p * (1.0 - p)
        })
        .collect();
    weighted_gram(h, &beta)
}

fn add_diagonal(gram: &DMatrix<f64>, alphas: &[f64]) -> DMatrix<f64> {
    let mut m = gram.clone();
    for (i, a) in alphas.iter().enumerate() {
        m[(i, i)] += a;
    }
    m
}

/// Refresh the Newton factor when the contraction ratio of successive
/// steps exceeds this.
const SLOW_CONTRACTION: f64 = 0.25;

/// Damped IRLS. `start_gram` (approximately `H'B(start)H`, e.g. the gram
/// at the previous mode) seeds the Newton factor, which is then reused
/// across steps and refreshed at the current iterate whenever convergence
/// slows. The mode is the same as with full Newton steps; only the work
/// differs. Returns the fit and `H'BH` at the mode.
pub(crate) fn fit_bernoulli(
    h: &DMatrix<f64>,
    targets: &[f64],
    alphas: &[f64],
    start: &DVector<f64>,
    start_gram: Option<DMatrix<f64>>,
    cfg: &SblConfig,
) -> Result<(Fit, DMatrix<f64>)> {
    if start.len() != h.ncols() {
        return Err(KrvError::DimensionMismatch {
            expected: h.ncols(),
            found: start.len(),
        });
    }
    let t = DVector::from_column_slice(targets);
    let a = DVector::from_column_slice(alphas);
    let mut w = start.clone();
    let mut y = h * &w;
    let mut objective = objective_at(&y, targets, alphas, &w);
    let gram = start_gram.unwrap_or_else(|| bernoulli_gram(h, &y));
    let mut factor = cholesky_jittered(&add_diagonal(&gram, alphas), cfg.jitter)?.0;
    let mut fresh = true;
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.irls_max_iters {
        iterations += 1;
        let resid = DVector::from_iterator(
            y.len(),
            t.iter().zip(y.iter()).map(|(ti, yi)| ti - sigmoid(*yi)),
        );
        let grad = h.tr_mul(&resid) - a.component_mul(&w);
        let step = factor.solve(&grad);
        if step.iter().any(|v| !v.is_finite()) {
            return Err(KrvError::Numerical("non-finite Newton step".into()));
        }

        let h_step = h * &step;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_STEP_HALVINGS {
            let candidate = &w + &step * lambda;
            let y_c = &y + &h_step * lambda;
            let obj = objective_at(&y_c, targets, alphas, &candidate);
            if obj >= objective {
                accepted = Some((candidate, y_c, obj));
                break;
            }
            lambda *= 0.5;
        }
        let Some((next, y_next, obj)) = accepted else {
            if fresh {
                // no ascent direction left at machine precision
                converged = true;
                break;
            }
            factor =
                cholesky_jittered(&add_diagonal(&bernoulli_gram(h, &y), alphas), cfg.jitter)?.0;
            fresh = true;
            continue;
        };
        let change = (&next - &w).amax();
        w = next;
        y = y_next;
        objective = obj;
        if change < cfg.irls_tol {
            converged = true;
            break;
        }
        if change > SLOW_CONTRACTION * last_change {
            factor =
                cholesky_jittered(&add_diagonal(&bernoulli_gram(h, &y), alphas), cfg.jitter)?.0;
            fresh = true;
        } else {
            fresh = false;
        }
        last_change = change;
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(KrvError::Numerical("non-finite posterior mode".into()));
    }
    let gram = bernoulli_gram(h, &y);
    let (factor, jitter) = cholesky_jittered(&add_diagonal(&gram, alphas), cfg.jitter)?;
    Ok((
        Fit {
            weights: w,
            factor,
            converged,
            iterations,
            jitter,
        },
        gram,
    ))
}

/// Closed-form Gaussian-likelihood posterior given the precomputed
/// `H'H` and `H't` restricted to the active bases.
pub(crate) fn fit_gaussian_moments(
    gram: &DMatrix<f64>,
    h_t: &DVector<f64>,
    alphas: &[f64],
    noise_var: f64,
    cfg: &SblConfig,
) -> Result<Fit> {
    let precision = 1.0 / noise_var;
    let mut m = gram * precision;
    for i in 0..m.nrows() {
        m[(i, i)] += alphas[i];
    }
    let (factor, jitter) = cholesky_jittered(&m, cfg.jitter)?;
    let weights = factor.solve(&(h_t * precision));
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(KrvError::Numerical("non-finite posterior mean".into()));
    }
    Ok(Fit {
        weights,
        factor,
        converged: true,
        iterations: 1,
        jitter,
    })
}

/// Gaussian-likelihood posterior: `Sigma = (H'H / s2 + A)^-1`,
/// `mean = Sigma H't / s2`.
pub fn gaussian_posterior(
    h: &DMatrix<f64>,
    targets: &[f64],
    alphas: &[f64],
    noise_var: f64,
    cfg: &SblConfig,
) -> Result<PosteriorMode> {
    check_problem(h, targets, alphas)?;
    if !(noise_var > 0.0) {
        return Err(KrvError::invalid("noise variance must be positive"));
    }
    let t = DVector::from_column_slice(targets);
    Ok(fit_gaussian_moments(&h.tr_mul(h), &h.tr_mul(&t), alphas, noise_var, cfg)?.into_mode())
}
