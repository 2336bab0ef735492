//! Negative-binomial (NB2) citation regression.
//!
//! Mean model `mu = exp(b0 + x·b)` on internally standardized features with
//! variance `mu + alpha * mu^2`. Coefficients are fit by iteratively
//! reweighted least squares (working response `z = eta + (y - mu)/mu`,
//! weights `w = mu/(1 + alpha*mu)`) with an optional ridge penalty on the
//! non-intercept coefficients. The dispersion `alpha` is profiled by
//! golden-section search on a log-scale bracket [1e-8, 50] and polished by
//! Newton steps on the analytic dispersion gradient; fits with `alpha < 1e-4`
//! are reported as the Poisson limit `alpha = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::rubric::ScoreVector;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("response at row {0} is negative or non-finite")]
    InvalidResponse(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("design has no column `{0}`")]
    KeyMismatch(String),
    #[error("lambda grid is empty")]
    EmptyGrid,
}

/// Row-major feature matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    k: usize,
    values: Vec<f64>,
    column_keys: Vec<String>,
}

impl DesignMatrix {
    pub fn new(column_keys: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, RegressionError> {
        let k = column_keys.len();
        let n = rows.len();
        let mut values = Vec::with_capacity(n * k);
        for row in &rows {
            if row.len() != k {
                return Err(RegressionError::DimensionMismatch { expected: k, actual: row.len() });
            }
            values.extend_from_slice(row);
        }
        Ok(DesignMatrix { n, k, values, column_keys })
    }

    /// Build a design from per-paper score vectors, one column per rubric key
    /// in the given order. Every vector must carry every key.
    pub fn from_scores(scores: &[ScoreVector], keys: &[String]) -> Result<Self, RegressionError> {
        let mut rows = Vec::with_capacity(scores.len());
        for sv in scores {
            let mut row = Vec::with_capacity(keys.len());
            for key in keys {
                match sv.scores.get(key) {
                    Some(v) => row.push(*v),
                    None => return Err(RegressionError::KeyMismatch(key.clone())),
                }
            }
            rows.push(row);
        }
        DesignMatrix::new(keys.to_vec(), rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn column_keys(&self) -> &[String] {
        &self.column_keys
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }
}

/// Fitted NB2 model. Coefficients live on the standardized-feature scale;
/// `means`/`stds` (over the retained columns) map raw features into it, and
/// `coefficients_raw` maps the model back to the raw scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBModel {
    pub column_keys: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub alpha: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub lambda: f64,
}

impl NBModel {
    /// Predicted citation rate for one raw feature row (retained columns,
    /// model order).
    pub fn predict(&self, x: &[f64]) -> Result<f64, RegressionError> {
        if x.len() != self.coefficients.len() {
            return Err(RegressionError::DimensionMismatch {
                expected: self.coefficients.len(),
                actual: x.len(),
            });
        }
        let mut eta = self.intercept;
        for j in 0..x.len() {
            eta += self.coefficients[j] * (x[j] - self.means[j]) / self.stds[j];
        }
        Ok(eta.clamp(-700.0, 700.0).exp())
    }

    /// Predict every row of a design, matching columns by key (the design may
    /// carry extra columns, e.g. ones the fit dropped as constant).
    pub fn predict_design(&self, design: &DesignMatrix) -> Result<Vec<f64>, RegressionError> {
        let indices: Vec<usize> = self
            .column_keys
            .iter()
            .map(|key| {
                design
                    .column_keys
                    .iter()
                    .position(|c| c == key)
                    .ok_or_else(|| RegressionError::KeyMismatch(key.clone()))
            })
            .collect::<Result<_, _>>()?;
        let mut out = Vec::with_capacity(design.n());
        let mut buf = vec![0.0; indices.len()];
        for i in 0..design.n() {
            let row = design.row(i);
            for (slot, &j) in buf.iter_mut().zip(&indices) {
                *slot = row[j];
            }
            out.push(self.predict(&buf)?);
        }
        Ok(out)
    }

    /// Intercept and coefficients on the raw (unstandardized) feature scale.
    pub fn coefficients_raw(&self) -> (f64, Vec<f64>) {
        let mut intercept = self.intercept;
        let mut raw = Vec::with_capacity(self.coefficients.len());
        for j in 0..self.coefficients.len() {
            let b = self.coefficients[j] / self.stds[j];
            intercept -= b * self.means[j];
            raw.push(b);
        }
        (intercept, raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Unpenalized log-likelihood at the fitted parameters.
    pub log_likelihood: f64,
    /// IRLS iterations of the final coefficient fit.
    pub iterations: usize,
    pub converged: bool,
    /// Constant columns removed before fitting.
    pub dropped_columns: Vec<String>,
    /// Max-norm of the (penalized) score equations at the solution.
    pub gradient_max_norm: f64,
}

const ALPHA_MIN: f64 = 1e-8;
const ALPHA_MAX: f64 = 50.0;
const ALPHA_POISSON_CUTOFF: f64 = 1e-4;
const MAX_IRLS: usize = 200;
const LL_REL_TOL: f64 = 1e-8;
const GRAD_TOL: f64 = 1e-6;

/// Default ridge grid used by the rubric-search pipeline.
pub fn default_lambda_grid() -> Vec<f64> {
    vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1]
}

/// Standardized working copy of the design plus the response.
struct Prepared {
    n: usize,
    p: usize, // retained columns + 1 intercept slot in solve dimension
    x: Vec<f64>, // n * (p-1), standardized, row-major
    y: Vec<f64>,
    ln_gamma_y1: Vec<f64>,
    retained: Vec<usize>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

fn prepare(design: &DesignMatrix, y: &[f64]) -> Result<(Prepared, Vec<String>), RegressionError> {
    let n = design.n();
    if n == 0 {
        return Err(RegressionError::EmptyInput);
    }
    if y.len() != n {
        return Err(RegressionError::DimensionMismatch { expected: n, actual: y.len() });
    }
    for (i, &v) in y.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(RegressionError::InvalidResponse(i));
        }
    }
    let k = design.k();
    let mut means = vec![0.0; k];
    for i in 0..n {
        for (j, v) in design.row(i).iter().enumerate() {
            means[j] += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut vars = vec![0.0; k];
    for i in 0..n {
        for (j, v) in design.row(i).iter().enumerate() {
            let d = v - means[j];
            vars[j] += d * d;
        }
    }
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    let mut kept_means = Vec::new();
    let mut kept_stds = Vec::new();
    for j in 0..k {
        let sd = (vars[j] / n as f64).sqrt();
        if sd < 1e-12 {
            dropped.push(design.column_keys()[j].clone());
        } else {
            retained.push(j);
            kept_means.push(means[j]);
            kept_stds.push(sd);
        }
    }
    let p = retained.len() + 1;
    if n < p {
        return Err(RegressionError::DegenerateDesign(format!(
            "{n} rows cannot identify {p} parameters"
        )));
    }
    let mut x = Vec::with_capacity(n * retained.len());
    for i in 0..n {
        let row = design.row(i);
        for (slot, &j) in retained.iter().enumerate() {
            x.push((row[j] - kept_means[slot]) / kept_stds[slot]);
        }
    }
    let ln_gamma_y1 = y.iter().map(|&v| ln_gamma(v + 1.0)).collect();
    Ok((
        Prepared {
            n,
            p,
            x,
            y: y.to_vec(),
            ln_gamma_y1,
            retained,
            means: kept_means,
            stds: kept_stds,
        },
        dropped,
    ))
}

impl Prepared {
    fn eta(&self, beta: &[f64], out: &mut [f64]) {
        let kk = self.p - 1;
        for i in 0..self.n {
            let mut e = beta[0];
            let row = &self.x[i * kk..(i + 1) * kk];
            for j in 0..kk {
                e += beta[j + 1] * row[j];
            }
            out[i] = e.clamp(-30.0, 30.0);
        }
    }

    /// `lnGamma(y + r) - lnGamma(r)`, computed as an exact sum of logs for
    /// integer responses (citation counts), which stays accurate even when
    /// `r = 1/alpha` is enormous near the Poisson limit.
    fn gamma_ratio(&self, y: f64, r: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        if y.fract() == 0.0 && y <= 10_000.0 {
            let mut acc = 0.0;
            let mut i = 0.0;
            while i < y {
                acc += (r + i).ln();
                i += 1.0;
            }
            acc
        } else {
            ln_gamma(y + r) - ln_gamma(r)
        }
    }

    /// `digamma(y + r) - digamma(r)` via the same exact-sum trick.
    fn digamma_ratio(&self, y: f64, r: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        if y.fract() == 0.0 && y <= 10_000.0 {
            let mut acc = 0.0;
            let mut i = 0.0;
            while i < y {
                acc += 1.0 / (r + i);
                i += 1.0;
            }
            acc
        } else {
            // Asymptotic fallback: digamma(x) ~ ln x - 1/(2x) for the ranges
            // this path can see (y large, r bounded away from zero).
            let dg = |x: f64| x.ln() - 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x);
            dg(y + r) - dg(r)
        }
    }

    fn log_likelihood(&self, eta: &[f64], alpha: f64) -> f64 {
        let mut ll = 0.0;
        if alpha == 0.0 {
            for i in 0..self.n {
                let mu = eta[i].exp();
                ll += self.y[i] * eta[i] - mu - self.ln_gamma_y1[i];
            }
        } else {
            let r = 1.0 / alpha;
            for i in 0..self.n {
                let mu = eta[i].exp();
                let y = self.y[i];
                ll += self.gamma_ratio(y, r) - self.ln_gamma_y1[i] - r * (mu / r).ln_1p()
                    + y * (mu.ln() - (r + mu).ln());
            }
        }
        ll
    }

    fn penalty(&self, beta: &[f64], lambda: f64) -> f64 {
        0.5 * lambda * beta[1..].iter().map(|b| b * b).sum::<f64>()
    }

    /// Penalized score vector: `sum (y-mu)/(1+alpha*mu) * x_j - lambda*beta_j`
    /// for non-intercept coordinates.
    fn gradient(&self, beta: &[f64], eta: &[f64], alpha: f64, lambda: f64) -> Vec<f64> {
        let kk = self.p - 1;
        let mut g = vec![0.0; self.p];
        for i in 0..self.n {
            let mu = eta[i].exp();
            let s = (self.y[i] - mu) / (1.0 + alpha * mu);
            g[0] += s;
            let row = &self.x[i * kk..(i + 1) * kk];
            for j in 0..kk {
                g[j + 1] += s * row[j];
            }
        }
        for j in 1..self.p {
            g[j] -= lambda * beta[j];
        }
        g
    }

    /// Derivative of the log-likelihood in alpha at fixed coefficients.
    fn alpha_gradient(&self, eta: &[f64], alpha: f64) -> f64 {
        let r = 1.0 / alpha;
        let mut dll_dr = 0.0;
        for i in 0..self.n {
            let mu = eta[i].exp();
            let y = self.y[i];
            dll_dr += self.digamma_ratio(y, r) - (mu / r).ln_1p() - (y - mu) / (r + mu);
        }
        // d ll / d alpha = d ll / d r * (-r^2)
        -dll_dr * r * r
    }

    /// One IRLS run at fixed alpha. Returns the iteration count and whether
    /// the run met both the relative log-likelihood and gradient tolerances.
    fn irls(
        &self,
        beta: &mut Vec<f64>,
        alpha: f64,
        lambda: f64,
        max_iter: usize,
    ) -> Result<(usize, bool), RegressionError> {
        let kk = self.p - 1;
        let mut eta = vec![0.0; self.n];
        self.eta(beta, &mut eta);
        let mut pll = self.log_likelihood(&eta, alpha) - self.penalty(beta, lambda);
        let mut iterations = 0;
        let mut converged = false;
        for _ in 0..max_iter {
            iterations += 1;
            let mut xtwx = DMatrix::<f64>::zeros(self.p, self.p);
            let mut xtwz = DVector::<f64>::zeros(self.p);
            for i in 0..self.n {
                let mu = eta[i].exp();
                let w = mu / (1.0 + alpha * mu);
                let z = eta[i] + (self.y[i] - mu) / mu;
                let row = &self.x[i * kk..(i + 1) * kk];
                // Intercept coordinate first, features after.
                xtwx[(0, 0)] += w;
                xtwz[0] += w * z;
                for a in 0..kk {
                    let xa = row[a];
                    xtwx[(0, a + 1)] += w * xa;
                    xtwz[a + 1] += w * z * xa;
                    for b in a..kk {
                        xtwx[(a + 1, b + 1)] += w * xa * row[b];
                    }
                }
            }
            for a in 0..self.p {
                for b in 0..a {
                    xtwx[(a, b)] = xtwx[(b, a)];
                }
            }
            for j in 1..self.p {
                xtwx[(j, j)] += lambda;
            }
            let proposal = xtwx
                .clone()
                .cholesky()
                .map(|c| c.solve(&xtwz))
                .or_else(|| xtwx.lu().solve(&xtwz))
                .ok_or_else(|| {
                    RegressionError::DegenerateDesign("normal equations are singular".into())
                })?;
            let proposal: Vec<f64> = proposal.iter().copied().collect();
            // Step-halving keeps the penalized likelihood monotone.
            let old = beta.clone();
            let mut t = 1.0;
            let mut new_pll;
            loop {
                for j in 0..self.p {
                    beta[j] = old[j] + t * (proposal[j] - old[j]);
                }
                self.eta(beta, &mut eta);
                new_pll = self.log_likelihood(&eta, alpha) - self.penalty(beta, lambda);
                if new_pll.is_finite() && new_pll >= pll - 1e-12 * (1.0 + pll.abs()) {
                    break;
                }
                t *= 0.5;
                if t < 1e-8 {
                    *beta = old.clone();
                    self.eta(beta, &mut eta);
                    new_pll = pll;
                    break;
                }
            }
            let improved = (new_pll - pll).abs();
            let ll_done = improved <= LL_REL_TOL * (1.0 + pll.abs());
            pll = new_pll;
            if ll_done {
                let g = self.gradient(beta, &eta, alpha, lambda);
                let gnorm = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if gnorm < GRAD_TOL {
                    converged = true;
                    break;
                }
            }
        }
        Ok((iterations, converged))
    }

    fn penalized_ll(&self, beta: &[f64], alpha: f64, lambda: f64) -> f64 {
        let mut eta = vec![0.0; self.n];
        self.eta(beta, &mut eta);
        self.log_likelihood(&eta, alpha) - self.penalty(beta, lambda)
    }
}

/// Fit the NB2 model with ridge strength `lambda`. Constant columns are
/// dropped (and reported); non-convergence is reported in the `FitReport`
/// rather than returned as an error.
pub fn fit(
    design: &DesignMatrix,
    y: &[f64],
    lambda: f64,
) -> Result<(NBModel, FitReport), RegressionError> {
    let (prep, dropped) = prepare(design, y)?;
    let mean_y = prep.y.iter().sum::<f64>() / prep.n as f64;
    let mut beta = vec![0.0; prep.p];
    beta[0] = mean_y.max(1e-8).ln();

    // Profile the dispersion by golden-section search on ln(alpha). The
    // profile reuses the running beta as a warm start, which keeps each inner
    // IRLS to a handful of iterations.
    let profile = |ln_alpha: f64, beta: &mut Vec<f64>| -> Result<f64, RegressionError> {
        let alpha = ln_alpha.exp();
        prep.irls(beta, alpha, lambda, 60)?;
        Ok(prep.penalized_ll(beta, alpha, lambda))
    };
    let (mut lo, mut hi) = (ALPHA_MIN.ln(), ALPHA_MAX.ln());
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut m1 = hi - inv_phi * (hi - lo);
    let mut m2 = lo + inv_phi * (hi - lo);
    let mut f1 = profile(m1, &mut beta)?;
    let mut f2 = profile(m2, &mut beta)?;
    for _ in 0..90 {
        if hi - lo < 1e-10 {
            break;
        }
        if f1 < f2 {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + inv_phi * (hi - lo);
            f2 = profile(m2, &mut beta)?;
        } else {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - inv_phi * (hi - lo);
            f1 = profile(m1, &mut beta)?;
        }
    }
    let mut alpha = (0.5 * (lo + hi)).exp();

    let mut iterations;
    let mut irls_converged;
    let mut alpha_converged;
    if alpha < ALPHA_POISSON_CUTOFF {
        alpha = 0.0;
        let (it, conv) = prep.irls(&mut beta, alpha, lambda, MAX_IRLS)?;
        iterations = it;
        irls_converged = conv;
        alpha_converged = true;
    } else {
        // Newton polish on the joint stationarity: alternate coefficient
        // refits with dispersion steps on the analytic gradient.
        let (it, conv) = prep.irls(&mut beta, alpha, lambda, MAX_IRLS)?;
        iterations = it;
        irls_converged = conv;
        alpha_converged = false;
        let mut eta = vec![0.0; prep.n];
        for _ in 0..40 {
            prep.eta(&beta, &mut eta);
            let g = prep.alpha_gradient(&eta, alpha);
            if g.abs() < GRAD_TOL * 0.1 {
                alpha_converged = true;
                break;
            }
            let delta = (alpha * 1e-5).max(1e-10);
            let g_hi = prep.alpha_gradient(&eta, (alpha + delta).min(ALPHA_MAX));
            let g_lo = prep.alpha_gradient(&eta, (alpha - delta).max(ALPHA_MIN));
            let h = (g_hi - g_lo) / ((alpha + delta).min(ALPHA_MAX) - (alpha - delta).max(ALPHA_MIN));
            let step = if h < 0.0 { -g / h } else { g.signum() * 0.1 * alpha };
            let mut new_alpha = (alpha + step).clamp(ALPHA_MIN, ALPHA_MAX);
            let old_pll = prep.penalized_ll(&beta, alpha, lambda);
            // Backtrack if the step hurts the likelihood.
            let mut tries = 0;
            while prep.penalized_ll(&beta, new_alpha, lambda) < old_pll - 1e-12 && tries < 20 {
                new_alpha = alpha + 0.5 * (new_alpha - alpha);
                tries += 1;
            }
            if (new_alpha - alpha).abs() < 1e-14 {
                alpha_converged = g.abs() < GRAD_TOL;
                break;
            }
            alpha = new_alpha;
            let (it, conv) = prep.irls(&mut beta, alpha, lambda, MAX_IRLS)?;
            iterations = it;
            irls_converged = conv;
        }
        if alpha < ALPHA_POISSON_CUTOFF {
            alpha = 0.0;
            let (it, conv) = prep.irls(&mut beta, alpha, lambda, MAX_IRLS)?;
            iterations = it;
            irls_converged = conv;
            alpha_converged = true;
        }
    }

    let mut eta = vec![0.0; prep.n];
    prep.eta(&beta, &mut eta);
    let ll = prep.log_likelihood(&eta, alpha);
    let g = prep.gradient(&beta, &eta, if alpha == 0.0 { 0.0 } else { alpha }, lambda);
    let mut gnorm = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if alpha > 0.0 && alpha < ALPHA_MAX * 0.999 {
        gnorm = gnorm.max(prep.alpha_gradient(&eta, alpha).abs());
    }

    let column_keys: Vec<String> = prep
        .retained
        .iter()
        .map(|&j| design.column_keys()[j].clone())
        .collect();
    let model = NBModel {
        column_keys,
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        alpha,
        means: prep.means,
        stds: prep.stds,
        lambda,
    };
    let report = FitReport {
        log_likelihood: ll,
        iterations,
        converged: irls_converged && alpha_converged && gnorm < GRAD_TOL,
        dropped_columns: dropped,
        gradient_max_norm: gnorm,
    };
    Ok((model, report))
}

/// Mean absolute error between predictions and observations.
pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64, RegressionError> {
    if predicted.len() != actual.len() {
        return Err(RegressionError::DimensionMismatch {
            expected: actual.len(),
            actual: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(RegressionError::EmptyInput);
    }
    Ok(predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / predicted.len() as f64)
}

/// The constant-baseline predictor: the training-set mean.
pub fn constant_baseline(y_train: &[f64]) -> Result<f64, RegressionError> {
    if y_train.is_empty() {
        return Err(RegressionError::EmptyInput);
    }
    Ok(y_train.iter().sum::<f64>() / y_train.len() as f64)
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub lambda: f64,
    pub model: NBModel,
    pub report: FitReport,
    pub val_mae: f64,
    /// Validation MAE for every grid point, in evaluation order.
    pub trace: Vec<(f64, f64)>,
}

/// Fit once per ridge strength and keep the best validation MAE. The grid is
/// evaluated in ascending order and ties keep the smaller lambda.
pub fn grid_search(
    train: &DesignMatrix,
    y_train: &[f64],
    val: &DesignMatrix,
    y_val: &[f64],
    lambda_grid: &[f64],
) -> Result<GridSearchResult, RegressionError> {
    if lambda_grid.is_empty() {
        return Err(RegressionError::EmptyGrid);
    }
    let mut grid: Vec<f64> = lambda_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    let mut best: Option<GridSearchResult> = None;
    let mut trace = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let (model, report) = fit(train, y_train, lambda)?;
        let pred = model.predict_design(val)?;
        let val_mae = mae(&pred, y_val)?;
        trace.push((lambda, val_mae));
        let better = match &best {
            None => true,
            Some(b) => val_mae < b.val_mae,
        };
        if better {
            best = Some(GridSearchResult { lambda, model, report, val_mae, trace: Vec::new() });
        }
    }
    let mut result = best.expect("grid is non-empty");
    result.trace = trace;
    Ok(result)
}
