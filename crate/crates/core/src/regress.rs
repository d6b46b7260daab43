//! Linear regression heads: LASSO by cyclic coordinate descent, closed-form
//! ridge, and linear epsilon-insensitive SVR by averaged subgradient descent.
//!
//! Objective conventions, with `r = y - X w - b` and the bias unpenalized:
//!
//! * LASSO: `(1 / 2N) |r|^2 + lambda |w|_1`
//! * ridge: `(1 / 2N) |r|^2 + (lambda / 2) |w|^2`, i.e. `(Xc'Xc + N lambda I) w = Xc'yc`
//! * SVR: `(1/2) |w|^2 + C sum_i max(0, |r_i| - epsilon)`

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::cv::FoldPlan;

pub const LASSO_TOL: f64 = 1e-7;
pub const LASSO_MAX_SWEEPS: usize = 10_000;
pub const SVR_ITERATIONS: usize = 20_000;
pub const SVR_CHECKPOINT: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Lasso,
    Ridge,
    Svr,
}

impl RegressorKind {
    pub fn label(self) -> &'static str {
        match self {
            RegressorKind::Lasso => "LASSO",
            RegressorKind::Ridge => "Ridge",
            RegressorKind::Svr => "SVR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: RegressorKind,
    pub hyperparams: BTreeMap<String, f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    /// Number of weights that are exactly zero.
    pub fn sparsity(&self) -> usize {
        self.weights.iter().filter(|&&w| w == 0.0).count()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::param(format!(
                "model has {} weights, data has {} columns",
                self.weights.len(),
                x.ncols()
            )));
        }
        let w = DVector::from_column_slice(&self.weights);
        Ok((x * w).iter().map(|v| v + self.bias).collect())
    }
}

fn validate(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::param(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    if x.nrows() < 2 {
        return Err(Error::data("need at least 2 samples"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite regression input"));
    }
    Ok(())
}

struct Centered {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn center(x: &DMatrix<f64>, y: &[f64]) -> Centered {
    let n = x.nrows() as f64;
    let x_mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let y_mean = y.iter().sum::<f64>() / n;
    let xc = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - x_mean[j]);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    Centered { x: xc, y: yc, x_mean, y_mean }
}

fn intercept(c: &Centered, w: &[f64]) -> f64 {
    c.y_mean - c.x_mean.iter().zip(w).map(|(m, w)| m * w).sum::<f64>()
}

pub fn soft_threshold(v: f64, lambda: f64) -> f64 {
    v.signum() * (v.abs() - lambda).max(0.0)
}

/// `(1/2N)|y - Xw - b|^2 + lambda |w|_1`.
pub fn lasso_objective(x: &DMatrix<f64>, y: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let pred = x * DVector::from_column_slice(w);
    let rss: f64 = pred.iter().zip(y).map(|(p, t)| (t - p - b).powi(2)).sum();
    rss / (2.0 * n) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn fit_lasso(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LinearModel> {
    fit_lasso_path(x, y, &[lambda]).map(|mut m| m.remove(0))
}

/// LASSO fits for several penalties, solved from the largest down with each
/// solution warm-starting the next. Models come back in the order of `lambdas`.
pub fn fit_lasso_path(x: &DMatrix<f64>, y: &[f64], lambdas: &[f64]) -> Result<Vec<LinearModel>> {
    validate(x, y)?;
    if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::param(format!("lambda must be finite and nonnegative, got {bad}")));
    }
    let c = center(x, y);
    let nf = c.x.nrows() as f64;
    let gram = c.x.tr_mul(&c.x) / nf;
    let xty = c.x.tr_mul(&c.y) / nf;
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut w = vec![0.0; c.x.ncols()];
    let mut models = vec![None; lambdas.len()];
    for i in order {
        lasso_descent(&gram, &xty, lambdas[i], &mut w);
        models[i] = Some(LinearModel {
            kind: RegressorKind::Lasso,
            hyperparams: BTreeMap::from([("lambda".to_string(), lambdas[i])]),
            weights: w.clone(),
            bias: intercept(&c, &w),
        });
    }
    Ok(models.into_iter().flatten().collect())
}

/// Cyclic coordinate descent on the covariance form, starting from `w`.
fn lasso_descent(gram: &DMatrix<f64>, xty: &DVector<f64>, lambda: f64, w: &mut [f64]) {
    let p = w.len();
    let g = gram.as_slice();
    // gw = gram * w, kept in sync with every coordinate update
    let mut gw: Vec<f64> = (0..p).map(|j| (0..p).map(|k| g[k * p + j] * w[k]).sum()).collect();
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            let col = &g[j * p..(j + 1) * p];
            let gjj = col[j];
            if gjj == 0.0 {
                continue;
            }
            let rho = xty[j] - gw[j] + gjj * w[j];
            let delta = soft_threshold(rho, lambda) / gjj - w[j];
            if delta != 0.0 {
                for (acc, c) in gw.iter_mut().zip(col) {
                    *acc += delta * c;
                }
                w[j] += delta;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < LASSO_TOL {
            break;
        }
    }
}

pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LinearModel> {
    validate(x, y)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::param(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let c = center(x, y);
    let n = c.x.nrows() as f64;
    let mut gram = c.x.tr_mul(&c.x);
    for i in 0..gram.nrows() {
        gram[(i, i)] += n * lambda;
    }
    let rhs = c.x.tr_mul(&c.y);
    let scale = (0..gram.nrows()).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let chol = gram
        .cholesky()
        .filter(|c| (0..c.l_dirty().nrows()).all(|i| c.l_dirty()[(i, i)].powi(2) > 1e-12 * scale))
        .ok_or_else(|| Error::numerical("ridge system is singular"))?;
    let w: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("ridge solution is not finite"));
    }
    let bias = intercept(&c, &w);
    Ok(LinearModel {
        kind: RegressorKind::Ridge,
        hyperparams: BTreeMap::from([("lambda".to_string(), lambda)]),
        weights: w,
        bias,
    })
}

/// `(1/2)|w|^2 + C sum max(0, |y - Xw - b| - epsilon)`.
pub fn svr_objective(x: &DMatrix<f64>, y: &[f64], w: &[f64], b: f64, c: f64, epsilon: f64) -> f64 {
    let pred = x * DVector::from_column_slice(w);
    let loss: f64 = pred
        .iter()
        .zip(y)
        .map(|(p, t)| ((t - p - b).abs() - epsilon).max(0.0))
        .sum();
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * loss
}

/// Linear SVR plus the objective of the averaged iterate at every checkpoint.
pub fn fit_svr_traced(x: &DMatrix<f64>, y: &[f64], c: f64, epsilon: f64) -> Result<(LinearModel, Vec<f64>)> {
    fit_svr_iterations(x, y, c, epsilon, SVR_ITERATIONS)
}

/// [`fit_svr_traced`] with an explicit iteration budget.
pub fn fit_svr_iterations(
    x: &DMatrix<f64>,
    y: &[f64],
    c: f64,
    epsilon: f64,
    iterations: usize,
) -> Result<(LinearModel, Vec<f64>)> {
    validate(x, y)?;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::param(format!("C must be positive, got {c}")));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::param(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let (n, p) = x.shape();
    let sqrt_p = (p.max(1) as f64).sqrt();
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut w = DVector::zeros(p);
    let mut b = crate::fuzzy::percentile(&sorted, 50.0);
    // iterate average weighted by t
    let mut w_avg = w.clone();
    let mut b_avg = b;
    let mut weight_sum = 0.0;
    let mut trace = Vec::with_capacity(iterations / SVR_CHECKPOINT);
    let mut coef = vec![0.0; n];
    for t in 1..=iterations {
        let pred = x * &w;
        let mut gb = 0.0;
        for i in 0..n {
            let r = y[i] - pred[i] - b;
            coef[i] = if r.abs() > epsilon { -c * r.signum() } else { 0.0 };
            gb += coef[i];
        }
        let gw = &w + x.tr_mul(&DVector::from_column_slice(&coef));
        let step = 1.0 / (t as f64 * sqrt_p);
        w.axpy(-step, &gw, 1.0);
        b -= step * gb;

        let tw = t as f64;
        weight_sum += tw;
        let mix = tw / weight_sum;
        w_avg.axpy(mix, &w, 1.0 - mix);
        b_avg = (1.0 - mix) * b_avg + mix * b;
        if t % SVR_CHECKPOINT == 0 {
            trace.push(svr_objective(x, y, w_avg.as_slice(), b_avg, c, epsilon));
        }
    }
    let weights: Vec<f64> = w_avg.iter().copied().collect();
    if weights.iter().any(|v| !v.is_finite()) || !b_avg.is_finite() {
        return Err(Error::numerical("SVR iterate diverged"));
    }
    let model = LinearModel {
        kind: RegressorKind::Svr,
        hyperparams: BTreeMap::from([("C".to_string(), c), ("epsilon".to_string(), epsilon)]),
        weights,
        bias: b_avg,
    };
    Ok((model, trace))
}

pub fn fit_svr(x: &DMatrix<f64>, y: &[f64], c: f64, epsilon: f64) -> Result<LinearModel> {
    fit_svr_traced(x, y, c, epsilon).map(|(m, _)| m)
}

pub fn predict(model: &LinearModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    model.predict(x)
}

fn log_grid(lo_exp: f64, hi_exp: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 10f64.powf(lo_exp + (hi_exp - lo_exp) * i as f64 / (n - 1) as f64))
        .collect()
}

/// One candidate hyperparameter setting.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperParams {
    Lambda(f64),
    Svr { c: f64, epsilon: f64 },
}

/// Search grids used by inner cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub lambdas: Vec<f64>,
    pub svr_c: Vec<f64>,
    pub svr_epsilon: Vec<f64>,
    pub svr_iterations: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            lambdas: log_grid(-4.0, 1.0, 13),
            svr_c: log_grid(-2.0, 2.0, 9),
            svr_epsilon: vec![0.01, 0.05, 0.1],
            svr_iterations: SVR_ITERATIONS,
        }
    }
}

impl Grids {
    pub fn candidates(&self, kind: RegressorKind) -> Vec<HyperParams> {
        match kind {
            RegressorKind::Lasso | RegressorKind::Ridge => {
                self.lambdas.iter().map(|&l| HyperParams::Lambda(l)).collect()
            }
            RegressorKind::Svr => self
                .svr_c
                .iter()
                .flat_map(|&c| self.svr_epsilon.iter().map(move |&epsilon| HyperParams::Svr { c, epsilon }))
                .collect(),
        }
    }
}

pub fn fit(
    kind: RegressorKind,
    params: &HyperParams,
    grids: &Grids,
    x: &DMatrix<f64>,
    y: &[f64],
) -> Result<LinearModel> {
    match (kind, params) {
        (RegressorKind::Lasso, HyperParams::Lambda(l)) => fit_lasso(x, y, *l),
        (RegressorKind::Ridge, HyperParams::Lambda(l)) => fit_ridge(x, y, *l),
        (RegressorKind::Svr, HyperParams::Svr { c, epsilon }) => {
            fit_svr_iterations(x, y, *c, *epsilon, grids.svr_iterations).map(|(m, _)| m)
        }
        _ => Err(Error::param(format!("hyperparameters {params:?} do not fit {kind:?}"))),
    }
}

/// Picks the candidate with the lowest mean validation MSE over `k` inner
/// folds of `(x, y)`; ties go to the earlier grid entry.
pub fn select_hyperparams(
    kind: RegressorKind,
    grids: &Grids,
    x: &DMatrix<f64>,
    y: &[f64],
    k: usize,
    seed: u64,
) -> Result<(HyperParams, f64)> {
    let plan = FoldPlan::new(y.len(), k, seed)?;
    let splits: Vec<_> = (0..k).map(|f| plan.split(f)).collect();
    let candidates = grids.candidates(kind);
    let scores: Vec<Result<f64>> = if kind == RegressorKind::Lasso {
        lasso_path_scores(&candidates, x, y, &splits)
    } else {
        candidates
            .par_iter()
            .map(|params| {
                let mut total = 0.0;
                for (train, test) in &splits {
                    let xt = x.select_rows(train);
                    let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                    let model = fit(kind, params, grids, &xt, &yt)?;
                    total += squared_error(&model, x, y, test)?;
                }
                Ok(total / y.len() as f64)
            })
            .collect()
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        let s = s?;
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    let (i, score) = best.ok_or_else(|| Error::param("empty hyperparameter grid"))?;
    Ok((candidates[i].clone(), score))
}

fn squared_error(model: &LinearModel, x: &DMatrix<f64>, y: &[f64], rows: &[usize]) -> Result<f64> {
    let pred = model.predict(&x.select_rows(rows))?;
    Ok(rows.iter().zip(&pred).map(|(&i, p)| (y[i] - p).powi(2)).sum())
}

fn lasso_path_scores(
    candidates: &[HyperParams],
    x: &DMatrix<f64>,
    y: &[f64],
    splits: &[(Vec<usize>, Vec<usize>)],
) -> Vec<Result<f64>> {
    let lambdas: Vec<f64> = candidates
        .iter()
        .map(|c| match c {
            HyperParams::Lambda(l) => *l,
            HyperParams::Svr { .. } => f64::NAN,
        })
        .collect();
    let per_fold: Vec<Result<Vec<f64>>> = splits
        .par_iter()
        .map(|(train, test)| {
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            fit_lasso_path(&x.select_rows(train), &yt, &lambdas)?
                .iter()
                .map(|m| squared_error(m, x, y, test))
                .collect()
        })
        .collect();
    let mut totals = vec![0.0; candidates.len()];
    for fold in per_fold {
        match fold {
            Ok(errs) => totals.iter_mut().zip(errs).for_each(|(t, e)| *t += e),
            Err(e) => return vec![Err(e)],
        }
    }
    totals.into_iter().map(|t| Ok(t / y.len() as f64)).collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Normal equations by Gaussian elimination with partial pivoting.
    fn ols_oracle(x: &DMatrix<f64>, y: &[f64]) -> (Vec<f64>, f64) {
        let n = x.nrows();
        let p = x.ncols() + 1;
        let design = |i: usize, j: usize| if j == 0 { 1.0 } else { x[(i, j - 1)] };
        let mut a = vec![vec![0.0; p + 1]; p];
        for r in 0..p {
            for c in 0..p {
                a[r][c] = (0..n).map(|i| design(i, r) * design(i, c)).sum();
            }
            a[r][p] = (0..n).map(|i| design(i, r) * y[i]).sum();
        }
        for col in 0..p {
            let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        let sol: Vec<f64> = (0..p).map(|i| a[i][p] / a[i][i]).collect();
        (sol[1..].to_vec(), sol[0])
    }

    fn random_problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = (0..n)
            .map(|i| 0.7 + (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + 0.1 * rng.random_range(-1.0..1.0))
            .collect();
        (x, y)
    }

    #[test]
    fn lasso_without_penalty_is_ols() {
        let (x, y) = random_problem(1, 60, 5);
        let m = fit_lasso(&x, &y, 0.0).unwrap();
        let (w, b) = ols_oracle(&x, &y);
        for (a, o) in m.weights.iter().zip(&w) {
            assert!((a - o).abs() < 1e-6);
        }
        assert!((m.bias - b).abs() < 1e-6);
    }

    #[test]
    fn lasso_soft_thresholds_orthonormal_design() {
        // columns of a 4x4 Hadamard-like matrix minus the constant one: centered and orthogonal
        let h = [[1.0, 1.0, 1.0], [-1.0, 1.0, -1.0], [1.0, -1.0, -1.0], [-1.0, -1.0, 1.0]];
        let x = DMatrix::from_fn(4, 3, |i, j| h[i][j]);
        let y = vec![3.0, -0.5, 1.25, 0.1];
        let ols: Vec<f64> = (0..3).map(|j| (0..4).map(|i| h[i][j] * y[i]).sum::<f64>() / 4.0).collect();
        for lambda in [0.0, 0.1, 0.4, 0.8, 2.0] {
            let m = fit_lasso(&x, &y, lambda).unwrap();
            for (w, o) in m.weights.iter().zip(&ols) {
                assert!((w - soft_threshold(*o, lambda)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn warm_started_path_matches_cold_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DMatrix::from_fn(50, 8, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..50).map(|i| x[(i, 2)] - 0.5 * x[(i, 5)] + 0.2 * rng.random_range(-1.0..1.0)).collect();
        let lambdas = [0.01, 0.3, 0.0001, 0.05];
        let path = fit_lasso_path(&x, &y, &lambdas).unwrap();
        for (lambda, warm) in lambdas.iter().zip(&path) {
            let cold = fit_lasso(&x, &y, *lambda).unwrap();
            assert_eq!(warm.hyperparams["lambda"], *lambda);
            let obj_warm = lasso_objective(&x, &y, &warm.weights, warm.bias, *lambda);
            let obj_cold = lasso_objective(&x, &y, &cold.weights, cold.bias, *lambda);
            assert!((obj_warm - obj_cold).abs() < 1e-9, "lambda {lambda}: {obj_warm} vs {obj_cold}");
        }
    }

    #[test]
    fn lasso_null_threshold_zeroes_everything() {
        let (x, y) = random_problem(2, 40, 6);
        let ybar = y.iter().sum::<f64>() / 40.0;
        let lam_max = (0..6)
            .map(|j| ((0..40).map(|i| x[(i, j)] * (y[i] - ybar)).sum::<f64>() / 40.0).abs())
            .fold(0.0, f64::max);
        let m = fit_lasso(&x, &y, lam_max).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
        assert_eq!(m.sparsity(), 6);
        let pred = m.predict(&x).unwrap();
        assert!(pred.iter().all(|p| (p - ybar).abs() < 1e-12));
    }

    #[test]
    fn ridge_scalar_example() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let m = fit_ridge(&x, &[2.0, -2.0], 1.0).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_limits() {
        let (x, y) = random_problem(3, 50, 4);
        let m = fit_ridge(&x, &y, 0.0).unwrap();
        let (w, b) = ols_oracle(&x, &y);
        for (a, o) in m.weights.iter().zip(&w) {
            assert!((a - o).abs() < 1e-8);
        }
        assert!((m.bias - b).abs() < 1e-8);
        let big = fit_ridge(&x, &y, 1e12).unwrap();
        let ybar = y.iter().sum::<f64>() / 50.0;
        assert!(big.weights.iter().all(|w| w.abs() < 1e-9));
        assert!(big.predict(&x).unwrap().iter().all(|p| (p - ybar).abs() < 1e-6));
    }

    #[test]
    fn ridge_singular_is_numerical_error() {
        let x = DMatrix::from_fn(5, 2, |i, _| i as f64);
        assert!(matches!(fit_ridge(&x, &[1.0, 2.0, 3.0, 4.0, 5.0], 0.0), Err(Error::Numerical(_))));
    }

    #[test]
    fn nonfinite_input_is_data_error() {
        let x = DMatrix::from_element(3, 1, f64::NAN);
        assert!(matches!(fit_lasso(&x, &[1.0, 2.0, 3.0], 0.1), Err(Error::Data(_))));
        assert!(matches!(fit_svr(&x, &[1.0, 2.0, 3.0], 1.0, 0.1), Err(Error::Data(_))));
    }

    #[test]
    fn svr_wide_tube_and_tiny_c() {
        let x = DMatrix::from_column_slice(6, 1, &[-1.0, -0.6, -0.2, 0.2, 0.6, 1.0]);
        let y: Vec<f64> = (0..6).map(|i| 1.0 + 0.3 * x[(i, 0)]).collect();
        let (m, trace) = fit_svr_traced(&x, &y, 1.0, 5.0).unwrap();
        assert_eq!(svr_objective(&x, &y, &m.weights, m.bias, 1.0, 5.0), 0.5 * m.weights[0].powi(2));
        assert!(m.weights[0].abs() < 1e-3);
        assert!(trace.windows(2).all(|w| w[1] <= 1.01 * w[0]));
        let tiny = fit_svr(&x, &y, 1e-9, 0.0).unwrap();
        assert!(tiny.weights[0].abs() < 1e-6);
    }

    /// Least-absolute-deviation line through every pair of points; the optimum
    /// of the linear program sits on such a vertex.
    fn lad_oracle(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                if x[i] == x[j] {
                    continue;
                }
                let slope = (y[j] - y[i]) / (x[j] - x[i]);
                let b = y[i] - slope * x[i];
                let loss: f64 = x.iter().zip(y).map(|(a, t)| (t - slope * a - b).abs()).sum();
                if loss < best.0 {
                    best = (loss, slope, b);
                }
            }
        }
        best
    }

    #[test]
    fn svr_tracks_lad_under_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let xs: Vec<f64> = (0..20).map(|i| -1.0 + i as f64 / 10.0).collect();
        let mut ys: Vec<f64> = xs.iter().map(|v| 0.5 + 0.8 * v + 0.05 * rng.random_range(-1.0..1.0)).collect();
        for i in [3, 9, 15] {
            ys[i] += 4.0;
        }
        let x = DMatrix::from_column_slice(20, 1, &xs);
        let (lad_loss, lad_slope, lad_b) = lad_oracle(&xs, &ys);
        let (svr, trace) = fit_svr_traced(&x, &ys, 100.0, 0.0).unwrap();
        let ridge = fit_ridge(&x, &ys, 0.0).unwrap();
        let svr_loss: f64 = xs.iter().zip(&ys).map(|(a, t)| (t - svr.weights[0] * a - svr.bias).abs()).sum();
        assert!(svr_loss <= lad_loss * 1.02 + 1e-3, "svr {svr_loss} lad {lad_loss}");
        let svr_gap = (svr.bias - lad_b).abs() + (svr.weights[0] - lad_slope).abs();
        let ridge_gap = (ridge.bias - lad_b).abs() + (ridge.weights[0] - lad_slope).abs();
        assert!(svr_gap < ridge_gap, "svr gap {svr_gap} ridge gap {ridge_gap}");
        assert!(trace.windows(2).all(|w| w[1] <= 1.01 * w[0]), "{trace:?}");
    }

    #[test]
    fn predict_contract() {
        let zero = LinearModel { kind: RegressorKind::Ridge, hyperparams: BTreeMap::new(), weights: vec![0.0, 0.0], bias: 1.5 };
        assert_eq!(zero.predict(&DMatrix::from_element(3, 2, 7.0)).unwrap(), vec![1.5; 3]);
        let ident = LinearModel { weights: vec![1.0], bias: 0.25, ..zero.clone() };
        assert_eq!(ident.predict(&DMatrix::from_column_slice(2, 1, &[1.0, -3.0])).unwrap(), vec![1.25, -2.75]);
        assert!(matches!(zero.predict(&DMatrix::zeros(2, 3)), Err(Error::Param(_))));

        let (x, _) = random_problem(5, 7, 3);
        let m = LinearModel { weights: vec![0.3, -1.1, 2.0], bias: -0.4, ..zero };
        let got = m.predict(&x).unwrap();
        for i in 0..7 {
            let mut acc = -0.4;
            for j in 0..3 {
                acc += x[(i, j)] * m.weights[j];
            }
            assert!((got[i] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn default_grids() {
        let g = Grids::default();
        assert_eq!(g.lambdas.len(), 13);
        assert!((g.lambdas[0] - 1e-4).abs() < 1e-16 && (g.lambdas[12] - 10.0).abs() < 1e-12);
        assert_eq!(g.svr_c.len(), 9);
        assert!((g.svr_c[4] - 1.0).abs() < 1e-12);
        assert_eq!(g.candidates(RegressorKind::Svr).len(), 27);
    }

    #[test]
    fn inner_cv_prefers_small_lambda_on_clean_signal() {
        let (x, y) = random_problem(6, 80, 4);
        let (best, _) = select_hyperparams(RegressorKind::Lasso, &Grids::default(), &x, &y, 8, 1).unwrap();
        match best {
            HyperParams::Lambda(l) => assert!(l < 0.05, "{l}"),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lasso_beats_ols_point_and_origin(seed in 0u64..500, lambda in 0.001f64..1.0) {
            let (x, y) = random_problem(seed, 30, 5);
            let m = fit_lasso(&x, &y, lambda).unwrap();
            let got = lasso_objective(&x, &y, &m.weights, m.bias, lambda);
            let (w, b) = ols_oracle(&x, &y);
            let ybar = y.iter().sum::<f64>() / 30.0;
            prop_assert!(got <= lasso_objective(&x, &y, &w, b, lambda) + 1e-9);
            prop_assert!(got <= lasso_objective(&x, &y, &[0.0; 5], ybar, lambda) + 1e-9);
        }

        #[test]
        fn ridge_bias_absorbs_target_shift(seed in 0u64..500, shift in -10.0f64..10.0) {
            let (x, y) = random_problem(seed, 25, 3);
            let shifted: Vec<f64> = y.iter().map(|v| v + shift).collect();
            let a = fit_ridge(&x, &y, 0.1).unwrap().predict(&x).unwrap();
            let b = fit_ridge(&x, &shifted, 0.1).unwrap().predict(&x).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((q - p - shift).abs() < 1e-9);
            }
        }

        #[test]
        fn fitters_are_deterministic(seed in 0u64..100) {
            let (x, y) = random_problem(seed, 20, 3);
            prop_assert_eq!(fit_lasso(&x, &y, 0.05).unwrap(), fit_lasso(&x, &y, 0.05).unwrap());
            prop_assert_eq!(fit_ridge(&x, &y, 0.05).unwrap(), fit_ridge(&x, &y, 0.05).unwrap());
            prop_assert_eq!(fit_svr(&x, &y, 1.0, 0.05).unwrap(), fit_svr(&x, &y, 1.0, 0.05).unwrap());
        }
    }
}
