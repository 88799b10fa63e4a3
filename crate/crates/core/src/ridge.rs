//! Closed-form ridge regression with standardization, r²/RMSE metrics,
//! and seeded k-fold cross-validation over a lambda grid.
//!
//! Columns are standardized to zero mean and unit variance before the
//! penalty applies, the target is centered, and the intercept (the
//! target mean) is never penalized, so lambda is comparable across
//! features of very different scales.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed::shuffle;

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
}

fn check_matrix(rows: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if rows.len() != y.len() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} targets",
            rows.len(),
            y.len()
        )));
    }
    if rows.len() < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::invalid("need at least 1 feature column"));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::invalid(format!(
                "row {i} has {} features, expected {d}",
                r.len()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("row {i} contains a non-finite feature")));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("targets contain a non-finite value"));
    }
    Ok(d)
}

/// Per-column mean, population standard deviation, and a constant-column
/// flag. Constant columns get std 1 so standardization never divides by
/// zero; the solver excludes them and pins their weight at zero.
fn standardization(rows: &[Vec<f64>], d: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let n = rows.len() as f64;
    let mut means = vec![0.0; d];
    for r in rows {
        for (m, v) in means.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut stds = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in stds.iter_mut().zip(r.iter()).zip(means.iter()) {
            *s += (v - m) * (v - m);
        }
    }
    let mut constant = vec![false; d];
    for ((s, m), flag) in stds.iter_mut().zip(means.iter()).zip(constant.iter_mut()) {
        let std = (*s / n).sqrt();
        if std <= 1e-12 * (1.0 + m.abs()) {
            *s = 1.0;
            *flag = true;
        } else {
            *s = std;
        }
    }
    (means, stds, constant)
}

/// Fit ridge weights by solving the standardized normal equations with
/// a Cholesky factorization.
pub fn ridge_fit(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<RidgeModel> {
    let d = check_matrix(rows, y)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let n = rows.len();
    let (means, stds, constant) = standardization(rows, d);
    let intercept = y.iter().sum::<f64>() / n as f64;

    // Constant columns carry no signal once centered; solve the reduced
    // system over the rest and leave their weight at zero.
    let active: Vec<usize> = (0..d).filter(|&j| !constant[j]).collect();
    let mut weights = vec![0.0; d];
    if !active.is_empty() {
        let mut x = DMatrix::<f64>::zeros(n, active.len());
        for (i, r) in rows.iter().enumerate() {
            for (jj, &j) in active.iter().enumerate() {
                x[(i, jj)] = (r[j] - means[j]) / stds[j];
            }
        }
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - intercept));
        let mut system = x.transpose() * &x;
        for jj in 0..active.len() {
            system[(jj, jj)] += lambda;
        }
        let xty = x.transpose() * yc;
        let solved = system
            .cholesky()
            .ok_or_else(|| {
                Error::numeric("ridge system is singular (collinear features); use lambda > 0")
            })?
            .solve(&xty);
        for (jj, &j) in active.iter().enumerate() {
            weights[j] = solved[jj];
        }
    }
    Ok(RidgeModel {
        weights,
        intercept,
        lambda,
        column_means: means,
        column_stds: stds,
    })
}

impl RidgeModel {
    pub fn predict_one(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.len() {
            return Err(Error::invalid(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.weights.len()
            )));
        }
        let mut acc = self.intercept;
        for j in 0..row.len() {
            acc += self.weights[j] * (row[j] - self.column_means[j]) / self.column_stds[j];
        }
        Ok(acc)
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict_one(r)).collect()
    }

    /// Serialize as `key = value` lines with full float precision.
    pub fn write(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        format!(
            "lambda = {}\nintercept = {}\nweights = {}\ncolumn_means = {}\ncolumn_stds = {}\n",
            self.lambda,
            self.intercept,
            join(&self.weights),
            join(&self.column_means),
            join(&self.column_stds)
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lambda: Option<f64> = None;
        let mut intercept: Option<f64> = None;
        let mut weights: Option<Vec<f64>> = None;
        let mut means: Option<Vec<f64>> = None;
        let mut stds: Option<Vec<f64>> = None;
        for (i, raw) in text.split('\n').enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            let parse_scalar = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(lineno, format!("expected number, found `{v}`")))
            };
            let parse_list = |v: &str| -> Result<Vec<f64>> {
                v.split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>().map_err(|_| {
                            Error::parse(lineno, format!("expected number, found `{tok}`"))
                        })
                    })
                    .collect()
            };
            match key {
                "lambda" => lambda = Some(parse_scalar(value)?),
                "intercept" => intercept = Some(parse_scalar(value)?),
                "weights" => weights = Some(parse_list(value)?),
                "column_means" => means = Some(parse_list(value)?),
                "column_stds" => stds = Some(parse_list(value)?),
                _ => {}
            }
        }
        let model = RidgeModel {
            lambda: lambda.ok_or_else(|| Error::invalid("model missing `lambda`"))?,
            intercept: intercept.ok_or_else(|| Error::invalid("model missing `intercept`"))?,
            weights: weights.ok_or_else(|| Error::invalid("model missing `weights`"))?,
            column_means: means.ok_or_else(|| Error::invalid("model missing `column_means`"))?,
            column_stds: stds.ok_or_else(|| Error::invalid("model missing `column_stds`"))?,
        };
        if model.column_means.len() != model.weights.len()
            || model.column_stds.len() != model.weights.len()
        {
            return Err(Error::invalid("model vectors have mismatched lengths"));
        }
        if model.column_stds.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid("model column_stds must be positive"));
        }
        Ok(model)
    }
}

/// Coefficient of determination, 1 - SSE/SST. Negative for predictors
/// worse than the target mean.
pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::invalid(format!(
            "{} targets but {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::invalid("need at least 2 samples for r-squared"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if sst <= 0.0 {
        return Err(Error::invalid("target variance is zero; r-squared undefined"));
    }
    let sse: f64 = y.iter().zip(y_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - sse / sst)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::invalid(format!(
            "{} targets but {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("cannot compute rmse of zero samples"));
    }
    let mse: f64 =
        y.iter().zip(y_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub r_squared: f64,
    pub rmse: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    /// Chosen lambda: best mean r², ties to the smaller value.
    pub lambda: f64,
    /// (lambda, mean validation r²) for the whole grid, ascending.
    pub grid: Vec<(f64, f64)>,
    /// Per-fold metrics at the chosen lambda, in fold order.
    pub folds: Vec<EvalMetrics>,
    pub mean_r2: f64,
    pub mean_rmse: f64,
}

/// Shuffled fold index sets: sizes differ by at most one, the first
/// n mod k folds taking the extra element.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut rng, &mut order);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    folds
}

/// Seeded k-fold cross-validation over a lambda grid.
pub fn kfold_cv(
    rows: &[Vec<f64>],
    y: &[f64],
    k: usize,
    lambda_grid: &[f64],
    seed: u64,
) -> Result<CvReport> {
    let _ = check_matrix(rows, y)?;
    let n = rows.len();
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("{k} folds exceed {n} samples")));
    }
    let mut grid: Vec<f64> = lambda_grid.to_vec();
    if grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    if grid.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
        return Err(Error::invalid("lambda grid values must be non-negative"));
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let folds = fold_indices(n, k, seed);
    let fold_sets: Vec<(Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> = folds
        .iter()
        .map(|val_idx| {
            let in_val: Vec<bool> = {
                let mut mask = vec![false; n];
                for &i in val_idx {
                    mask[i] = true;
                }
                mask
            };
            let mut train_x = Vec::with_capacity(n - val_idx.len());
            let mut train_y = Vec::with_capacity(n - val_idx.len());
            for i in 0..n {
                if !in_val[i] {
                    train_x.push(rows[i].clone());
                    train_y.push(y[i]);
                }
            }
            let val_x: Vec<Vec<f64>> = val_idx.iter().map(|&i| rows[i].clone()).collect();
            let val_y: Vec<f64> = val_idx.iter().map(|&i| y[i]).collect();
            (train_x, train_y, val_x, val_y)
        })
        .collect();

    let per_lambda: Vec<Result<Vec<EvalMetrics>>> = grid
        .par_iter()
        .map(|&lambda| {
            fold_sets
                .iter()
                .map(|(tx, ty, vx, vy)| {
                    let model = ridge_fit(tx, ty, lambda)?;
                    let pred = model.predict(vx)?;
                    Ok(EvalMetrics {
                        r_squared: r_squared(vy, &pred)?,
                        rmse: rmse(vy, &pred)?,
                        n: vy.len(),
                    })
                })
                .collect()
        })
        .collect();

    let mut grid_means = Vec::with_capacity(grid.len());
    let mut all_metrics = Vec::with_capacity(grid.len());
    for (lambda, metrics) in grid.iter().zip(per_lambda) {
        let metrics = metrics?;
        let mean = metrics.iter().map(|m| m.r_squared).sum::<f64>() / metrics.len() as f64;
        grid_means.push((*lambda, mean));
        all_metrics.push(metrics);
    }

    let mut best = 0usize;
    for i in 1..grid_means.len() {
        if grid_means[i].1 > grid_means[best].1 {
            best = i;
        }
    }
    let folds_at_best = all_metrics.swap_remove(best);
    let mean_r2 = grid_means[best].1;
    let mean_rmse =
        folds_at_best.iter().map(|m| m.rmse).sum::<f64>() / folds_at_best.len() as f64;
    Ok(CvReport {
        lambda: grid_means[best].0,
        grid: grid_means,
        folds: folds_at_best,
        mean_r2,
        mean_rmse,
    })
}

/// Default lambda grid: 9 values log-spaced from 1e-3 to 1e3.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 8.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn exact_linear_fit_at_zero_lambda() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let rows = column(&x);
        let model = ridge_fit(&rows, &y, 0.0).unwrap();
        let pred = model.predict(&rows).unwrap();
        for (p, t) in pred.iter().zip(y.iter()) {
            assert!((p - t).abs() < 1e-10, "{p} vs {t}");
        }
    }

    #[test]
    fn huge_lambda_shrinks_to_intercept() {
        let rows = vec![vec![1.0, 4.0], vec![2.0, 3.0], vec![3.0, 7.0], vec![4.0, 1.0]];
        let y = vec![1.0, 3.0, 2.0, 4.0];
        let model = ridge_fit(&rows, &y, 1e12).unwrap();
        assert!(model.weights.iter().all(|w| w.abs() < 1e-6));
        assert!((model.intercept - 2.5).abs() < 1e-12);
        let pred = model.predict(&rows).unwrap();
        assert!(pred.iter().all(|p| (p - 2.5).abs() < 1e-5));
    }

    #[test]
    fn collinear_at_zero_lambda_advises_regularization() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0], vec![4.0, 8.0]];
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let err = ridge_fit(&rows, &y, 0.0).unwrap_err();
        assert!(err.to_string().contains("lambda"), "{err}");
        // The same system solves fine with a positive penalty.
        assert!(ridge_fit(&rows, &y, 0.1).is_ok());
    }

    #[test]
    fn constant_column_gets_zero_weight() {
        let rows = vec![vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 3.0], vec![5.0, 4.0]];
        let y = vec![2.0, 4.0, 6.0, 8.0];
        let model = ridge_fit(&rows, &y, 0.0).unwrap();
        assert_eq!(model.weights[0], 0.0);
        assert_eq!(model.column_stds[0], 1.0);
        let pred = model.predict(&rows).unwrap();
        for (p, t) in pred.iter().zip(y.iter()) {
            assert!((p - t).abs() < 1e-10);
        }
    }

    #[test]
    fn predict_checks_width() {
        let model = ridge_fit(&column(&[1.0, 2.0, 3.0]), &[1.0, 2.0, 3.0], 0.1).unwrap();
        assert!(model.predict(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn input_validation() {
        assert!(ridge_fit(&column(&[1.0]), &[1.0], 0.0).is_err());
        assert!(ridge_fit(&column(&[1.0, 2.0]), &[1.0], 0.0).is_err());
        assert!(ridge_fit(&[vec![1.0], vec![f64::NAN]], &[1.0, 2.0], 0.0).is_err());
        assert!(ridge_fit(&column(&[1.0, 2.0]), &[1.0, f64::INFINITY], 0.0).is_err());
        assert!(ridge_fit(&column(&[1.0, 2.0]), &[1.0, 2.0], -1.0).is_err());
        assert!(ridge_fit(&[vec![1.0], vec![1.0, 2.0]], &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn r_squared_reference_points() {
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        let mean = [2.5, 2.5, 2.5, 2.5];
        assert_eq!(r_squared(&y, &mean).unwrap(), 0.0);
        let bad = [4.0, 1.0, 4.0, 1.0];
        assert!(r_squared(&y, &bad).unwrap() < 0.0);
        assert!(r_squared(&[1.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(r_squared(&[1.0], &[1.0]).is_err());
        assert!(r_squared(&y, &mean[..3]).is_err());
    }

    #[test]
    fn rmse_reference_points() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        let shifted = [2.0, 3.0, 4.0];
        assert!((rmse(&y, &shifted).unwrap() - 1.0).abs() < 1e-12);
        assert!(rmse(&y, &shifted[..2]).is_err());
        // Hand arithmetic: errors 1, 2 -> sqrt(5/2).
        let v = rmse(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert!((v - (2.5f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn weight_norm_non_increasing_in_lambda() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = f64::from(i);
                vec![t, (t * 0.7).sin() * 3.0, t * t * 0.05]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.5 * r[0] - 2.0 * r[1] + 0.5 * r[2] + 3.0).collect();
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0] {
            let model = ridge_fit(&rows, &y, lambda).unwrap();
            let norm: f64 = model.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            assert!(norm <= prev + 1e-9, "norm rose at lambda {lambda}: {norm} > {prev}");
            prev = norm;
        }
    }

    #[test]
    fn column_rescaling_leaves_predictions_unchanged() {
        let rows: Vec<Vec<f64>> =
            (0..15).map(|i| vec![f64::from(i), f64::from(i % 4), f64::from(i * i % 7)]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] - r[1] + 2.0 * r[2] + 1.0).collect();
        let model_a = ridge_fit(&rows, &y, 0.5).unwrap();
        let scaled: Vec<Vec<f64>> =
            rows.iter().map(|r| vec![r[0] * 10.0, r[1], r[2]]).collect();
        let model_b = ridge_fit(&scaled, &y, 0.5).unwrap();
        let pred_a = model_a.predict(&rows).unwrap();
        let pred_b = model_b.predict(&scaled).unwrap();
        for (a, b) in pred_a.iter().zip(pred_b.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn folds_partition_index_set() {
        let folds = fold_indices(10, 5, 3);
        assert_eq!(folds.len(), 5);
        assert!(folds.iter().all(|f| f.len() == 2));
        let mut all: Vec<usize> = folds.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<usize>>());

        let folds = fold_indices(11, 3, 3);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
    }

    #[test]
    fn cv_recovers_noiseless_linear_target() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = f64::from(i);
                vec![t, (t % 5.0) - 2.0, (t * 0.3).cos()]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 0.3 * r[0] + 1.2 * r[1] - 0.7 * r[2] + 0.1).collect();
        let report = kfold_cv(&rows, &y, 5, &[1e-6, 1e-3, 1.0], 7).unwrap();
        assert!(report.mean_r2 >= 0.999, "mean r2 {}", report.mean_r2);
        assert_eq!(report.folds.len(), 5);
        assert!(report.lambda <= 1e-3);
    }

    #[test]
    fn cv_is_seeded_and_ties_choose_smaller_lambda() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![f64::from(i)]).collect();
        let y: Vec<f64> = (0..20).map(|i| f64::from(i) * 3.0 + 1.0).collect();
        let a = kfold_cv(&rows, &y, 4, &[0.1, 0.1, 0.1], 9).unwrap();
        let b = kfold_cv(&rows, &y, 4, &[0.1], 9).unwrap();
        // Duplicate grid entries collapse; equal means pick the first.
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.mean_r2, b.mean_r2);
        let c = kfold_cv(&rows, &y, 4, &[0.1], 9).unwrap();
        assert_eq!(b, c);
    }

    #[test]
    fn cv_input_validation() {
        let rows = column(&[1.0, 2.0, 3.0]);
        let y = [1.0, 2.0, 3.0];
        assert!(kfold_cv(&rows, &y, 4, &[0.1], 1).is_err());
        assert!(kfold_cv(&rows, &y, 1, &[0.1], 1).is_err());
        assert!(kfold_cv(&rows, &y, 2, &[], 1).is_err());
        assert!(kfold_cv(&rows, &y, 2, &[-0.5], 1).is_err());
    }

    #[test]
    fn model_round_trip() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 5.0], vec![4.0, 3.0]];
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let model = ridge_fit(&rows, &y, 0.7).unwrap();
        let back = RidgeModel::parse(&model.write()).unwrap();
        assert_eq!(model, back);
        assert!(RidgeModel::parse("lambda = 1\n").is_err());
    }

    #[test]
    fn default_grid_shape() {
        let grid = default_lambda_grid();
        assert_eq!(grid.len(), 9);
        assert!((grid[0] - 1e-3).abs() < 1e-15);
        assert!((grid[8] - 1e3).abs() < 1e-9);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }
}
