//! L2-regularized linear regression and its blocked cross-validation score.
//!
//! Columns are centered and scaled to unit (population) variance using the
//! fitting rows only; the intercept is the mean response and is not
//! penalized. The slope coefficients solve
//! `(Z'Z + lambda I) beta = Z'(y - mean(y))` for the standardized design `Z`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_FOLDS: usize = 5;
pub const LAMBDA_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub intercept: f64,
    /// Slopes on the standardized columns.
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub feature_ids: Vec<String>,
    pub standardization: Vec<Standardization>,
}

impl RidgeModel {
    /// Model with no features: predicts `intercept` everywhere.
    pub fn constant(intercept: f64, lambda: f64) -> Self {
        Self {
            intercept,
            coefficients: Vec::new(),
            lambda,
            feature_ids: Vec::new(),
            standardization: Vec::new(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(Error::ShapeMismatch {
                expected: self.coefficients.len(),
                got: row.len(),
            });
        }
        Ok(self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .zip(&self.standardization)
                .map(|((x, b), s)| b * (x - s.mean) / s.scale)
                .sum::<f64>())
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.coefficients.len() {
            return Err(Error::ShapeMismatch {
                expected: self.coefficients.len(),
                got: x.ncols(),
            });
        }
        let mut row = vec![0.0; x.ncols()];
        (0..x.nrows())
            .map(|r| {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = x[(r, c)];
                }
                self.predict_row(&row)
            })
            .collect()
    }

    /// `1/2 * sum of squared residuals + lambda/2 * |beta|^2`.
    pub fn objective(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
        let pred = self.predict(x)?;
        let rss: f64 = pred.iter().zip(y).map(|(p, t)| (t - p).powi(2)).sum();
        let penalty: f64 = self.coefficients.iter().map(|b| b * b).sum();
        Ok(0.5 * rss + 0.5 * self.lambda * penalty)
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!("lambda {lambda} must be finite and >= 0")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

/// Column statistics, failing on a constant column.
pub fn standardize(x: &DMatrix<f64>) -> Result<Vec<Standardization>> {
    let n = x.nrows() as f64;
    x.column_iter()
        .enumerate()
        .map(|(column, col)| {
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let scale = var.sqrt();
            if scale.is_nan() || scale <= 1e-12 * mean.abs().max(1.0) {
                return Err(Error::DegenerateDesign { column });
            }
            Ok(Standardization { mean, scale })
        })
        .collect()
}

pub fn fit(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<RidgeModel> {
    let ids = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    fit_named(x, y, lambda, ids)
}

pub fn fit_named(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    feature_ids: Vec<String>,
) -> Result<RidgeModel> {
    check_inputs(x, y, lambda)?;
    let (n, p) = x.shape();
    if feature_ids.len() != p {
        return Err(Error::ShapeMismatch {
            expected: p,
            got: feature_ids.len(),
        });
    }
    if n < p + 1 || n == 0 {
        return Err(Error::TooFewRows {
            rows: n,
            folds: 1,
            features: p,
        });
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    if p == 0 {
        let mut m = RidgeModel::constant(y_mean, lambda);
        m.feature_ids = feature_ids;
        return Ok(m);
    }
    let stats = standardize(x)?;
    let mut z = x.clone();
    for (j, s) in stats.iter().enumerate() {
        z.column_mut(j)
            .apply(|v| *v = (*v - s.mean) / s.scale);
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut gram = z.tr_mul(&z);
    for j in 0..p {
        gram[(j, j)] += lambda;
    }
    let rhs = z.tr_mul(&yc);
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        // singular only when lambda = 0 and columns are collinear:
        // fall back to the minimum-norm least-squares solution
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|_| Error::DegenerateDesign { column: 0 })?,
    };
    Ok(RidgeModel {
        intercept: y_mean,
        coefficients: beta.iter().copied().collect(),
        lambda,
        feature_ids,
        standardization: stats,
    })
}

/// Contiguous, near-equal row blocks in time order; the first
/// `n % folds` blocks take one extra row.
pub fn fold_layout(n: usize, folds: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / folds;
    let extra = n % folds;
    let mut start = 0;
    (0..folds)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub mean_mse: f64,
    pub fold_mses: Vec<f64>,
    pub fold_layout: Vec<(usize, usize)>,
}

/// Blocked k-fold cross-validated mean squared error.
pub fn cv_score(x: &DMatrix<f64>, y: &[f64], lambda: f64, folds: usize) -> Result<CvScore> {
    check_inputs(x, y, lambda)?;
    let (n, p) = x.shape();
    if folds < 2 || n < folds * (p + 2) {
        return Err(Error::TooFewRows {
            rows: n,
            folds,
            features: p,
        });
    }
    let layout = fold_layout(n, folds);
    let mut fold_mses = Vec::with_capacity(folds);
    for block in &layout {
        let train: Vec<usize> = (0..n).filter(|r| !block.contains(r)).collect();
        let held: Vec<usize> = block.clone().collect();
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&r| y[r]).collect();
        let model = fit(&xt, &yt, lambda)?;
        let pred = model.predict(&x.select_rows(&held))?;
        let mse = held
            .iter()
            .zip(&pred)
            .map(|(&r, p)| (y[r] - p).powi(2))
            .sum::<f64>()
            / held.len() as f64;
        fold_mses.push(mse);
    }
    let mean_mse = fold_mses.iter().sum::<f64>() / folds as f64;
    Ok(CvScore {
        mean_mse,
        fold_mses,
        fold_layout: layout.iter().map(|r| (r.start, r.end)).collect(),
    })
}

/// Grid value with the lowest CV score; ties keep the earlier value.
pub fn select_lambda(
    x: &DMatrix<f64>,
    y: &[f64],
    grid: &[f64],
    folds: usize,
) -> Result<(f64, CvScore)> {
    let mut best: Option<(f64, CvScore)> = None;
    for &lambda in grid {
        let score = cv_score(x, y, lambda, folds)?;
        if best
            .as_ref()
            .is_none_or(|(_, b)| score.mean_mse < b.mean_mse)
        {
            best = Some((lambda, score));
        }
    }
    best.ok_or_else(|| Error::Config("empty lambda grid".into()))
}

/// Builds an `n x p` matrix from equal-length columns.
pub fn design_from_columns(columns: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch {
            left: n,
            right: c.len(),
        });
    }
    Ok(DMatrix::from_fn(n, columns.len(), |r, c| columns[c][r]))
}
