//! Imputation quality measures and their aggregation over multiple
//! imputations. All measures expect normalized tables.

use std::fmt;
use std::str::FromStr;

use crate::engine::ImputationRun;
use crate::missingness::MissingnessMask;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    RmseSum,
    CovarianceDrift,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::RmseSum, Metric::CovarianceDrift];

    pub fn evaluate(self, truth: &Matrix, imputed: &Matrix, mask: &MissingnessMask) -> Result<f64> {
        match self {
            Metric::RmseSum => rmse_sum(truth, imputed, mask),
            Metric::CovarianceDrift => covariance_drift(truth, imputed),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::RmseSum => "rmse_sum",
            Metric::CovarianceDrift => "covariance_drift",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmse_sum" => Ok(Metric::RmseSum),
            "covariance_drift" => Ok(Metric::CovarianceDrift),
            _ => Err(Error::InvalidArgument(format!("unknown metric `{s}`"))),
        }
    }
}

fn check(truth: &Matrix, imputed: &Matrix, mask: &MissingnessMask) -> Result<()> {
    imputed.ensure_shape(truth.shape(), "imputed table")?;
    mask.ensure_shape(truth.shape())
}

/// Sum over columns of the root-mean-square error across that column's
/// imputed cells. Only missing cells enter; columns without missing cells
/// contribute 0.
///
/// Mean imputation of a z-scored column has an RMS error near 1, so this
/// value is roughly the number of columns that lost cells.
pub fn rmse_sum(truth: &Matrix, imputed: &Matrix, mask: &MissingnessMask) -> Result<f64> {
    check(truth, imputed, mask)?;
    let mut sq = vec![0.0; truth.cols()];
    let mut count = vec![0usize; truth.cols()];
    for r in 0..truth.rows() {
        for c in 0..truth.cols() {
            if mask.is_missing(r, c) {
                let d = imputed.get(r, c) - truth.get(r, c);
                sq[c] += d * d;
                count[c] += 1;
            }
        }
    }
    Ok(sq
        .iter()
        .zip(&count)
        .filter(|(_, &n)| n > 0)
        .map(|(s, &n)| (s / n as f64).sqrt())
        .sum())
}

/// Row-oriented variant: per row, the root of the mean squared error over
/// that row's missing cells, summed over rows.
pub fn rmse_sum_by_row(truth: &Matrix, imputed: &Matrix, mask: &MissingnessMask) -> Result<f64> {
    check(truth, imputed, mask)?;
    let mut total = 0.0;
    for r in 0..truth.rows() {
        let mut sq = 0.0;
        let mut n = 0usize;
        for c in 0..truth.cols() {
            if mask.is_missing(r, c) {
                let d = imputed.get(r, c) - truth.get(r, c);
                sq += d * d;
                n += 1;
            }
        }
        if n > 0 {
            total += (sq / n as f64).sqrt();
        }
    }
    Ok(total)
}

/// Population covariance matrix (divides by the row count).
pub fn covariance(m: &Matrix) -> Matrix {
    let n = m.rows() as f64;
    let means: Vec<f64> = m.column_sums().into_iter().map(|s| s / n).collect();
    let k = m.cols();
    let mut cov = Matrix::zeros(k, k);
    for r in 0..m.rows() {
        let row = m.row(r);
        for i in 0..k {
            let di = row[i] - means[i];
            for j in i..k {
                let v = cov.get(i, j) + di * (row[j] - means[j]);
                cov.set(i, j, v);
            }
        }
    }
    for i in 0..k {
        for j in i..k {
            let v = cov.get(i, j) / n;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    cov
}

/// `sqrt(Σ_{i≠j} (σ_ij − σ̃_ij)²) / (N (N − 1))` over the off-diagonal
/// covariance entries of the two tables, `N` = column count.
pub fn covariance_drift(truth: &Matrix, imputed: &Matrix) -> Result<f64> {
    imputed.ensure_shape(truth.shape(), "imputed table")?;
    let n = truth.cols();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "covariance drift needs at least two columns".into(),
        ));
    }
    let a = covariance(truth);
    let b = covariance(imputed);
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = a.get(i, j) - b.get(i, j);
                sum += d * d;
            }
        }
    }
    Ok(sum.sqrt() / (n * (n - 1)) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub max: f64,
}

impl MetricSummary {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("cannot summarize zero runs".into()));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { values, mean, max })
    }
}

pub fn summarize(
    runs: &[ImputationRun],
    truth: &Matrix,
    mask: &MissingnessMask,
    metric: Metric,
) -> Result<MetricSummary> {
    let values = runs
        .iter()
        .map(|run| metric.evaluate(truth, &run.imputed, mask))
        .collect::<Result<Vec<_>>>()?;
    MetricSummary::from_values(values)
}
