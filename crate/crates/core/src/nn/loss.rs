//! Reconstruction losses.
//!
//! Both losses use mean reduction over every element of the batch:
//! `L = (1 / (n·d)) Σ (target − pred)²` and `∂L/∂pred = 2 (pred − target) / (n·d)`.

use crate::missingness::MissingnessMask;
use crate::{Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    /// `∂L/∂pred`, same shape as the prediction batch.
    pub gradient: Matrix,
}

pub fn mse_loss(truth: &Matrix, pred: &Matrix) -> Result<LossReport> {
    pred.ensure_shape(truth.shape(), "mse_loss")?;
    Ok(squared_error(truth, pred))
}

/// Builds the truth metamorph: missing cells take the prediction, observed
/// cells keep the reference value.
pub fn truth_metamorph(reference: &Matrix, pred: &Matrix, mask: &MissingnessMask) -> Result<Matrix> {
    pred.ensure_shape(reference.shape(), "truth_metamorph")?;
    mask.ensure_shape(reference.shape())?;
    let mut out = reference.clone();
    for ((o, &p), &missing) in out
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(mask.cells())
    {
        if missing {
            *o = p;
        }
    }
    Ok(out)
}

/// Loss against the truth metamorph of `initial_imputed` and `pred`.
///
/// The metamorph is a detached snapshot: it is materialized before the loss
/// is evaluated and the gradient treats it as a constant. Missing cells
/// therefore contribute exactly zero to both the value and the gradient,
/// while the normalization still counts every cell of the batch.
pub fn metamorphic_loss(
    initial_imputed: &Matrix,
    pred: &Matrix,
    mask: &MissingnessMask,
) -> Result<LossReport> {
    let target = truth_metamorph(initial_imputed, pred, mask)?;
    Ok(squared_error(&target, pred))
}

fn squared_error(target: &Matrix, pred: &Matrix) -> LossReport {
    let n = target.as_slice().len();
    let mut gradient = Matrix::zeros(pred.rows(), pred.cols());
    if n == 0 {
        return LossReport {
            value: 0.0,
            gradient,
        };
    }
    let inv = 1.0 / n as f64;
    let mut sum = 0.0;
    for ((g, &t), &p) in gradient
        .as_mut_slice()
        .iter_mut()
        .zip(target.as_slice())
        .zip(pred.as_slice())
    {
        let diff = p - t;
        sum += diff * diff;
        *g = 2.0 * diff * inv;
    }
    LossReport {
        value: sum * inv,
        gradient,
    }
}
