#![allow(dead_code)]

use std::path::PathBuf;

use metaimpute::missingness::MissingnessMask;
use metaimpute::nn::{
    metamorphic_loss, mse_loss, Activation, DenseLayer, DropoutSpec, Init, LossReport, Mode, Network,
};
use metaimpute::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn catalog_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/catalog")
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_mask(rows: usize, cols: usize, p: f64, rng: &mut ChaCha8Rng) -> MissingnessMask {
    MissingnessMask::from_fn(rows, cols, |_, _| rng.gen_bool(p))
}

/// A dropout-free network with widths in 1..=4 and at most 20 parameters:
/// tanh hidden layers, identity output.
pub fn small_network(rng: &mut ChaCha8Rng) -> Network {
    loop {
        let depth = rng.gen_range(1..=3);
        let widths: Vec<usize> = (0..=depth).map(|_| rng.gen_range(1..=4)).collect();
        let params: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if params > 20 {
            continue;
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == widths.len() { Activation::Identity } else { Activation::Tanh };
                let mut layer = DenseLayer::new(w[0], w[1], act, Init::Xavier, rng);
                for b in &mut layer.biases {
                    *b = rng.gen_range(-0.5..0.5);
                }
                layer
            })
            .collect();
        return Network::new(DropoutSpec::new(0.0).unwrap(), layers).unwrap();
    }
}

pub enum LossKind<'a> {
    Mse(&'a Matrix),
    Metamorphic(&'a Matrix, &'a MissingnessMask),
}

impl LossKind<'_> {
    pub fn eval(&self, pred: &Matrix) -> LossReport {
        match self {
            LossKind::Mse(t) => mse_loss(t, pred).unwrap(),
            LossKind::Metamorphic(x0, mask) => metamorphic_loss(x0, pred, mask).unwrap(),
        }
    }
}

/// Largest relative difference between backpropagated parameter gradients
/// and central finite differences. Gradients below `1e-6` in magnitude are
/// compared on an absolute scale of `1e-6`.
pub fn gradient_check(net: &mut Network, input: &Matrix, loss: &LossKind, rng: &mut ChaCha8Rng) -> f64 {
    let pred = net.forward(input, Mode::Train, rng).unwrap();
    let analytic = net.backward(&loss.eval(&pred).gradient).unwrap().flatten();

    let h = 1e-6;
    let mut numeric = Vec::with_capacity(analytic.len());
    let lengths = net.parameter_lengths();
    for (slot, &len) in lengths.iter().enumerate() {
        for i in 0..len {
            let original = net.parameters_mut()[slot][i];
            net.parameters_mut()[slot][i] = original + h;
            let up = loss.eval(&net.forward(input, Mode::Infer, rng).unwrap()).value;
            net.parameters_mut()[slot][i] = original - h;
            let down = loss.eval(&net.forward(input, Mode::Infer, rng).unwrap()).value;
            net.parameters_mut()[slot][i] = original;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Naive per-column RMS error over missing cells, summed.
pub fn brute_rmse_sum(truth: &Matrix, imputed: &Matrix, mask: &MissingnessMask) -> f64 {
    let mut total = 0.0;
    for c in 0..truth.cols() {
        let mut sq = 0.0;
        let mut n = 0;
        for r in 0..truth.rows() {
            if mask.is_missing(r, c) {
                sq += (truth.get(r, c) - imputed.get(r, c)).powi(2);
                n += 1;
            }
        }
        if n > 0 {
            total += (sq / n as f64).sqrt();
        }
    }
    total
}

fn brute_cov(m: &Matrix, i: usize, j: usize) -> f64 {
    let n = m.rows() as f64;
    let mi: f64 = (0..m.rows()).map(|r| m.get(r, i)).sum::<f64>() / n;
    let mj: f64 = (0..m.rows()).map(|r| m.get(r, j)).sum::<f64>() / n;
    (0..m.rows()).map(|r| (m.get(r, i) - mi) * (m.get(r, j) - mj)).sum::<f64>() / n
}

/// Naive covariance drift: off-diagonal population covariance differences.
pub fn brute_covariance_drift(truth: &Matrix, imputed: &Matrix) -> f64 {
    let k = truth.cols();
    let mut sum = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                sum += (brute_cov(truth, i, j) - brute_cov(imputed, i, j)).powi(2);
            }
        }
    }
    sum.sqrt() / (k * (k - 1)) as f64
}
