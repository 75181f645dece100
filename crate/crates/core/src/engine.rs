//! Imputation methods: column-mean imputation, the standard denoising
//! autoencoder trained against its initial imputation, and the autoencoder
//! trained with metamorphic truth and imputation feedback.
//!
//! Every method takes a normalized table plus a mask. Cells flagged missing
//! are never read, and observed cells are copied to the output unchanged.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dae::{build_dae_with_dropout, DaeNetwork, DEFAULT_DROPOUT, DEFAULT_THETA};
use crate::missingness::MissingnessMask;
use crate::nn::{metamorphic_loss, mse_loss, AdamConfig, AdamState, Mode};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Column mean of the observed cells.
    Mean,
    /// Autoencoder trained with plain MSE against the initial imputation.
    Dae,
    /// Autoencoder trained with metamorphic truth and imputation feedback.
    DaeMt,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::DaeMt, Method::Dae, Method::Mean];

    pub fn label(self) -> &'static str {
        match self {
            Method::Mean => "Mean",
            Method::Dae => "DAE",
            Method::DaeMt => "DAE MT",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Mean => "mean",
            Method::Dae => "dae",
            Method::DaeMt => "dae_mt",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Method::Mean),
            "dae" => Ok(Method::Dae),
            "dae_mt" => Ok(Method::DaeMt),
            _ => Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        }
    }
}

/// How missing cells are filled before the autoencoder sees the table.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialFill {
    /// Observed column mean.
    Mean,
    /// Observed column maximum.
    ColumnMax,
    /// The true values; only meaningful for studying sensitivity to the
    /// initial imputation.
    Exact(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationConfig {
    pub method: Method,
    pub n_imputations: usize,
    pub total_epochs: usize,
    pub n_prime: usize,
    pub n_step: usize,
    pub n_feedback_steps: usize,
    pub theta: usize,
    pub dropout: f64,
    pub adam: AdamConfig,
    /// Rows per optimizer step; `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub initial_fill: InitialFill,
    pub base_seed: u64,
}

impl ImputationConfig {
    /// Defaults: 5 imputations of 500 epochs; 10 priming epochs then
    /// 245 feedback steps of 2 epochs; `θ = 7`; 50% input dropout.
    pub fn new(method: Method) -> Self {
        Self {
            method,
            n_imputations: 5,
            total_epochs: 500,
            n_prime: 10,
            n_step: 2,
            n_feedback_steps: 245,
            theta: DEFAULT_THETA,
            dropout: DEFAULT_DROPOUT,
            adam: AdamConfig::default(),
            batch_size: None,
            initial_fill: InitialFill::Mean,
            base_seed: 0,
        }
    }

    /// Shrinks the epoch budget keeping the prime/feedback proportions:
    /// `n_feedback_steps = (total − n_prime) / n_step`.
    pub fn with_total_epochs(mut self, total: usize) -> Self {
        self.total_epochs = total;
        self.n_prime = self.n_prime.min(total);
        self.n_feedback_steps = (total - self.n_prime) / self.n_step.max(1);
        self.n_prime = total - self.n_feedback_steps * self.n_step.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_imputations == 0 {
            return Err(Error::InvalidArgument("n_imputations must be positive".into()));
        }
        if self.method == Method::Mean {
            return Ok(());
        }
        if self.total_epochs == 0 {
            return Err(Error::InvalidArgument("total_epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if self.method == Method::DaeMt {
            if self.n_prime == 0 || self.n_step == 0 || self.n_feedback_steps == 0 {
                return Err(Error::InvalidArgument(
                    "n_prime, n_step and n_feedback_steps must be positive".into(),
                ));
            }
            let planned = self.n_prime + self.n_feedback_steps * self.n_step;
            if planned != self.total_epochs {
                return Err(Error::InvalidArgument(format!(
                    "n_prime + n_feedback_steps × n_step = {planned} but total_epochs = {}",
                    self.total_epochs
                )));
            }
        }
        Ok(())
    }
}

/// One completed imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationRun {
    /// Imputed table in normalized space.
    pub imputed: Matrix,
    pub method: Method,
    pub seed: u64,
    pub epochs: usize,
    pub optimizer_steps: u64,
    pub wall_time: Duration,
    /// For the feedback method: the imputation formed right after priming.
    pub after_prime: Option<Matrix>,
}

fn check_inputs(data: &Matrix, mask: &MissingnessMask) -> Result<()> {
    mask.ensure_shape(data.shape())?;
    if data.rows() == 0 || data.cols() == 0 {
        return Err(Error::Precondition("cannot impute an empty table".into()));
    }
    for c in 0..data.cols() {
        if (0..data.rows()).all(|r| mask.is_missing(r, c)) {
            return Err(Error::EmptyColumn {
                column: format!("#{c}"),
            });
        }
    }
    Ok(())
}

/// Observed cells from `data`, missing cells from `fill`.
pub fn merge_observed(data: &Matrix, fill: &Matrix, mask: &MissingnessMask) -> Matrix {
    let mut out = data.clone();
    for ((o, &f), &missing) in out
        .as_mut_slice()
        .iter_mut()
        .zip(fill.as_slice())
        .zip(mask.cells())
    {
        if missing {
            *o = f;
        }
    }
    out
}

fn observed_column_stat(data: &Matrix, mask: &MissingnessMask, max: bool) -> Vec<f64> {
    (0..data.cols())
        .map(|c| {
            let cells = (0..data.rows())
                .filter(|&r| !mask.is_missing(r, c))
                .map(|r| data.get(r, c));
            if max {
                cells.fold(f64::NEG_INFINITY, f64::max)
            } else {
                let (sum, n) = cells.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                sum / n as f64
            }
        })
        .collect()
}

/// Applies an initial fill to every missing cell.
pub fn initial_imputation(data: &Matrix, mask: &MissingnessMask, fill: &InitialFill) -> Result<Matrix> {
    check_inputs(data, mask)?;
    let filler = match fill {
        InitialFill::Mean | InitialFill::ColumnMax => {
            let stats = observed_column_stat(data, mask, matches!(fill, InitialFill::ColumnMax));
            Matrix::from_fn(data.rows(), data.cols(), |_, c| stats[c])
        }
        InitialFill::Exact(truth) => {
            truth.ensure_shape(data.shape(), "exact initial fill")?;
            truth.clone()
        }
    };
    Ok(merge_observed(data, &filler, mask))
}

pub fn mean_impute(data: &Matrix, mask: &MissingnessMask) -> Result<ImputationRun> {
    let start = Instant::now();
    let imputed = initial_imputation(data, mask, &InitialFill::Mean)?;
    Ok(ImputationRun {
        imputed,
        method: Method::Mean,
        seed: 0,
        epochs: 0,
        optimizer_steps: 0,
        wall_time: start.elapsed(),
        after_prime: None,
    })
}

/// Row index batches for one epoch. Every row appears exactly once.
pub fn epoch_batches(rows: usize, batch_size: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    match batch_size {
        None => vec![(0..rows).collect()],
        Some(b) if b >= rows => vec![(0..rows).collect()],
        Some(b) => {
            let mut order: Vec<usize> = (0..rows).collect();
            order.shuffle(rng);
            order.chunks(b).map(<[usize]>::to_vec).collect()
        }
    }
}

struct Trainer {
    dae: DaeNetwork,
    adam: AdamState,
    rng: ChaCha8Rng,
    batch_size: Option<usize>,
    epochs: usize,
}

impl Trainer {
    fn new(cols: usize, config: &ImputationConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dae = build_dae_with_dropout(cols, config.theta, config.dropout, &mut rng)?;
        let adam = AdamState::new(&dae.network().parameter_lengths(), config.adam);
        Ok(Self {
            dae,
            adam,
            rng,
            batch_size: config.batch_size,
            epochs: 0,
        })
    }

    /// One pass over all rows. `table` is both the corrupted input and the
    /// reference; with a mask the loss is metamorphic.
    fn epoch(&mut self, table: &Matrix, mask: Option<&MissingnessMask>) -> Result<f64> {
        let batches = epoch_batches(table.rows(), self.batch_size, &mut self.rng);
        let mut total = 0.0;
        for rows in &batches {
            let full = rows.len() == table.rows();
            let batch = if full { table.clone() } else { table.select_rows(rows) };
            let net = self.dae.network_mut();
            let pred = net.forward(&batch, Mode::Train, &mut self.rng)?;
            let loss = match mask {
                None => mse_loss(&batch, &pred)?,
                Some(m) if full => metamorphic_loss(&batch, &pred, m)?,
                Some(m) => metamorphic_loss(&batch, &pred, &m.select_rows(rows))?,
            };
            let grads = net.backward(&loss.gradient)?;
            self.adam.step(&mut net.parameters_mut(), &grads.slices())?;
            total += loss.value * rows.len() as f64;
        }
        self.epochs += 1;
        Ok(total / table.rows() as f64)
    }

    fn predict(&mut self, table: &Matrix) -> Result<Matrix> {
        self.dae.network_mut().forward(table, Mode::Infer, &mut self.rng)
    }
}

/// Standard autoencoder imputation: the initial imputation is the training
/// target for every cell.
pub fn dae_impute_standard(
    data: &Matrix,
    mask: &MissingnessMask,
    config: &ImputationConfig,
    seed: u64,
) -> Result<ImputationRun> {
    config.validate()?;
    let start = Instant::now();
    let x0 = initial_imputation(data, mask, &config.initial_fill)?;
    let mut trainer = Trainer::new(data.cols(), config, seed)?;
    for _ in 0..config.total_epochs {
        trainer.epoch(&x0, None)?;
    }
    let pred = trainer.predict(&x0)?;
    Ok(ImputationRun {
        imputed: merge_observed(data, &pred, mask),
        method: Method::Dae,
        seed,
        epochs: trainer.epochs,
        optimizer_steps: trainer.adam.steps(),
        wall_time: start.elapsed(),
        after_prime: None,
    })
}

/// Metamorphic truth with imputation feedback:
///
/// 1. fill missing cells to get `x̃₀` and train `n_prime` epochs on it;
/// 2. predict, re-impute the missing cells from the prediction to get `x̃ᵢ`,
///    train `n_step` epochs on `x̃ᵢ`; repeat `n_feedback_steps` times;
/// 3. return the last `x̃ᵢ`.
///
/// Training always uses the metamorphic loss, so missing cells never pull
/// the network toward their current imputed values. The optimizer state
/// carries over from priming into the feedback steps.
pub fn dae_impute_mt(
    data: &Matrix,
    mask: &MissingnessMask,
    config: &ImputationConfig,
    seed: u64,
) -> Result<ImputationRun> {
    config.validate()?;
    let start = Instant::now();
    let x0 = initial_imputation(data, mask, &config.initial_fill)?;
    let mut trainer = Trainer::new(data.cols(), config, seed)?;
    for _ in 0..config.n_prime {
        trainer.epoch(&x0, Some(mask))?;
    }
    let mut pred = trainer.predict(&x0)?;
    let mut current = x0;
    let mut after_prime = None;
    for _ in 0..config.n_feedback_steps {
        current = merge_observed(data, &pred, mask);
        if after_prime.is_none() {
            after_prime = Some(current.clone());
        }
        for _ in 0..config.n_step {
            trainer.epoch(&current, Some(mask))?;
        }
        pred = trainer.predict(&current)?;
    }
    Ok(ImputationRun {
        imputed: current,
        method: Method::DaeMt,
        seed,
        epochs: trainer.epochs,
        optimizer_steps: trainer.adam.steps(),
        wall_time: start.elapsed(),
        after_prime,
    })
}

/// A single imputation with the configured method.
pub fn impute_once(
    data: &Matrix,
    mask: &MissingnessMask,
    config: &ImputationConfig,
    seed: u64,
) -> Result<ImputationRun> {
    match config.method {
        Method::Mean => mean_impute(data, mask),
        Method::Dae => dae_impute_standard(data, mask, config, seed),
        Method::DaeMt => dae_impute_mt(data, mask, config, seed),
    }
}

/// `n_imputations` independent runs seeded `base_seed + k`. Runs execute in
/// parallel and are returned in seed order. Mean imputation is
/// deterministic, so it always yields a single run.
pub fn multiple_impute(
    data: &Matrix,
    mask: &MissingnessMask,
    config: &ImputationConfig,
) -> Result<Vec<ImputationRun>> {
    config.validate()?;
    check_inputs(data, mask)?;
    if config.method == Method::Mean {
        return Ok(vec![mean_impute(data, mask)?]);
    }
    (0..config.n_imputations as u64)
        .into_par_iter()
        .map(|k| impute_once(data, mask, config, config.base_seed.wrapping_add(k)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_config(method: Method) -> ImputationConfig {
        ImputationConfig {
            n_imputations: 2,
            theta: 2,
            ..ImputationConfig::new(method)
        }
        .with_total_epochs(20)
    }

    fn table() -> (Matrix, MissingnessMask) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = Matrix::from_fn(30, 4, |_, _| rng.gen_range(-1.5..1.5));
        let mask = MissingnessMask::from_fn(30, 4, |r, c| c >= 2 && (r * 7 + c) % 5 == 0);
        (data, mask)
    }

    #[test]
    fn mean_of_column() {
        let data = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![99.0], vec![3.0]]).unwrap();
        let mask = MissingnessMask::from_fn(4, 1, |r, _| r == 2);
        let run = mean_impute(&data, &mask).unwrap();
        assert_eq!(run.imputed.column(0).collect::<Vec<_>>(), vec![1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_mask_is_identity() {
        let (data, _) = table();
        let mask = MissingnessMask::empty(30, 4);
        assert_eq!(mean_impute(&data, &mask).unwrap().imputed, data);
        for method in [Method::Dae, Method::DaeMt] {
            let run = impute_once(&data, &mask, &small_config(method), 1).unwrap();
            assert_eq!(run.imputed, data);
        }
    }

    #[test]
    fn fully_missing_column_rejected() {
        let data = Matrix::zeros(3, 2);
        let mask = MissingnessMask::from_fn(3, 2, |_, c| c == 1);
        assert!(matches!(mean_impute(&data, &mask), Err(Error::EmptyColumn { .. })));
    }

    #[test]
    fn column_max_fill() {
        let data = Matrix::from_rows(&[vec![1.0], vec![5.0], vec![99.0], vec![3.0]]).unwrap();
        let mask = MissingnessMask::from_fn(4, 1, |r, _| r == 2);
        let filled = initial_imputation(&data, &mask, &InitialFill::ColumnMax).unwrap();
        assert_eq!(filled.get(2, 0), 5.0);
    }

    #[test]
    fn observed_cells_preserved_and_finite() {
        let (data, mask) = table();
        for method in Method::ALL {
            for run in multiple_impute(&data, &mask, &small_config(method)).unwrap() {
                assert!(run.imputed.is_finite());
                for (k, &missing) in mask.cells().iter().enumerate() {
                    if !missing {
                        assert_eq!(run.imputed.as_slice()[k].to_bits(), data.as_slice()[k].to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn epoch_accounting() {
        let (data, mask) = table();
        let cfg = small_config(Method::DaeMt);
        assert_eq!(cfg.n_prime + cfg.n_feedback_steps * cfg.n_step, 20);
        let run = dae_impute_mt(&data, &mask, &cfg, 3).unwrap();
        assert_eq!(run.epochs, 20);
        assert_eq!(run.optimizer_steps, 20);
        let batched = ImputationConfig {
            batch_size: Some(8),
            ..cfg
        };
        let run = dae_impute_mt(&data, &mask, &batched, 3).unwrap();
        assert_eq!(run.epochs, 20);
        assert_eq!(run.optimizer_steps, 20 * 4);
    }

    #[test]
    fn default_epoch_budget() {
        let cfg = ImputationConfig::new(Method::DaeMt);
        assert_eq!(cfg.n_prime + cfg.n_feedback_steps * cfg.n_step, cfg.total_epochs);
        assert_eq!((cfg.n_prime, cfg.n_feedback_steps, cfg.n_step, cfg.total_epochs), (10, 245, 2, 500));
        cfg.validate().unwrap();
        let bad = ImputationConfig {
            n_feedback_steps: 100,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn batches_cover_every_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for batch in [None, Some(7), Some(64)] {
            let mut seen: Vec<usize> = epoch_batches(50, batch, &mut rng).concat();
            seen.sort_unstable();
            assert_eq!(seen, (0..50).collect::<Vec<_>>());
        }
    }

    #[test]
    fn multiple_imputation_is_deterministic() {
        let (data, mask) = table();
        let cfg = small_config(Method::DaeMt);
        let a = multiple_impute(&data, &mask, &cfg).unwrap();
        let b = multiple_impute(&data, &mask, &cfg).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.imputed, y.imputed);
            assert_eq!(x.seed, y.seed);
        }
        assert_eq!(a[1].seed, cfg.base_seed + 1);
        let single = ImputationConfig { n_imputations: 1, ..cfg };
        assert_eq!(multiple_impute(&data, &mask, &single).unwrap().len(), 1);
    }
}
