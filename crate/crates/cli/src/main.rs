use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use metaimpute::dataset::{load_csv, normalize, normalization_params, Catalog, Dataset, LoadOptions};
use metaimpute::engine::{multiple_impute, Method};
use metaimpute::experiment::{
    emit_report, emit_sensitivity, induce_cell, mask_stem, render_sensitivity_table, render_tables,
    run_experiment, run_sensitivity_study, ExperimentConfig, TargetSetting,
};
use metaimpute::metrics::{covariance_drift, rmse_sum};
use metaimpute::missingness::{load_mask, save_mask, Mechanism, MissingnessMask, Pattern};
use metaimpute::Matrix;

#[derive(Parser)]
#[command(name = "metaimpute", version, about = "Multiple imputation benchmarks with denoising autoencoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the dataset × mechanism × pattern × method grid and write reports.
    Run {
        #[command(flatten)]
        common: Common,
        /// Restrict to these datasets (repeatable).
        #[arg(long)]
        dataset: Vec<String>,
    },
    /// Compare initial imputations for the standard DAE on a MAR random mask.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "BH")]
        dataset: String,
    },
    /// Tune and draw one mask, writing it with its spec sidecar.
    Induce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        mechanism: Mechanism,
        #[arg(long)]
        pattern: Pattern,
        /// Missing fraction to aim for; the config's target otherwise.
        #[arg(long)]
        target: Option<f64>,
    },
    /// Impute a dataset under a saved mask and write one CSV per imputation.
    Impute {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: String,
        /// A `<stem>.mask.csv` file written by `induce` or `run`.
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value = "dae_mt")]
        method: Method,
    },
    /// Score imputed CSV files against the original dataset.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        mask: PathBuf,
        #[arg(required = true)]
        imputed: Vec<PathBuf>,
    },
}

fn load_dataset(config: &ExperimentConfig, key: &str) -> Result<Dataset> {
    let catalog = Catalog::load_dir(&config.catalog)
        .with_context(|| format!("reading catalog {}", config.catalog.display()))?;
    Ok(catalog.find(key)?.load()?)
}

fn read_mask(path: &Path, dataset: &Dataset) -> Result<MissingnessMask> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .context("mask path has no file name")?;
    let Some(stem) = name.strip_suffix(".mask.csv") else {
        bail!("mask file must end in .mask.csv: {}", path.display());
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    let (header, mask) = load_mask(dir, stem)?;
    if header != dataset.column_names() {
        bail!("mask header does not match the columns of {}", dataset.name);
    }
    mask.ensure_shape(dataset.values.shape())?;
    Ok(mask)
}

fn matrix_csv(header: &[&str], m: &Matrix) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn run(common: &Common, datasets: &[String]) -> Result<ExitCode> {
    let mut config = common.load()?;
    if !datasets.is_empty() {
        config.datasets = datasets.to_vec();
    }
    let report = run_experiment(&config)?;
    let files = emit_report(&report, &config.out)?;
    print!("{}", render_tables(&report));
    eprintln!(
        "wrote {} files to {} in {:.1}s",
        files.len(),
        config.out.display(),
        report.runtime.as_secs_f64()
    );
    let failed = report.hard_failures();
    if failed > 0 {
        eprintln!("{failed} grid cell(s) failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn sensitivity(common: &Common, key: &str) -> Result<()> {
    let config = common.load()?;
    let dataset = load_dataset(&config, key)?;
    let report = run_sensitivity_study(&dataset, &config)?;
    emit_sensitivity(&report, &config.out)?;
    print!("{}", render_sensitivity_table(&report));
    Ok(())
}

fn induce(common: &Common, key: &str, mechanism: Mechanism, pattern: Pattern, target: Option<f64>) -> Result<()> {
    let mut config = common.load()?;
    if let Some(t) = target {
        config.missingness.target = TargetSetting::Fixed(t);
        config.validate()?;
    }
    let dataset = load_dataset(&config, key)?;
    let cell = induce_cell(&dataset, mechanism, pattern, &config)?;
    let stem = mask_stem(&dataset.name, mechanism, pattern);
    save_mask(&config.out, &stem, &cell.mask, &dataset.column_names(), Some(&config.digest()?))?;
    let spec = cell.tuned.spec;
    println!(
        "{} {} {}: target {:.1}%, drawn {:.1}%, p_m {:.4}, p_p {:.4}",
        dataset.name,
        mechanism,
        pattern,
        100.0 * cell.target,
        100.0 * cell.mask.missing_fraction(),
        spec.p_m,
        spec.p_p
    );
    if let Some(w) = cell.warning {
        eprintln!("warning: {w}");
    }
    println!("{}", config.out.join(format!("{stem}.mask.csv")).display());
    Ok(())
}

fn impute(common: &Common, key: &str, mask_path: &Path, method: Method) -> Result<()> {
    let config = common.load()?;
    let dataset = load_dataset(&config, key)?;
    let mask = read_mask(mask_path, &dataset)?;
    let (normalized, params) = normalize(&dataset, Some(&mask))?;
    let cfg = config.imputation.to_config(method, config.seed);
    let runs = multiple_impute(&normalized.values, &mask, &cfg)?;
    fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    let header = dataset.column_names();
    for (k, run) in runs.iter().enumerate() {
        let path = config.out.join(format!("{}_{}_{k}.csv", dataset.name.to_ascii_lowercase(), method));
        fs::write(&path, matrix_csv(&header, &params.invert(&run.imputed)?))
            .with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn score(common: &Common, key: &str, mask_path: &Path, imputed: &[PathBuf]) -> Result<()> {
    let config = common.load()?;
    let dataset = load_dataset(&config, key)?;
    let mask = read_mask(mask_path, &dataset)?;
    let params = normalization_params(&dataset, Some(&mask))?;
    let truth = params.apply(&dataset.values)?;
    println!("file,rmse_sum,covariance_drift");
    for path in imputed {
        let table = load_csv(path, &LoadOptions::default())?;
        if table.column_names() != dataset.column_names() {
            bail!("{} does not have the columns of {}", path.display(), dataset.name);
        }
        let values = params.apply(&table.values)?;
        println!(
            "{},{},{}",
            path.display(),
            rmse_sum(&truth, &values, &mask)?,
            covariance_drift(&truth, &values)?
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { common, dataset } => run(common, dataset),
        Command::Sensitivity { common, dataset } => sensitivity(common, dataset).map(|_| ExitCode::SUCCESS),
        Command::Induce {
            common,
            dataset,
            mechanism,
            pattern,
            target,
        } => induce(common, dataset, *mechanism, *pattern, *target).map(|_| ExitCode::SUCCESS),
        Command::Impute {
            common,
            dataset,
            mask,
            method,
        } => impute(common, dataset, mask, *method).map(|_| ExitCode::SUCCESS),
        Command::Score {
            common,
            dataset,
            mask,
            imputed,
        } => score(common, dataset, mask, imputed).map(|_| ExitCode::SUCCESS),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
