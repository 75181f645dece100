//! Benchmark orchestration: the dataset × mechanism × pattern × method grid,
//! the initial-imputation sensitivity study, and report rendering.
//!
//! Every random choice in a run is derived from the configured base seed and
//! the grid coordinates, so a report is a pure function of `(config, seed)`.
//! Rendered reports never contain timings or absolute paths.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::dataset::{normalize, Catalog, Dataset};
use crate::engine::{multiple_impute, ImputationConfig, InitialFill, Method};
use crate::metrics::{summarize, Metric, MetricSummary};
use crate::missingness::{
    induce, load_mask, save_mask, tune_probabilities, Mechanism, MissingnessMask, Pattern, TunedSpec,
};
use crate::nn::AdamConfig;
use crate::{Error, Result};

macro_rules! serde_via_str {
    ($($t:ty),*) => {$(
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    )*};
}

serde_via_str!(Mechanism, Pattern, Method);

/// Achieved missing percentages of the reference benchmark, per dataset, in
/// the order random MCAR/MAR/MNAR, then uniform MCAR/MAR/MNAR.
const REFERENCE_FRACTIONS: [(&str, [f64; 6]); 6] = [
    ("BH", [0.158, 0.178, 0.152, 0.161, 0.170, 0.155]),
    ("GL", [0.144, 0.140, 0.142, 0.161, 0.142, 0.141]),
    ("IS", [0.204, 0.146, 0.100, 0.142, 0.121, 0.106]),
    ("BC", [0.164, 0.194, 0.181, 0.167, 0.151, 0.161]),
    ("SN", [0.160, 0.159, 0.102, 0.167, 0.147, 0.121]),
    ("WN", [0.161, 0.140, 0.118, 0.143, 0.102, 0.107]),
];

/// Reference missing fraction for a grid cell, if the dataset is one of the
/// benchmark datasets.
pub fn reference_fraction(dataset: &str, mechanism: Mechanism, pattern: Pattern) -> Option<f64> {
    let (_, row) = REFERENCE_FRACTIONS
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(dataset))?;
    let m = Mechanism::ALL.iter().position(|&x| x == mechanism)?;
    let p = Pattern::ALL.iter().position(|&x| x == pattern)?;
    Some(row[p * 3 + m])
}

/// Either `"reference"` (per-cell reference fractions, band midpoint for
/// other datasets) or a fixed fraction for every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub mechanisms: Vec<Mechanism>,
    pub patterns: Vec<Pattern>,
    pub methods: Vec<Method>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            mechanisms: Mechanism::ALL.to_vec(),
            patterns: Pattern::ALL.to_vec(),
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissingnessSection {
    pub target: TargetSetting,
    /// Acceptable missing-fraction band; its midpoint is the target for
    /// datasets without a reference fraction.
    pub band: [f64; 2],
    /// Lowered target used when a cell cannot reach its target.
    pub fallback: f64,
    pub tolerance: f64,
}

impl Default for MissingnessSection {
    fn default() -> Self {
        Self {
            target: TargetSetting::Named("reference".into()),
            band: [0.14, 0.20],
            fallback: 0.10,
            tolerance: 0.005,
        }
    }
}

impl MissingnessSection {
    pub fn target_for(&self, dataset: &str, mechanism: Mechanism, pattern: Pattern) -> f64 {
        match &self.target {
            TargetSetting::Fixed(t) => *t,
            TargetSetting::Named(_) => reference_fraction(dataset, mechanism, pattern)
                .unwrap_or(0.5 * (self.band[0] + self.band[1])),
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        match &self.target {
            TargetSetting::Fixed(t) if !unit(*t) => {
                return Err(Error::Config(format!("target fraction {t} outside (0, 1)")))
            }
            TargetSetting::Named(n) if n != "reference" => {
                return Err(Error::Config(format!(
                    "target must be a fraction or \"reference\", got \"{n}\""
                )))
            }
            _ => {}
        }
        if !(unit(self.band[0]) && unit(self.band[1]) && self.band[0] <= self.band[1]) {
            return Err(Error::Config(format!("bad missingness band {:?}", self.band)));
        }
        if !unit(self.fallback) {
            return Err(Error::Config(format!("fallback {} outside (0, 1)", self.fallback)));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputationSection {
    pub n_imputations: usize,
    pub total_epochs: usize,
    pub n_prime: usize,
    pub n_step: usize,
    pub theta: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    /// Rows per optimizer step; 0 trains full-batch.
    pub batch_size: usize,
}

impl Default for ImputationSection {
    fn default() -> Self {
        let base = ImputationConfig::new(Method::DaeMt);
        Self {
            n_imputations: base.n_imputations,
            total_epochs: base.total_epochs,
            n_prime: base.n_prime,
            n_step: base.n_step,
            theta: base.theta,
            dropout: base.dropout,
            learning_rate: base.adam.learning_rate,
            batch_size: 32,
        }
    }
}

impl ImputationSection {
    pub fn to_config(&self, method: Method, base_seed: u64) -> ImputationConfig {
        let n_feedback_steps = self
            .total_epochs
            .saturating_sub(self.n_prime)
            .checked_div(self.n_step)
            .unwrap_or(0);
        ImputationConfig {
            method,
            n_imputations: self.n_imputations,
            total_epochs: self.total_epochs,
            n_prime: self.n_prime,
            n_step: self.n_step,
            n_feedback_steps,
            theta: self.theta,
            dropout: self.dropout,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            batch_size: (self.batch_size > 0).then_some(self.batch_size),
            initial_fill: InitialFill::Mean,
            base_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory. Not part of the config digest.
    pub out: PathBuf,
    /// Directory of dataset manifests.
    pub catalog: PathBuf,
    /// Dataset abbreviations or names, in report order.
    pub datasets: Vec<String>,
    pub grid: GridSection,
    pub missingness: MissingnessSection,
    pub imputation: ImputationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("results"),
            catalog: PathBuf::from("data/catalog"),
            datasets: REFERENCE_FRACTIONS.iter().map(|(k, _)| k.to_string()).collect(),
            grid: GridSection::default(),
            missingness: MissingnessSection::default(),
            imputation: ImputationSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets selected".into()));
        }
        let g = &self.grid;
        if g.mechanisms.is_empty() || g.patterns.is_empty() || g.methods.is_empty() {
            return Err(Error::Config(
                "grid needs at least one mechanism, pattern and method".into(),
            ));
        }
        self.missingness.validate()?;
        for &m in &g.methods {
            self.imputation
                .to_config(m, 0)
                .validate()
                .map_err(|e| Error::Config(format!("imputation settings: {e}")))?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical TOML rendering, with the output directory
    /// blanked so relocating results does not change it.
    pub fn digest(&self) -> Result<String> {
        let canonical = ExperimentConfig {
            out: PathBuf::new(),
            ..self.clone()
        };
        Ok(sha256_hex(canonical.to_toml()?.as_bytes()))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed for one purpose within a run, derived from the base seed and a
/// list of labels.
pub fn derive_seed(base: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub rmse_sum: MetricSummary,
    pub covariance_drift: MetricSummary,
}

impl MethodResult {
    pub fn metric(&self, metric: Metric) -> &MetricSummary {
        match metric {
            Metric::RmseSum => &self.rmse_sum,
            Metric::CovarianceDrift => &self.covariance_drift,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    /// Fraction the tuner aimed for, after any fallback.
    pub target: f64,
    pub tuned: TunedSpec,
    /// Missing fraction of the persisted mask.
    pub realized: f64,
    pub mask_digest: String,
    pub warning: Option<String>,
    pub methods: Vec<MethodResult>,
}

impl CellResult {
    pub fn method(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == method)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Completed(CellResult),
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub dataset: String,
    pub mechanism: Mechanism,
    pub pattern: Pattern,
    pub outcome: CellOutcome,
}

impl CellReport {
    pub fn result(&self) -> Option<&CellResult> {
        match &self.outcome {
            CellOutcome::Completed(r) => Some(r),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub config_digest: String,
    pub seed: u64,
    pub cells: Vec<CellReport>,
    pub runtime: Duration,
}

impl ExperimentReport {
    pub fn hard_failures(&self) -> usize {
        self.cells.iter().filter(|c| c.result().is_none()).count()
    }

    pub fn cell(&self, dataset: &str, mechanism: Mechanism, pattern: Pattern) -> Option<&CellReport> {
        self.cells.iter().find(|c| {
            c.dataset.eq_ignore_ascii_case(dataset) && c.mechanism == mechanism && c.pattern == pattern
        })
    }

    /// Summary of one metric for one method in one cell, if that cell ran.
    pub fn summary(
        &self,
        dataset: &str,
        mechanism: Mechanism,
        pattern: Pattern,
        method: Method,
        metric: Metric,
    ) -> Option<&MetricSummary> {
        self.cell(dataset, mechanism, pattern)?
            .result()?
            .method(method)
            .map(|r| r.metric(metric))
    }
}

/// File stem for a cell's persisted mask.
pub fn mask_stem(dataset: &str, mechanism: Mechanism, pattern: Pattern) -> String {
    format!("{}_{}_{}", dataset.to_ascii_lowercase(), mechanism.to_string().to_ascii_lowercase(), pattern)
}

/// Tunes toward `target`. When the target is out of reach and above the
/// fallback, tunes again toward the fallback. A remaining shortfall is
/// reported as a warning and the best achievable spec is kept.
pub fn tune_with_fallback(
    dataset: &Dataset,
    mechanism: Mechanism,
    pattern: Pattern,
    target: f64,
    section: &MissingnessSection,
    seed: u64,
) -> Result<(TunedSpec, f64, Option<String>)> {
    let tuned = tune_probabilities(dataset, mechanism, pattern, target, section.tolerance, seed)?;
    if tuned.shortfall.is_none() {
        return Ok((tuned, target, None));
    }
    if target > section.fallback {
        let low = tune_probabilities(dataset, mechanism, pattern, section.fallback, section.tolerance, seed)?;
        let note = format!(
            "target {:.1}% unreachable, lowered to {:.1}%",
            100.0 * target,
            100.0 * section.fallback
        );
        if low.shortfall.is_none() {
            return Ok((low, section.fallback, Some(note)));
        }
    }
    let note = format!(
        "target {:.1}% unreachable, best achievable {:.1}%",
        100.0 * target,
        100.0 * tuned.achieved
    );
    Ok((tuned, target, Some(note)))
}

/// A cell's tuned mechanism and drawn mask.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedCell {
    pub tuned: TunedSpec,
    pub target: f64,
    pub warning: Option<String>,
    pub mask: MissingnessMask,
}

/// Tunes and draws the mask for one grid cell, with the seeds
/// [`run_experiment`] uses for it.
pub fn induce_cell(
    dataset: &Dataset,
    mechanism: Mechanism,
    pattern: Pattern,
    config: &ExperimentConfig,
) -> Result<InducedCell> {
    let key = dataset.name.as_str();
    let (m, p) = (mechanism.to_string(), pattern.to_string());
    let target = config.missingness.target_for(key, mechanism, pattern);
    let (tuned, target, warning) = tune_with_fallback(
        dataset,
        mechanism,
        pattern,
        target,
        &config.missingness,
        derive_seed(config.seed, &[key, &m, &p, "tune"]),
    )?;
    let mask = induce(dataset, &tuned.spec, derive_seed(config.seed, &[key, &m, &p, "mask"]))?;
    Ok(InducedCell {
        tuned,
        target,
        warning,
        mask,
    })
}

fn run_cell(
    dataset: &Dataset,
    mechanism: Mechanism,
    pattern: Pattern,
    config: &ExperimentConfig,
    config_digest: &str,
    mask_dir: &Path,
) -> Result<CellResult> {
    let key = dataset.name.as_str();
    let (m, p) = (mechanism.to_string(), pattern.to_string());
    let InducedCell {
        tuned,
        target,
        warning,
        mask,
    } = induce_cell(dataset, mechanism, pattern, config)?;
    let stem = mask_stem(key, mechanism, pattern);
    save_mask(mask_dir, &stem, &mask, &dataset.column_names(), Some(config_digest))?;
    let mask_digest = mask.digest();

    let (normalized, _) = normalize(dataset, Some(&mask))?;
    let truth = &normalized.values;
    let impute_seed = derive_seed(config.seed, &[key, &m, &p, "impute"]);
    let mut methods = Vec::with_capacity(config.grid.methods.len());
    for &method in &config.grid.methods {
        // Every method reads the mask back from disk; all must see the same cells.
        let (_, used) = load_mask(mask_dir, &stem)?;
        if used.digest() != mask_digest {
            return Err(Error::Precondition(format!(
                "mask {stem} changed on disk before {method} ran"
            )));
        }
        let cfg = config.imputation.to_config(method, impute_seed);
        let runs = multiple_impute(truth, &used, &cfg)?;
        methods.push(MethodResult {
            method,
            rmse_sum: summarize(&runs, truth, &used, Metric::RmseSum)?,
            covariance_drift: summarize(&runs, truth, &used, Metric::CovarianceDrift)?,
        });
    }
    Ok(CellResult {
        target,
        tuned,
        realized: mask.missing_fraction(),
        mask_digest,
        warning,
        methods,
    })
}

/// Runs the configured grid. Masks are persisted under `<out>/masks`. A
/// dataset that cannot be loaded or a cell that errors is recorded as failed
/// and the rest of the grid continues.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let digest = config.digest()?;
    let catalog = Catalog::load_dir(&config.catalog)?;
    let mask_dir = config.out.join("masks");
    let mut cells = Vec::new();
    for key in &config.datasets {
        let loaded = catalog.find(key).and_then(|entry| entry.load());
        let label = catalog
            .find(key)
            .map(|e| e.abbreviation.clone())
            .unwrap_or_else(|_| key.clone());
        for &pattern in &config.grid.patterns {
            for &mechanism in &config.grid.mechanisms {
                let outcome = match &loaded {
                    Err(e) => CellOutcome::Failed { reason: e.to_string() },
                    Ok(ds) => match run_cell(ds, mechanism, pattern, config, &digest, &mask_dir) {
                        Ok(r) => CellOutcome::Completed(r),
                        Err(e) => CellOutcome::Failed { reason: e.to_string() },
                    },
                };
                cells.push(CellReport {
                    dataset: label.clone(),
                    mechanism,
                    pattern,
                    outcome,
                });
            }
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        config_digest: digest,
        seed: config.seed,
        cells,
        runtime: start.elapsed(),
    })
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("rendering CSV: {e}"))
}

fn csv_text(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(csv_error)?;
    String::from_utf8(bytes).map_err(csv_error)
}

/// One row per cell × method × metric × run, followed by a `mean` row per
/// group whose `max` column holds the maximum over runs.
pub fn render_results_csv(report: &ExperimentReport) -> Result<String> {
    let mut rows = vec![[
        "config_digest", "seed", "dataset", "mechanism", "pattern", "method", "metric", "run", "value", "max",
    ]
    .map(String::from)
    .to_vec()];
    for cell in &report.cells {
        let Some(result) = cell.result() else { continue };
        for mr in &result.methods {
            for metric in Metric::ALL {
                let s = mr.metric(metric);
                let base = [
                    report.config_digest.clone(),
                    report.seed.to_string(),
                    cell.dataset.clone(),
                    cell.mechanism.to_string(),
                    cell.pattern.to_string(),
                    mr.method.to_string(),
                    metric.to_string(),
                ];
                for (k, v) in s.values.iter().enumerate() {
                    let mut row = base.to_vec();
                    row.extend([k.to_string(), v.to_string(), String::new()]);
                    rows.push(row);
                }
                let mut row = base.to_vec();
                row.extend(["mean".into(), s.mean.to_string(), s.max.to_string()]);
                rows.push(row);
            }
        }
    }
    csv_text(rows)
}

/// One row per grid cell with its missingness outcome or failure reason.
pub fn render_cells_csv(report: &ExperimentReport) -> Result<String> {
    let mut rows = vec![[
        "config_digest", "seed", "dataset", "mechanism", "pattern", "status", "target", "achieved", "realized",
        "p_m", "p_p", "triggers", "mask_digest", "note",
    ]
    .map(String::from)
    .to_vec()];
    for cell in &report.cells {
        let mut row = vec![
            report.config_digest.clone(),
            report.seed.to_string(),
            cell.dataset.clone(),
            cell.mechanism.to_string(),
            cell.pattern.to_string(),
        ];
        match &cell.outcome {
            CellOutcome::Completed(r) => {
                let spec = &r.tuned.spec;
                row.extend([
                    if r.warning.is_some() { "degraded" } else { "ok" }.to_string(),
                    r.target.to_string(),
                    r.tuned.achieved.to_string(),
                    r.realized.to_string(),
                    spec.p_m.to_string(),
                    spec.p_p.to_string(),
                    spec.triggers.map_or("none".into(), |(a, b)| format!("{a};{b}")),
                    r.mask_digest.clone(),
                    r.warning.clone().unwrap_or_default(),
                ]);
            }
            CellOutcome::Failed { reason } => {
                row.push("failed".into());
                row.extend(std::iter::repeat_n(String::new(), 7));
                row.push(reason.clone());
            }
        }
        rows.push(row);
    }
    csv_text(rows)
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c < 3 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Human-readable tables: `mean (max)` per method, `*` marking the lowest
/// mean in each row. Covariance drift is shown ×10.
pub fn render_tables(report: &ExperimentReport) -> String {
    let methods = &report.config.grid.methods;
    let mut out = format!("config {}\nseed {}\n", report.config_digest, report.seed);
    for (metric, title, scale) in [
        (Metric::RmseSum, "RMSE_sum, mean (max) over imputations", 1.0),
        (Metric::CovarianceDrift, "Covariance drift (x10), mean (max) over imputations", 10.0),
    ] {
        let _ = write!(out, "\n{title}\n\n");
        let mut rows = vec![["Dataset", "Pattern", "Mechanism", "Missing %"]
            .map(String::from)
            .to_vec()];
        rows[0].extend(methods.iter().map(|m| m.label().to_string()));
        for cell in &report.cells {
            let mut row = vec![cell.dataset.clone(), cell.pattern.to_string(), cell.mechanism.to_string()];
            match &cell.outcome {
                CellOutcome::Failed { .. } => {
                    row.push("-".into());
                    row.extend(methods.iter().map(|_| "failed".to_string()));
                }
                CellOutcome::Completed(r) => {
                    let flag = if r.warning.is_some() { "!" } else { "" };
                    row.push(format!("{:.1}{flag}", 100.0 * r.realized));
                    let best = r
                        .methods
                        .iter()
                        .map(|m| m.metric(metric).mean)
                        .fold(f64::INFINITY, f64::min);
                    for &m in methods {
                        row.push(match r.method(m) {
                            None => "-".into(),
                            Some(mr) => {
                                let s = mr.metric(metric);
                                let mark = if s.mean == best { "*" } else { " " };
                                format!("{:.2} ({:.2}){mark}", scale * s.mean, scale * s.max)
                            }
                        });
                    }
                }
            }
            rows.push(row);
        }
        out.push_str(&aligned(&rows));
    }
    let notes: Vec<String> = report
        .cells
        .iter()
        .filter_map(|c| {
            let text = match &c.outcome {
                CellOutcome::Failed { reason } => format!("failed: {reason}"),
                CellOutcome::Completed(r) => r.warning.clone()?,
            };
            Some(format!("{} {} {}: {text}", c.dataset, c.mechanism, c.pattern))
        })
        .collect();
    if !notes.is_empty() {
        out.push_str("\nNotes (! marks a degraded missing fraction)\n\n");
        for n in notes {
            out.push_str(&n);
            out.push('\n');
        }
    }
    out
}

fn write_file(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `results.csv`, `cells.csv` and `tables.txt` into `dir`.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(vec![
        write_file(dir.join("results.csv"), &render_results_csv(report)?)?,
        write_file(dir.join("cells.csv"), &render_cells_csv(report)?)?,
        write_file(dir.join("tables.txt"), &render_tables(report))?,
    ])
}

/// Initial imputation used by the standard autoencoder in the sensitivity
/// study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillVariant {
    PerfectGuess,
    Mean,
    Max,
}

impl FillVariant {
    pub const ALL: [FillVariant; 3] = [FillVariant::PerfectGuess, FillVariant::Mean, FillVariant::Max];

    pub fn label(self) -> &'static str {
        match self {
            FillVariant::PerfectGuess => "perfect_guess",
            FillVariant::Mean => "mean",
            FillVariant::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub dataset: String,
    pub config_digest: String,
    pub seed: u64,
    pub target: f64,
    pub realized: f64,
    pub mask_digest: String,
    pub variants: Vec<(FillVariant, MetricSummary)>,
}

impl SensitivityReport {
    pub fn variant(&self, v: FillVariant) -> &MetricSummary {
        &self
            .variants
            .iter()
            .find(|(x, _)| *x == v)
            .expect("every variant is run")
            .1
    }
}

/// Standard DAE on one MAR random mask, with the missing cells initially
/// filled by the true values, the observed column means, or the observed
/// column maxima. Each variant runs `n_imputations` times.
pub fn run_sensitivity_study(dataset: &Dataset, config: &ExperimentConfig) -> Result<SensitivityReport> {
    config.validate()?;
    let key = dataset.name.as_str();
    let (mechanism, pattern) = (Mechanism::Mar, Pattern::Random);
    let target = config.missingness.target_for(key, mechanism, pattern);
    let (tuned, target, _) = tune_with_fallback(
        dataset,
        mechanism,
        pattern,
        target,
        &config.missingness,
        derive_seed(config.seed, &[key, "sensitivity", "tune"]),
    )?;
    let mask: MissingnessMask = induce(dataset, &tuned.spec, derive_seed(config.seed, &[key, "sensitivity", "mask"]))?;
    let (normalized, _) = normalize(dataset, Some(&mask))?;
    let truth = &normalized.values;
    let impute_seed = derive_seed(config.seed, &[key, "sensitivity", "impute"]);
    let mut variants = Vec::new();
    for v in FillVariant::ALL {
        let mut cfg = config.imputation.to_config(Method::Dae, impute_seed);
        cfg.initial_fill = match v {
            FillVariant::PerfectGuess => InitialFill::Exact(truth.clone()),
            FillVariant::Mean => InitialFill::Mean,
            FillVariant::Max => InitialFill::ColumnMax,
        };
        let runs = multiple_impute(truth, &mask, &cfg)?;
        variants.push((v, summarize(&runs, truth, &mask, Metric::RmseSum)?));
    }
    Ok(SensitivityReport {
        dataset: key.to_owned(),
        config_digest: config.digest()?,
        seed: config.seed,
        target,
        realized: mask.missing_fraction(),
        mask_digest: mask.digest(),
        variants,
    })
}

pub fn render_sensitivity_csv(report: &SensitivityReport) -> Result<String> {
    let mut rows = vec![["config_digest", "seed", "dataset", "initial_imputation", "run", "value", "max"]
        .map(String::from)
        .to_vec()];
    for (v, s) in &report.variants {
        let base = [
            report.config_digest.clone(),
            report.seed.to_string(),
            report.dataset.clone(),
            v.label().to_string(),
        ];
        for (k, x) in s.values.iter().enumerate() {
            let mut row = base.to_vec();
            row.extend([k.to_string(), x.to_string(), String::new()]);
            rows.push(row);
        }
        let mut row = base.to_vec();
        row.extend(["mean".into(), s.mean.to_string(), s.max.to_string()]);
        rows.push(row);
    }
    csv_text(rows)
}

pub fn render_sensitivity_table(report: &SensitivityReport) -> String {
    let mut out = format!(
        "config {}\nseed {}\n\nDAE RMSE_sum by initial imputation, {} MAR random, {:.1}% missing\n\n",
        report.config_digest,
        report.seed,
        report.dataset,
        100.0 * report.realized
    );
    let mut rows = vec![vec!["Initial imputation".to_string(), "RMSE_sum".to_string()]];
    for (v, s) in &report.variants {
        rows.push(vec![v.label().to_string(), format!("{:.2} ({:.2})", s.mean, s.max)]);
    }
    out.push_str(&aligned(&rows));
    out
}

/// Writes `sensitivity.csv` and `sensitivity.txt` into `dir`.
pub fn emit_sensitivity(report: &SensitivityReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(vec![
        write_file(dir.join("sensitivity.csv"), &render_sensitivity_csv(report)?)?,
        write_file(dir.join("sensitivity.txt"), &render_sensitivity_table(report))?,
    ])
}
