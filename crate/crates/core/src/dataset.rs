//! Tabular datasets: CSV ingestion, column roles, z-score normalization and
//! the benchmark catalog.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::missingness::MissingnessMask;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    /// Never subject to induced missingness.
    Permanent,
    /// May lose cells when missingness is induced.
    Vulnerable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    /// Label-encoded: level `k` of the sorted level list is stored as `k`.
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
}

impl Column {
    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, ColumnKind::Categorical { .. })
    }
}

/// Per-column z-score parameters (sample standard deviation).
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Normalization {
    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        Ok(Matrix::from_fn(m.rows(), m.cols(), |r, c| {
            (m.get(r, c) - self.means[c]) / self.stds[c]
        }))
    }

    pub fn invert(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        Ok(Matrix::from_fn(m.rows(), m.cols(), |r, c| {
            m.get(r, c) * self.stds[c] + self.means[c]
        }))
    }

    fn check(&self, m: &Matrix) -> Result<()> {
        if m.cols() != self.means.len() {
            return Err(Error::Shape {
                context: "normalization",
                expected: (m.rows(), self.means.len()),
                actual: m.shape(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub columns: Vec<Column>,
    pub values: Matrix,
    pub normalization: Option<Normalization>,
    /// Rows discarded at load time because they had pre-existing missing cells.
    pub rows_dropped: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, columns: Vec<Column>, values: Matrix) -> Result<Self> {
        if columns.len() != values.cols() {
            return Err(Error::InvalidArgument(format!(
                "{} column descriptors for a table with {} columns",
                columns.len(),
                values.cols()
            )));
        }
        if let Some(c) = columns
            .iter()
            .find(|c| c.is_categorical() && c.role == ColumnRole::Vulnerable)
        {
            return Err(Error::InvalidArgument(format!(
                "categorical column `{}` cannot be vulnerable",
                c.name
            )));
        }
        Ok(Self {
            name: name.into(),
            columns,
            values,
            normalization: None,
            rows_dropped: 0,
        })
    }

    /// All-numeric dataset with the given vulnerable column indices.
    pub fn numeric(name: impl Into<String>, values: Matrix, vulnerable: &[usize]) -> Result<Self> {
        let columns = (0..values.cols())
            .map(|c| Column {
                name: format!("c{c}"),
                kind: ColumnKind::Numeric,
                role: if vulnerable.contains(&c) {
                    ColumnRole::Vulnerable
                } else {
                    ColumnRole::Permanent
                },
            })
            .collect();
        Self::new(name, columns, values)
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn vulnerable_indices(&self) -> Vec<usize> {
        self.indices_with(ColumnRole::Vulnerable)
    }

    pub fn permanent_indices(&self) -> Vec<usize> {
        self.indices_with(ColumnRole::Permanent)
    }

    /// Permanent columns that are numeric, the candidates for MAR triggers.
    pub fn permanent_numeric_indices(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == ColumnRole::Permanent && !c.is_categorical())
            .map(|(i, _)| i)
            .collect()
    }

    fn indices_with(&self, role: ColumnRole) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    /// Arithmetic mean of each column over all rows.
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows() as f64;
        self.values.column_sums().into_iter().map(|s| s / n).collect()
    }
}

/// Column handling options for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub vulnerable: Vec<String>,
    /// Columns to label-encode even if every value parses as a number.
    pub categorical: Vec<String>,
    pub drop: Vec<String>,
}

fn is_missing_token(s: &str) -> bool {
    s.is_empty() || s == "NA" || s == "?"
}

/// Reads a headered, comma-delimited CSV file.
///
/// Rows with any pre-existing missing cell (`NA`, `?` or empty) are dropped.
/// Columns with non-numeric values become permanent categorical columns.
pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&name, &text, options)
}

pub fn parse_csv(name: &str, text: &str, options: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();

    for wanted in options.vulnerable.iter().chain(&options.categorical).chain(&options.drop) {
        if !header.contains(wanted) {
            return Err(Error::InvalidArgument(format!(
                "column `{wanted}` not found in {name}"
            )));
        }
    }
    let kept: Vec<usize> = (0..header.len())
        .filter(|&i| !options.drop.contains(&header[i]))
        .collect();

    let mut raw: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: i + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row: i + 1,
                column: String::new(),
                message: format!("{} fields, header has {}", record.len(), header.len()),
            });
        }
        let cells: Vec<String> = kept.iter().map(|&c| record[c].to_owned()).collect();
        if cells.iter().any(|s| is_missing_token(s)) {
            dropped += 1;
            continue;
        }
        raw.push(cells);
    }
    if raw.is_empty() {
        return Err(Error::Precondition(format!("{name} has no complete rows")));
    }

    let mut columns = Vec::with_capacity(kept.len());
    let mut values = Matrix::zeros(raw.len(), kept.len());
    for (j, &src) in kept.iter().enumerate() {
        let col_name = header[src].clone();
        let vulnerable = options.vulnerable.contains(&col_name);
        let forced = options.categorical.contains(&col_name);
        let parsed: Vec<Option<f64>> = raw.iter().map(|r| r[j].parse::<f64>().ok()).collect();
        let numeric = !forced && parsed.iter().all(Option::is_some);

        let kind = if numeric {
            for (r, v) in parsed.iter().enumerate() {
                values.set(r, j, v.expect("checked numeric"));
            }
            ColumnKind::Numeric
        } else {
            if vulnerable {
                let row = parsed.iter().position(Option::is_none).unwrap_or(0);
                return Err(Error::Parse {
                    row: row + 1,
                    column: col_name,
                    message: if forced {
                        "categorical column listed as vulnerable".into()
                    } else {
                        format!("vulnerable column holds non-numeric value `{}`", raw[row][j])
                    },
                });
            }
            let levels: Vec<String> = raw
                .iter()
                .map(|r| r[j].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            for (r, row) in raw.iter().enumerate() {
                let code = levels.binary_search(&row[j]).expect("level present");
                values.set(r, j, code as f64);
            }
            ColumnKind::Categorical { levels }
        };
        columns.push(Column {
            name: col_name,
            kind,
            role: if vulnerable {
                ColumnRole::Vulnerable
            } else {
                ColumnRole::Permanent
            },
        });
    }

    let mut ds = Dataset::new(name, columns, values)?;
    ds.rows_dropped = dropped;
    Ok(ds)
}

/// Marks exactly the listed columns vulnerable; all others become permanent.
pub fn designate_roles(dataset: &Dataset, vulnerable: &[&str]) -> Result<Dataset> {
    let mut out = dataset.clone();
    for name in vulnerable {
        let idx = out
            .column_index(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown column `{name}`")))?;
        if out.columns[idx].is_categorical() {
            return Err(Error::InvalidArgument(format!(
                "categorical column `{name}` cannot be vulnerable"
            )));
        }
    }
    for col in &mut out.columns {
        col.role = if vulnerable.contains(&col.name.as_str()) {
            ColumnRole::Vulnerable
        } else {
            ColumnRole::Permanent
        };
    }
    Ok(out)
}

/// Z-scores every column using statistics from observed cells only.
///
/// With `observed = None` every cell counts as observed. Missing cells are
/// transformed with the same parameters, so a ground-truth table and its
/// corrupted copy share one scaling.
pub fn normalize(dataset: &Dataset, observed: Option<&MissingnessMask>) -> Result<(Dataset, Normalization)> {
    let params = normalization_params(dataset, observed)?;
    let mut out = dataset.clone();
    out.values = params.apply(&dataset.values)?;
    out.normalization = Some(params.clone());
    Ok((out, params))
}

pub fn normalization_params(dataset: &Dataset, observed: Option<&MissingnessMask>) -> Result<Normalization> {
    if let Some(mask) = observed {
        mask.ensure_shape(dataset.values.shape())?;
    }
    let v = &dataset.values;
    let mut means = Vec::with_capacity(v.cols());
    let mut stds = Vec::with_capacity(v.cols());
    for c in 0..v.cols() {
        let cells: Vec<f64> = (0..v.rows())
            .filter(|&r| observed.is_none_or(|m| !m.is_missing(r, c)))
            .map(|r| v.get(r, c))
            .collect();
        let name = dataset.columns[c].name.clone();
        if cells.len() < 2 {
            return Err(Error::EmptyColumn { column: name });
        }
        let n = cells.len() as f64;
        let mean = cells.iter().sum::<f64>() / n;
        let var = cells.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        if !std.is_finite() || std <= 0.0 {
            return Err(Error::ZeroVariance { column: name });
        }
        means.push(mean);
        stds.push(std);
    }
    Ok(Normalization { means, stds })
}

/// One dataset manifest in the benchmark catalog.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    pub name: String,
    pub abbreviation: String,
    /// Path of the CSV file, relative to the manifest's directory.
    pub path: PathBuf,
    pub rows: usize,
    pub columns: usize,
    pub vulnerable: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub drop: Vec<String>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl CatalogEntry {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut entry: CatalogEntry =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        entry.base_dir = base_dir.into();
        Ok(entry)
    }

    pub fn source_path(&self) -> PathBuf {
        self.base_dir.join(&self.path)
    }

    pub fn is_available(&self) -> bool {
        self.source_path().exists()
    }

    pub fn matches(&self, key: &str) -> bool {
        self.name.eq_ignore_ascii_case(key) || self.abbreviation.eq_ignore_ascii_case(key)
    }

    /// Loads the dataset and checks it against the expected dimensions.
    pub fn load(&self) -> Result<Dataset> {
        let options = LoadOptions {
            vulnerable: self.vulnerable.clone(),
            categorical: self.categorical.clone(),
            drop: self.drop.clone(),
        };
        let mut ds = load_csv(self.source_path(), &options)?;
        ds.name = self.abbreviation.clone();
        if (ds.rows(), ds.cols()) != (self.rows, self.columns) {
            return Err(Error::CatalogDimension {
                name: self.name.clone(),
                expected: (self.rows, self.columns),
                actual: (ds.rows(), ds.cols()),
            });
        }
        Ok(ds)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
}

impl Catalog {
    /// Reads every `*.toml` manifest in `dir`, sorted by file name.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        let entries = paths
            .iter()
            .map(|p| {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                CatalogEntry::parse(&text, dir)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    pub fn find(&self, key: &str) -> Result<&CatalogEntry> {
        self.entries
            .iter()
            .find(|e| e.matches(key))
            .ok_or_else(|| Error::UnknownDataset(key.to_owned()))
    }
}
