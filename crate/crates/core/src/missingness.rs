//! Induced missingness: MCAR/MAR/MNAR mechanisms with random or uniform
//! within-row patterns, probability tuning toward a target missing fraction,
//! and the on-disk mask format.
//!
//! The mechanism decides which rows are flagged:
//!
//! * MCAR flags each row with probability `p_m`.
//! * MAR and MNAR pick two trigger columns `(i, j)` once for the whole
//!   dataset. A row is eligible only when `x_i > μ_i` and `x_j > μ_j`, and an
//!   eligible row is flagged with probability `p_m`. MAR triggers are
//!   permanent columns, MNAR triggers are vulnerable columns.
//!
//! The pattern decides which cells of a flagged row go missing: every
//! vulnerable cell (uniform), or each vulnerable cell independently with
//! probability `p_p` (random). Permanent columns are never masked.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dataset::{ColumnRole, Dataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mechanism {
    Mcar,
    Mar,
    Mnar,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Mcar, Mechanism::Mar, Mechanism::Mnar];
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Mcar => "MCAR",
            Mechanism::Mar => "MAR",
            Mechanism::Mnar => "MNAR",
        })
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MCAR" => Ok(Mechanism::Mcar),
            "MAR" => Ok(Mechanism::Mar),
            "MNAR" => Ok(Mechanism::Mnar),
            _ => Err(Error::InvalidArgument(format!("unknown mechanism `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pattern {
    Random,
    Uniform,
}

impl Pattern {
    pub const ALL: [Pattern; 2] = [Pattern::Random, Pattern::Uniform];
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::Random => "random",
            Pattern::Uniform => "uniform",
        })
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Pattern::Random),
            "uniform" => Ok(Pattern::Uniform),
            _ => Err(Error::InvalidArgument(format!("unknown pattern `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismSpec {
    pub kind: Mechanism,
    pub pattern: Pattern,
    pub p_m: f64,
    pub p_p: f64,
    pub triggers: Option<(usize, usize)>,
}

impl MechanismSpec {
    pub fn mcar(pattern: Pattern, p_m: f64, p_p: f64) -> Self {
        Self {
            kind: Mechanism::Mcar,
            pattern,
            p_m,
            p_p,
            triggers: None,
        }
    }

    /// Checks probabilities, trigger roles and the dataset preconditions.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        for (name, p) in [("p_m", self.p_m), ("p_p", self.p_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if dataset.vulnerable_indices().is_empty() {
            return Err(Error::Precondition(format!(
                "{} has no vulnerable columns",
                dataset.name
            )));
        }
        match (self.kind, self.triggers) {
            (Mechanism::Mcar, None) => Ok(()),
            (Mechanism::Mcar, Some(_)) => Err(Error::InvalidArgument(
                "MCAR takes no trigger columns".into(),
            )),
            (_, None) => Err(Error::InvalidArgument(format!(
                "{} needs two trigger columns",
                self.kind
            ))),
            (kind, Some((i, j))) => {
                let pool = trigger_pool(dataset, kind)?;
                if i == j || !pool.contains(&i) || !pool.contains(&j) {
                    let role = if kind == Mechanism::Mar {
                        "permanent numeric"
                    } else {
                        "vulnerable"
                    };
                    return Err(Error::InvalidArgument(format!(
                        "{kind} triggers ({i}, {j}) must be two distinct {role} columns"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Candidate trigger columns for a value-dependent mechanism.
pub fn trigger_pool(dataset: &Dataset, kind: Mechanism) -> Result<Vec<usize>> {
    let pool = match kind {
        Mechanism::Mcar => return Ok(Vec::new()),
        Mechanism::Mar => dataset.permanent_numeric_indices(),
        Mechanism::Mnar => dataset.vulnerable_indices(),
    };
    if pool.len() < 2 {
        let what = if kind == Mechanism::Mar {
            "permanent numeric"
        } else {
            "vulnerable"
        };
        return Err(Error::Precondition(format!(
            "{kind} needs at least 2 {what} columns, {} has {}",
            dataset.name,
            pool.len()
        )));
    }
    Ok(pool)
}

/// Draws a uniformly random trigger pair for `kind` (`None` for MCAR).
pub fn draw_triggers<R: Rng + ?Sized>(
    dataset: &Dataset,
    kind: Mechanism,
    rng: &mut R,
) -> Result<Option<(usize, usize)>> {
    if kind == Mechanism::Mcar {
        return Ok(None);
    }
    let pool = trigger_pool(dataset, kind)?;
    let pair: Vec<usize> = pool.choose_multiple(rng, 2).copied().collect();
    Ok(Some((pair[0].min(pair[1]), pair[0].max(pair[1]))))
}

/// Rows eligible for flagging: all rows for MCAR, otherwise rows above the
/// column mean in both trigger columns. Means come from `dataset` as given,
/// which should be the uncorrupted table.
pub fn eligible_rows(dataset: &Dataset, spec: &MechanismSpec) -> Vec<bool> {
    match spec.triggers {
        None => vec![true; dataset.rows()],
        Some((i, j)) => {
            let means = dataset.column_means();
            (0..dataset.rows())
                .map(|r| dataset.values.get(r, i) > means[i] && dataset.values.get(r, j) > means[j])
                .collect()
        }
    }
}

/// Where a mask came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskProvenance {
    pub spec: MechanismSpec,
    pub seed: u64,
}

/// Boolean per-cell grid, `true` = missing.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessMask {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
    pub provenance: Option<MaskProvenance>,
}

impl MissingnessMask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![false; rows * cols],
            provenance: None,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                cells.push(f(r, c));
            }
        }
        Self {
            rows,
            cols,
            cells,
            provenance: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major cell flags.
    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn is_missing(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, missing: bool) {
        self.cells[r * self.cols + c] = missing;
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.cells[r * self.cols..(r + 1) * self.cols]
    }

    pub fn select_rows(&self, indices: &[usize]) -> MissingnessMask {
        let mut cells = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            cells.extend_from_slice(self.row(i));
        }
        MissingnessMask {
            rows: indices.len(),
            cols: self.cols,
            cells,
            provenance: self.provenance,
        }
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.missing_count() == 0
    }

    /// Missing cells over all cells.
    pub fn missing_fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.missing_count() as f64 / self.cells.len() as f64
    }

    pub fn flagged_rows(&self) -> usize {
        (0..self.rows).filter(|&r| self.row(r).iter().any(|&m| m)).count()
    }

    pub fn ensure_shape(&self, expected: (usize, usize)) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::Shape {
                context: "missingness mask",
                expected,
                actual: self.shape(),
            });
        }
        Ok(())
    }

    /// SHA-256 of the shape and cell flags, as lowercase hex.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.rows as u64).to_le_bytes());
        h.update((self.cols as u64).to_le_bytes());
        let bytes: Vec<u8> = self.cells.iter().map(|&m| m as u8).collect();
        h.update(&bytes);
        hex(&h.finalize())
    }

    /// CSV of 0/1 flags under the dataset's header.
    pub fn to_csv(&self, header: &[&str]) -> Result<String> {
        if header.len() != self.cols {
            return Err(Error::InvalidArgument(format!(
                "header has {} names for a {}-column mask",
                header.len(),
                self.cols
            )));
        }
        let mut out = header.join(",");
        out.push('\n');
        for r in 0..self.rows {
            let line: Vec<&str> = self.row(r).iter().map(|&m| if m { "1" } else { "0" }).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses [`MissingnessMask::to_csv`] output, returning the header too.
    pub fn from_csv(text: &str) -> Result<(Vec<String>, Self)> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let mut cells = Vec::new();
        let mut rows = 0;
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            for (j, v) in rec.iter().enumerate() {
                cells.push(match v {
                    "1" => true,
                    "0" => false,
                    other => {
                        return Err(Error::Parse {
                            row: i + 1,
                            column: header.get(j).cloned().unwrap_or_default(),
                            message: format!("mask flag `{other}` is not 0 or 1"),
                        })
                    }
                });
            }
            rows += 1;
        }
        let cols = header.len();
        if cells.len() != rows * cols {
            return Err(Error::Parse {
                row: rows,
                column: String::new(),
                message: "ragged mask rows".into(),
            });
        }
        Ok((
            header,
            Self {
                rows,
                cols,
                cells,
                provenance: None,
            },
        ))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `(missing cells) / (rows × total columns)`.
pub fn missing_fraction(mask: &MissingnessMask, dataset: &Dataset) -> Result<f64> {
    mask.ensure_shape(dataset.values.shape())?;
    Ok(mask.missing_fraction())
}

/// Draws a mask for `spec`. The same `(dataset, spec, seed)` always yields
/// the same mask.
pub fn induce(dataset: &Dataset, spec: &MechanismSpec, seed: u64) -> Result<MissingnessMask> {
    spec.validate(dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eligible = eligible_rows(dataset, spec);
    let vulnerable = dataset.vulnerable_indices();
    let mut mask = MissingnessMask::empty(dataset.rows(), dataset.cols());
    for (r, &ok) in eligible.iter().enumerate() {
        let u: f64 = rng.gen();
        if !ok || u >= spec.p_m {
            continue;
        }
        for &c in &vulnerable {
            let missing = match spec.pattern {
                Pattern::Uniform => true,
                Pattern::Random => rng.gen::<f64>() < spec.p_p,
            };
            if missing {
                mask.set(r, c, true);
            }
        }
    }
    debug_assert!(dataset
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.role == ColumnRole::Permanent)
        .all(|(c, _)| (0..mask.rows()).all(|r| !mask.is_missing(r, c))));
    mask.provenance = Some(MaskProvenance { spec: *spec, seed });
    Ok(mask)
}

/// Closed-form expected missing fraction of `spec` on `dataset`.
pub fn expected_fraction(dataset: &Dataset, spec: &MechanismSpec) -> f64 {
    let eligible = eligible_rows(dataset, spec).iter().filter(|&&e| e).count() as f64;
    let rows = dataset.rows() as f64;
    let per_row_cells = dataset.vulnerable_indices().len() as f64
        * match spec.pattern {
            Pattern::Uniform => 1.0,
            Pattern::Random => spec.p_p,
        };
    spec.p_m * (eligible / rows) * per_row_cells / dataset.cols() as f64
}

/// Largest missing fraction reachable with `p_m = p_p = 1`.
pub fn fraction_ceiling(dataset: &Dataset, kind: Mechanism, triggers: Option<(usize, usize)>) -> f64 {
    let spec = MechanismSpec {
        kind,
        pattern: Pattern::Uniform,
        p_m: 1.0,
        p_p: 1.0,
        triggers,
    };
    expected_fraction(dataset, &spec)
}

/// Outcome of [`tune_probabilities`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedSpec {
    pub spec: MechanismSpec,
    /// Mean missing fraction over the tuning draws.
    pub achieved: f64,
    /// `target − ceiling` when the target is out of reach.
    pub shortfall: Option<f64>,
}

/// Number of mask draws averaged per tuning evaluation.
pub const TUNING_DRAWS: usize = 20;
const BISECTION_STEPS: usize = 40;
/// Trigger pairs tried before settling for the pair with the highest ceiling.
const TRIGGER_ATTEMPTS: usize = 64;

/// Finds `(p_m, p_p)` (and triggers for MAR/MNAR) whose empirical missing
/// fraction is within `tolerance` of `target`.
///
/// Trigger pairs are drawn at random until one admits the target; if none
/// does, the pair with the highest ceiling is kept and the result carries the
/// shortfall with `p_m = p_p = 1`. The search bisects `p_m` with `p_p` fixed
/// at 0.5, and only bisects `p_p` upward once `p_m` saturates at 1. Every
/// evaluation averages the same [`TUNING_DRAWS`] mask seeds, which makes the
/// estimate monotone in each probability.
pub fn tune_probabilities(
    dataset: &Dataset,
    kind: Mechanism,
    pattern: Pattern,
    target: f64,
    tolerance: f64,
    seed: u64,
) -> Result<TunedSpec> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::InvalidArgument(format!("target fraction {target} outside [0, 1]")));
    }
    if dataset.vulnerable_indices().is_empty() {
        return Err(Error::Precondition(format!(
            "{} has no vulnerable columns",
            dataset.name
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triggers = choose_triggers(dataset, kind, target, &mut rng)?;
    let draw_seeds: Vec<u64> = (0..TUNING_DRAWS).map(|_| rng.gen()).collect();

    let base = MechanismSpec {
        kind,
        pattern,
        p_m: 0.0,
        p_p: if pattern == Pattern::Random { 0.5 } else { 1.0 },
        triggers,
    };
    let estimate = |spec: &MechanismSpec| -> Result<f64> {
        let mut total = 0.0;
        for &s in &draw_seeds {
            total += induce(dataset, spec, s)?.missing_fraction();
        }
        Ok(total / draw_seeds.len() as f64)
    };

    if target == 0.0 {
        return Ok(TunedSpec {
            spec: base,
            achieved: 0.0,
            shortfall: None,
        });
    }

    let ceiling = fraction_ceiling(dataset, kind, triggers);
    if ceiling < target {
        let spec = MechanismSpec {
            p_m: 1.0,
            p_p: 1.0,
            ..base
        };
        return Ok(TunedSpec {
            spec,
            achieved: estimate(&spec)?,
            shortfall: Some(target - ceiling),
        });
    }

    let at_full_pm = MechanismSpec { p_m: 1.0, ..base };
    let full = estimate(&at_full_pm)?;
    let (mut lo, mut hi, tune_pp) = if full < target && pattern == Pattern::Random {
        (0.5, 1.0, true)
    } else {
        (0.0, 1.0, false)
    };
    let with = |p: f64| {
        if tune_pp {
            MechanismSpec { p_m: 1.0, p_p: p, ..base }
        } else {
            MechanismSpec { p_m: p, ..base }
        }
    };

    let mut best = (f64::INFINITY, with(hi), full);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let spec = with(mid);
        let got = estimate(&spec)?;
        let err = (got - target).abs();
        if err < best.0 {
            best = (err, spec, got);
        }
        if err <= tolerance * 0.25 {
            break;
        }
        if got < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, spec, achieved) = best;
    Ok(TunedSpec {
        spec,
        achieved,
        shortfall: None,
    })
}

fn choose_triggers<R: Rng + ?Sized>(
    dataset: &Dataset,
    kind: Mechanism,
    target: f64,
    rng: &mut R,
) -> Result<Option<(usize, usize)>> {
    if kind == Mechanism::Mcar {
        return Ok(None);
    }
    let mut best: Option<((usize, usize), f64)> = None;
    for _ in 0..TRIGGER_ATTEMPTS {
        let pair = draw_triggers(dataset, kind, rng)?;
        let ceiling = fraction_ceiling(dataset, kind, pair);
        if ceiling >= target {
            return Ok(pair);
        }
        if best.is_none_or(|(_, c)| ceiling > c) {
            best = pair.map(|p| (p, ceiling));
        }
    }
    Ok(best.map(|(p, _)| p))
}

/// Renders the spec and seed as `key = value` lines.
pub fn sidecar_text(spec: &MechanismSpec, seed: u64) -> String {
    let triggers = match spec.triggers {
        None => "none".to_owned(),
        Some((i, j)) => format!("{i},{j}"),
    };
    format!(
        "kind = {}\npattern = {}\np_m = {}\np_p = {}\ntriggers = {}\nseed = {}\n",
        spec.kind, spec.pattern, spec.p_m, spec.p_p, triggers, seed
    )
}

pub fn parse_sidecar(text: &str) -> Result<MaskProvenance> {
    let mut kind = None;
    let mut pattern = None;
    let mut p_m = None;
    let mut p_p = None;
    let mut triggers = None;
    let mut seed = None;
    let bad = |k: &str, v: &str| Error::Config(format!("bad sidecar value {k} = {v}"));
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sidecar line `{line}` is not key = value")))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "kind" => kind = Some(v.parse::<Mechanism>()?),
            "pattern" => pattern = Some(v.parse::<Pattern>()?),
            "p_m" => p_m = Some(v.parse::<f64>().map_err(|_| bad(k, v))?),
            "p_p" => p_p = Some(v.parse::<f64>().map_err(|_| bad(k, v))?),
            "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad(k, v))?),
            "triggers" => {
                triggers = Some(if v == "none" {
                    None
                } else {
                    let (a, b) = v.split_once(',').ok_or_else(|| bad(k, v))?;
                    Some((
                        a.trim().parse().map_err(|_| bad(k, v))?,
                        b.trim().parse().map_err(|_| bad(k, v))?,
                    ))
                })
            }
            "config" => {}
            _ => return Err(Error::Config(format!("unknown sidecar key `{k}`"))),
        }
    }
    let missing = |k: &str| Error::Config(format!("sidecar lacks `{k}`"));
    Ok(MaskProvenance {
        spec: MechanismSpec {
            kind: kind.ok_or_else(|| missing("kind"))?,
            pattern: pattern.ok_or_else(|| missing("pattern"))?,
            p_m: p_m.ok_or_else(|| missing("p_m"))?,
            p_p: p_p.ok_or_else(|| missing("p_p"))?,
            triggers: triggers.ok_or_else(|| missing("triggers"))?,
        },
        seed: seed.ok_or_else(|| missing("seed"))?,
    })
}

/// Writes `<stem>.mask.csv` and `<stem>.spec.txt` into `dir`. A config
/// digest, when given, is recorded in the sidecar as `config = <digest>`.
pub fn save_mask(
    dir: &Path,
    stem: &str,
    mask: &MissingnessMask,
    header: &[&str],
    config: Option<&str>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{stem}.mask.csv"));
    fs::write(&csv_path, mask.to_csv(header)?).map_err(|e| Error::io(&csv_path, e))?;
    if let Some(p) = mask.provenance {
        let side = dir.join(format!("{stem}.spec.txt"));
        let mut text = sidecar_text(&p.spec, p.seed);
        if let Some(digest) = config {
            text.push_str(&format!("config = {digest}\n"));
        }
        fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    }
    Ok(())
}

/// Reads a mask written by [`save_mask`]; the sidecar is optional.
pub fn load_mask(dir: &Path, stem: &str) -> Result<(Vec<String>, MissingnessMask)> {
    let csv_path = dir.join(format!("{stem}.mask.csv"));
    let text = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let (header, mut mask) = MissingnessMask::from_csv(&text)?;
    let side = dir.join(format!("{stem}.spec.txt"));
    if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        mask.provenance = Some(parse_sidecar(&text)?);
    }
    Ok((header, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix;

    /// 10 rows, columns: 0,1 permanent; 2,3,4 vulnerable.
    fn toy() -> Dataset {
        let values = Matrix::from_fn(10, 5, |r, c| ((r * 3 + c * 7) % 10) as f64 + c as f64);
        Dataset::numeric("toy", values, &[2, 3, 4]).unwrap()
    }

    #[test]
    fn zero_probability_gives_empty_mask() {
        let ds = toy();
        for kind in Mechanism::ALL {
            for pattern in Pattern::ALL {
                let triggers = draw_triggers(&ds, kind, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
                let spec = MechanismSpec { kind, pattern, p_m: 0.0, p_p: 0.7, triggers };
                assert!(induce(&ds, &spec, 5).unwrap().is_empty());
            }
        }
    }

    #[test]
    fn mcar_uniform_full_probability_masks_all_vulnerable() {
        let ds = toy();
        let mask = induce(&ds, &MechanismSpec::mcar(Pattern::Uniform, 1.0, 0.0), 3).unwrap();
        for r in 0..10 {
            assert_eq!(mask.row(r), &[false, false, true, true, true]);
        }
        assert_eq!(mask.missing_fraction(), 3.0 / 5.0);
    }

    #[test]
    fn mar_flags_exactly_the_qualifying_rows() {
        // column means are 4.5 and 4.5; rows 0..4 exceed both → 40%
        let values = Matrix::from_fn(10, 3, |r, c| match c {
            0 | 1 => if r < 4 { 9.0 } else { r as f64 - 4.0 },
            _ => r as f64,
        });
        let ds = Dataset::numeric("mar", values, &[2]).unwrap();
        let means = ds.column_means();
        let scan = (0..10)
            .filter(|&r| ds.values.get(r, 0) > means[0] && ds.values.get(r, 1) > means[1])
            .count();
        assert_eq!(scan, 4);
        let spec = MechanismSpec {
            kind: Mechanism::Mar,
            pattern: Pattern::Uniform,
            p_m: 1.0,
            p_p: 1.0,
            triggers: Some((0, 1)),
        };
        let mask = induce(&ds, &spec, 0).unwrap();
        assert_eq!(mask.flagged_rows() as f64 / 10.0, 0.4);
    }

    #[test]
    fn trigger_roles_enforced() {
        let ds = toy();
        let mut spec = MechanismSpec {
            kind: Mechanism::Mar,
            pattern: Pattern::Random,
            p_m: 0.5,
            p_p: 0.5,
            triggers: Some((0, 2)),
        };
        assert!(induce(&ds, &spec, 0).is_err());
        spec.kind = Mechanism::Mnar;
        assert!(induce(&ds, &spec, 0).is_err());
        spec.triggers = Some((2, 3));
        assert!(induce(&ds, &spec, 0).is_ok());
        spec.triggers = None;
        assert!(induce(&ds, &spec, 0).is_err());
        assert!(induce(&ds, &MechanismSpec { triggers: Some((0, 1)), ..MechanismSpec::mcar(Pattern::Random, 0.1, 0.1) }, 0).is_err());
    }

    #[test]
    fn preconditions() {
        let ds = toy();
        assert!(induce(&ds, &MechanismSpec::mcar(Pattern::Random, 1.5, 0.5), 0).is_err());
        assert!(induce(&ds, &MechanismSpec::mcar(Pattern::Random, 0.5, -0.1), 0).is_err());
        let none = Dataset::numeric("n", Matrix::zeros(3, 3), &[]).unwrap();
        assert!(induce(&none, &MechanismSpec::mcar(Pattern::Random, 0.5, 0.5), 0).is_err());
        let one_perm = Dataset::numeric("p", Matrix::zeros(3, 3), &[1, 2]).unwrap();
        assert!(draw_triggers(&one_perm, Mechanism::Mar, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let one_vuln = Dataset::numeric("v", Matrix::zeros(3, 3), &[2]).unwrap();
        assert!(draw_triggers(&one_vuln, Mechanism::Mnar, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn fraction_counts() {
        let ds = toy();
        let empty = MissingnessMask::empty(10, 5);
        assert_eq!(missing_fraction(&empty, &ds).unwrap(), 0.0);
        assert!(missing_fraction(&MissingnessMask::empty(3, 5), &ds).is_err());
        let mut full = MissingnessMask::empty(7, 14);
        for r in 0..7 {
            for c in 0..10 {
                full.set(r, c, true);
            }
        }
        assert!((full.missing_fraction() - 10.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn tune_zero_target() {
        let ds = toy();
        let t = tune_probabilities(&ds, Mechanism::Mcar, Pattern::Random, 0.0, 0.01, 1).unwrap();
        assert_eq!(t.spec.p_m, 0.0);
        assert_eq!(t.achieved, 0.0);
    }

    #[test]
    fn tune_reports_shortfall() {
        let ds = toy();
        // ceiling for MCAR is 3/5
        let t = tune_probabilities(&ds, Mechanism::Mcar, Pattern::Uniform, 0.9, 0.01, 1).unwrap();
        assert_eq!((t.spec.p_m, t.spec.p_p), (1.0, 1.0));
        assert!((t.shortfall.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn sidecar_round_trip() {
        let spec = MechanismSpec {
            kind: Mechanism::Mnar,
            pattern: Pattern::Random,
            p_m: 0.123456789,
            p_p: 0.5,
            triggers: Some((3, 7)),
        };
        let p = parse_sidecar(&sidecar_text(&spec, 42)).unwrap();
        assert_eq!(p.spec, spec);
        assert_eq!(p.seed, 42);
        assert!(parse_sidecar("kind = MCAR\n").is_err());
    }

    #[test]
    fn mask_files_round_trip() {
        let ds = toy();
        let mask = induce(&ds, &MechanismSpec::mcar(Pattern::Random, 0.6, 0.5), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let header = ds.column_names();
        save_mask(dir.path(), "cell", &mask, &header, Some("abc")).unwrap();
        let (h, back) = load_mask(dir.path(), "cell").unwrap();
        assert_eq!(h, header);
        assert_eq!(back, mask);
        assert_eq!(back.digest(), mask.digest());
        assert!(MissingnessMask::from_csv("a,b\n1,2\n").is_err());
    }
}
