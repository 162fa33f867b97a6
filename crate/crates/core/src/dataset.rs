//! Finite populations of `(x, y)` points: loading, validation, standardization
//! and the random prior split.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("population needs at least 3 rows, found {0}")]
    TooFewRows(usize),
    #[error("feature `{0}` is constant")]
    ConstantFeature(String),
    #[error("point {index}: expected {expected} features, found {found}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("point {0} has a non-finite value")]
    NonFinite(usize),
    #[error("no feature columns given")]
    NoFeatures,
    #[error("fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("prior set of {size} points is too small to fit a model on {m} features (need {needed})")]
    PriorTooSmall { size: usize, m: usize, needed: usize },
    #[error("id {0} is not part of the population")]
    UnknownId(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub id: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

/// The full finite universe of points. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    points: Vec<DataPoint>,
    m: usize,
    feature_names: Vec<String>,
    target_name: String,
    true_mean: f64,
    true_variance: f64,
}

impl Population {
    /// Builds a population from rows of `(x, y)`; ids follow row order.
    pub fn new(
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        rows: Vec<(Vec<f64>, f64)>,
    ) -> Result<Self, DatasetError> {
        let m = feature_names.len();
        if m == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if rows.len() < 2 {
            return Err(DatasetError::TooFewRows(rows.len()));
        }
        let mut points = Vec::with_capacity(rows.len());
        for (id, (x, y)) in rows.into_iter().enumerate() {
            if x.len() != m {
                return Err(DatasetError::DimensionMismatch {
                    index: id,
                    expected: m,
                    found: x.len(),
                });
            }
            if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite(id));
            }
            points.push(DataPoint { id, x, y });
        }
        let (true_mean, true_variance) = mean_and_variance(points.iter().map(|p| p.y));
        Ok(Self {
            points,
            m,
            feature_names,
            target_name: target_name.into(),
            true_mean,
            true_variance,
        })
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Feature dimensionality `m`.
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn true_mean(&self) -> f64 {
        self.true_mean
    }

    /// Unbiased (n - 1) variance of all responses.
    pub fn true_variance(&self) -> f64 {
        self.true_variance
    }

    /// Point with the given id; ids equal positions.
    pub fn point(&self, id: usize) -> &DataPoint {
        &self.points[id]
    }

    pub fn all_ids(&self) -> IndexSet {
        IndexSet((0..self.points.len()).collect())
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    fn feature_column(&self, j: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        self.points.iter().map(move |p| p.x[j])
    }

    fn constant_feature(&self) -> Option<&str> {
        (0..self.m)
            .find(|&j| {
                let first = self.points[0].x[j];
                self.feature_column(j).all(|v| v == first)
            })
            .map(|j| self.feature_names[j].as_str())
    }

    fn with_features(&self, map: impl Fn(usize, f64) -> f64) -> Population {
        let points = self
            .points
            .iter()
            .map(|p| DataPoint {
                id: p.id,
                x: p.x.iter().enumerate().map(|(j, &v)| map(j, v)).collect(),
                y: p.y,
            })
            .collect();
        Population {
            points,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Population {
        Population {
            points: Vec::new(),
            m: self.m,
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            true_mean: self.true_mean,
            true_variance: self.true_variance,
        }
    }
}

/// Mean and unbiased variance in a single compensated pass.
pub(crate) fn mean_and_variance(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let (sq, corr) = values.fold((0.0, 0.0), |(sq, corr), v| {
        let d = v - mean;
        (sq + d * d, corr + d)
    });
    let var = if n > 1.0 {
        (sq - corr * corr / n) / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Sorted, duplicate-free set of point ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(ids: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        IndexSet::new(self.0.iter().chain(other.0.iter()).copied())
    }

    pub fn difference(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.0.iter().copied().filter(|&id| !other.contains(id)).collect())
    }

    pub fn is_disjoint(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|&id| !other.contains(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        IndexSet::new(iter)
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{id}")?;
        }
        write!(f, "}}")
    }
}

/// Reads a population from a UTF-8 CSV with a header row.
pub fn load_csv(
    path: impl AsRef<Path>,
    feature_columns: &[String],
    target_column: &str,
) -> Result<Population, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, feature_columns, target_column)
}

pub fn read_csv(
    reader: impl std::io::Read,
    feature_columns: &[String],
    target_column: &str,
) -> Result<Population, DatasetError> {
    if feature_columns.is_empty() {
        return Err(DatasetError::NoFeatures);
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let feature_idx = feature_columns
        .iter()
        .map(|c| position(c))
        .collect::<Result<Vec<_>, _>>()?;
    let target_idx = position(target_column)?;

    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // 1-based data row numbering; the header is row 0
        let row = r + 1;
        let cell = |idx: usize, name: &str| -> Result<f64, DatasetError> {
            let raw = record.get(idx).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::BadCell {
                    row,
                    column: name.to_string(),
                    value: raw.to_string(),
                })
        };
        let x = feature_idx
            .iter()
            .zip(feature_columns)
            .map(|(&i, name)| cell(i, name))
            .collect::<Result<Vec<_>, _>>()?;
        let y = cell(target_idx, target_column)?;
        rows.push((x, y));
    }
    if rows.len() < 3 {
        return Err(DatasetError::TooFewRows(rows.len()));
    }
    let pop = Population::new(feature_columns.to_vec(), target_column, rows)?;
    if let Some(name) = pop.constant_feature() {
        return Err(DatasetError::ConstantFeature(name.to_string()));
    }
    Ok(pop)
}

/// Writes features then target, 17 significant digits so a reload is bit-exact.
pub fn write_csv(pop: &Population, writer: impl std::io::Write) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = pop.feature_names.iter().map(String::as_str).collect();
    header.push(&pop.target_name);
    w.write_record(&header)?;
    for p in &pop.points {
        let record: Vec<String> = p
            .x
            .iter()
            .chain(std::iter::once(&p.y))
            .map(|v| format!("{v:.16e}"))
            .collect();
        w.write_record(&record)?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn save_csv(pop: &Population, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv(pop, std::io::BufWriter::new(file))
}

/// Per-feature z-score parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ScalingParams {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (mu, sd))| (v - mu) / sd)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (mu, sd))| v * sd + mu)
            .collect()
    }

    /// Maps a standardized population back to original feature units.
    pub fn inverse(&self, pop: &Population) -> Population {
        pop.with_features(|j, v| v * self.sd[j] + self.mean[j])
    }
}

/// Z-scores every feature over the whole population (sample sd, n - 1).
pub fn standardize(pop: &Population) -> Result<(Population, ScalingParams), DatasetError> {
    if let Some(name) = pop.constant_feature() {
        return Err(DatasetError::ConstantFeature(name.to_string()));
    }
    let (mean, sd): (Vec<f64>, Vec<f64>) = (0..pop.m)
        .map(|j| {
            let (mu, var) = mean_and_variance(pop.feature_column(j));
            (mu, var.sqrt())
        })
        .unzip();
    if let Some(j) = sd.iter().position(|s| !(*s > 0.0)) {
        return Err(DatasetError::ConstantFeature(pop.feature_names[j].clone()));
    }
    let params = ScalingParams { mean, sd };
    let scaled = pop.with_features(|j, v| (v - params.mean[j]) / params.sd[j]);
    Ok((scaled, params))
}

/// Round-half-up of `fraction * n`; the small slack absorbs products such as
/// `0.15 * 10 = 1.4999999999999998`.
pub fn fraction_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 0.5 + 1e-9).floor() as usize
}

/// Minimum prior size for a model fit on `m` features.
pub fn min_prior_size(m: usize) -> usize {
    m + 2
}

/// Uniform without-replacement split of the population into a prior set and
/// its complement.
pub fn split_prior<R: Rng + ?Sized>(
    pop: &Population,
    prior_fraction: f64,
    rng: &mut R,
) -> Result<(IndexSet, IndexSet), DatasetError> {
    if !(prior_fraction > 0.0 && prior_fraction < 1.0) {
        return Err(DatasetError::BadFraction(prior_fraction));
    }
    let n = pop.len();
    let size = fraction_count(prior_fraction, n);
    let needed = min_prior_size(pop.dim());
    if size < needed || size > n {
        return Err(DatasetError::PriorTooSmall {
            size,
            m: pop.dim(),
            needed,
        });
    }
    let prior = IndexSet::new(index::sample(rng, n, size));
    let remainder = pop.all_ids().difference(&prior);
    Ok((prior, remainder))
}

/// Checks that every id in `sets` belongs to `pop` and the sets are pairwise
/// disjoint and cover the population.
pub fn is_partition(pop: &Population, sets: &[&IndexSet]) -> bool {
    let mut seen = HashSet::with_capacity(pop.len());
    for set in sets {
        for id in set.iter() {
            if id >= pop.len() || !seen.insert(id) {
                return false;
            }
        }
    }
    seen.len() == pop.len()
}
