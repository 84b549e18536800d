//! Dataset loading, the personality-questionnaire preprocessing, sample
//! correlations and synthetic factor data.

use std::fmt;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::{stream_rng, Stream};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error at row {row}, column {column}: {value:?} is not a number")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("missing value at row {row}, column {column}")]
    Missing { row: usize, column: usize },
    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("dataset is empty")]
    Empty,
    #[error("expected {expected} columns, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("column {0} has zero variance")]
    ZeroVariance(usize),
    #[error("need at least {needed} rows, have {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("dataset was already preprocessed with the questionnaire pipeline")]
    AlreadyPreprocessed,
    #[error("invalid synthetic truth: {0}")]
    InvalidTruth(String),
}

/// A transform applied to a [`Dataset`], in order of application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transform {
    /// Columns negated, 1-indexed.
    SignFlip(Vec<usize>),
    Center,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::SignFlip(cols) => {
                let cols: Vec<String> = cols.iter().map(|c| c.to_string()).collect();
                write!(f, "sign-flip({})", cols.join(" "))
            }
            Transform::Center => write!(f, "center"),
        }
    }
}

/// An `n × p` matrix of observations, one row per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DMatrix<f64>,
    pub column_names: Option<Vec<String>>,
    pub preprocessing_log: Vec<Transform>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>) -> Result<Self, DataError> {
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(DataError::Empty);
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            // Column-major storage.
            return Err(DataError::Missing {
                row: pos % y.nrows() + 1,
                column: pos / y.nrows() + 1,
            });
        }
        Ok(Dataset {
            y,
            column_names: None,
            preprocessing_log: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn center(mut self) -> Self {
        for mut col in self.y.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        self.preprocessing_log.push(Transform::Center);
        self
    }

    /// Negates the given 1-indexed columns.
    pub fn flip_signs(mut self, columns: &[usize]) -> Result<Self, DataError> {
        for &c in columns {
            if c < 1 || c > self.p() {
                return Err(DataError::Dimension {
                    expected: c,
                    found: self.p(),
                });
            }
            self.y.column_mut(c - 1).neg_mut();
        }
        self.preprocessing_log
            .push(Transform::SignFlip(columns.to_vec()));
        Ok(self)
    }

    /// Writes the dataset as CSV with a one-line header.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let names: Vec<String> = match &self.column_names {
            Some(names) => names.clone(),
            None => (1..=self.p()).map(|j| format!("y{j}")).collect(),
        };
        w.write_record(&names)?;
        for row in self.y.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a comma-separated numeric file. Columns are reported 1-indexed in errors.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, has_header)
}

pub fn read_csv<R: Read>(reader: R, has_header: bool) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let column_names = if has_header {
        Some(rdr.headers()?.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };
    let mut expected = column_names.as_ref().map(Vec::len);
    let mut values = Vec::new();
    let mut n = 0;
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        // Row numbers count the header so they match line numbers in the file.
        let row = idx + 1 + usize::from(has_header);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let width = *expected.get_or_insert(record.len());
        if record.len() != width {
            return Err(DataError::Ragged {
                row,
                found: record.len(),
                expected: width,
            });
        }
        for (c, field) in record.iter().enumerate() {
            let column = c + 1;
            if field.is_empty() || field.eq_ignore_ascii_case("na") {
                return Err(DataError::Missing { row, column });
            }
            let v: f64 = field.parse().map_err(|_| DataError::Parse {
                row,
                column,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::Missing { row, column });
            }
            values.push(v);
        }
        n += 1;
    }
    let p = expected.unwrap_or(0);
    if n == 0 || p == 0 {
        return Err(DataError::Empty);
    }
    let mut data = Dataset::new(DMatrix::from_row_slice(n, p, &values))?;
    data.column_names = column_names;
    Ok(data)
}

/// Reverse-keyed items of the 25-item questionnaire, 1-indexed.
pub const BFI_REVERSED_ITEMS: [usize; 7] = [1, 9, 10, 11, 12, 22, 25];
pub const BFI_ITEMS: usize = 25;

/// Negates the reverse-keyed items, then centers every column.
///
/// Flipping twice would undo the first flip, so a dataset that already went
/// through this pipeline is rejected.
pub fn preprocess_bfi(data: Dataset) -> Result<Dataset, DataError> {
    if data.p() != BFI_ITEMS {
        return Err(DataError::Dimension {
            expected: BFI_ITEMS,
            found: data.p(),
        });
    }
    let flipped = Transform::SignFlip(BFI_REVERSED_ITEMS.to_vec());
    if data.preprocessing_log.contains(&flipped) {
        return Err(DataError::AlreadyPreprocessed);
    }
    Ok(data.flip_signs(&BFI_REVERSED_ITEMS)?.center())
}

/// Sample covariance with the `n − 1` denominator.
pub fn sample_covariance(data: &Dataset) -> Result<DMatrix<f64>, DataError> {
    let n = data.n();
    if n < 2 {
        return Err(DataError::TooFewRows { needed: 2, found: n });
    }
    let means = data.y.row_mean();
    let mut centered = data.y.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    Ok(centered.transpose() * &centered / (n as f64 - 1.0))
}

pub fn sample_correlation(data: &Dataset) -> Result<DMatrix<f64>, DataError> {
    let cov = sample_covariance(data)?;
    let p = cov.nrows();
    let sd: Vec<f64> = (0..p).map(|j| cov[(j, j)].sqrt()).collect();
    if let Some(j) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(DataError::ZeroVariance(j + 1));
    }
    let mut s = DMatrix::from_fn(p, p, |i, j| (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0));
    for j in 0..p {
        s[(j, j)] = 1.0;
    }
    Ok(s)
}

/// Ground truth for simulated factor data.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub lambda_true: DMatrix<f64>,
    pub sigma2_true: DVector<f64>,
    pub active_threshold: f64,
    pub active_factors: usize,
}

impl SyntheticTruth {
    /// `active_factors` counts columns whose Euclidean norm exceeds `active_threshold`.
    pub fn new(
        lambda_true: DMatrix<f64>,
        sigma2_true: DVector<f64>,
        active_threshold: f64,
    ) -> Result<Self, DataError> {
        if lambda_true.nrows() != sigma2_true.len() {
            return Err(DataError::InvalidTruth(format!(
                "loadings have {} rows but {} noise variances were given",
                lambda_true.nrows(),
                sigma2_true.len()
            )));
        }
        if lambda_true.nrows() == 0 {
            return Err(DataError::InvalidTruth("p must be at least 1".into()));
        }
        if sigma2_true.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(DataError::InvalidTruth("noise variances must be positive".into()));
        }
        if lambda_true.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidTruth("loadings must be finite".into()));
        }
        let active_factors = lambda_true
            .column_iter()
            .filter(|c| c.norm() > active_threshold)
            .count();
        Ok(SyntheticTruth {
            lambda_true,
            sigma2_true,
            active_threshold,
            active_factors,
        })
    }

    /// `k` dense columns with entries `±scale` (random signs) and a common noise variance.
    pub fn random_signs(
        p: usize,
        k: usize,
        scale: f64,
        noise: f64,
        seed: u64,
    ) -> Result<Self, DataError> {
        if k > p {
            return Err(DataError::InvalidTruth(format!(
                "{k} factors requested for p = {p}"
            )));
        }
        if !(scale > 0.0) {
            return Err(DataError::InvalidTruth("loading scale must be positive".into()));
        }
        let mut rng = stream_rng(seed, Stream::Simulation, 0);
        let lambda = DMatrix::from_fn(p, k, |_, _| {
            if rng.random::<bool>() {
                scale
            } else {
                -scale
            }
        });
        Self::new(lambda, DVector::from_element(p, noise), 0.5 * scale)
    }

    pub fn p(&self) -> usize {
        self.lambda_true.nrows()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.lambda_true * self.lambda_true.transpose()
            + DMatrix::from_diagonal(&self.sigma2_true)
    }
}

/// Draws `n` rows `y_i = Λ η_i + ε_i` with `η_i ~ N(0, I)` and `ε_i ~ N(0, diag(σ²))`.
pub fn simulate_factor_data(
    truth: &SyntheticTruth,
    n: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::TooFewRows { needed: 1, found: 0 });
    }
    let p = truth.p();
    let k = truth.lambda_true.ncols();
    let sd: Vec<f64> = truth.sigma2_true.iter().map(|s| s.sqrt()).collect();
    let mut rng = stream_rng(seed, Stream::Simulation, 1);
    let mut y = DMatrix::zeros(n, p);
    let mut eta = DVector::zeros(k);
    for i in 0..n {
        for e in eta.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        let signal = &truth.lambda_true * &eta;
        for j in 0..p {
            let eps: f64 = StandardNormal.sample(&mut rng);
            y[(i, j)] = signal[j] + sd[j] * eps;
        }
    }
    Dataset::new(y)
}
