//! CSV dataset loading, label encoding, and train/test splitting.
//!
//! Labels map to contiguous class indices in order of first appearance
//! in the training file; a test file loaded against that mapping must
//! not introduce new labels. Feature values must be finite — there is no
//! missing-value handling.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::DataView;

/// Dense feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    num_features: usize,
    labels: Vec<usize>,
    class_names: Vec<String>,
    feature_names: Option<Vec<String>>,
}

/// How to obtain a train/test pair: two files that ship pre-split, or a
/// seeded shuffle split of one file.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    PreSplit {
        train: PathBuf,
        test: PathBuf,
    },
    Fraction {
        source: PathBuf,
        train_fraction: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub label_column: LabelColumn,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            has_header: false,
            label_column: LabelColumn::Last,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelColumn {
    Last,
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    Io {
        path: String,
        message: String,
    },
    Csv {
        line: u64,
        message: String,
    },
    RaggedRow {
        line: u64,
        expected: usize,
        got: usize,
    },
    BadNumber {
        line: u64,
        column: usize,
        value: String,
    },
    NonFiniteValue {
        line: u64,
        column: usize,
    },
    MissingLabelColumn(String),
    LabelColumnOutOfRange {
        index: usize,
        columns: usize,
    },
    UnknownLabels(Vec<String>),
    EmptyFile,
    BadFraction(f64),
    EmptySplitPart,
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Io { path, message } => write!(f, "cannot read {path}: {message}"),
            DataError::Csv { line, message } => write!(f, "line {line}: {message}"),
            DataError::RaggedRow {
                line,
                expected,
                got,
            } => {
                write!(f, "line {line}: expected {expected} columns, got {got}")
            }
            DataError::BadNumber {
                line,
                column,
                value,
            } => {
                write!(
                    f,
                    "line {line}, column {column}: cannot parse {value:?} as a number"
                )
            }
            DataError::NonFiniteValue { line, column } => {
                write!(f, "line {line}, column {column}: non-finite value")
            }
            DataError::MissingLabelColumn(name) => {
                write!(f, "label column {name:?} not found in header")
            }
            DataError::LabelColumnOutOfRange { index, columns } => {
                write!(
                    f,
                    "label column index {index} out of range ({columns} columns)"
                )
            }
            DataError::UnknownLabels(values) => {
                write!(f, "labels not present in the training mapping: {values:?}")
            }
            DataError::EmptyFile => write!(f, "no data rows"),
            DataError::BadFraction(v) => {
                write!(
                    f,
                    "split fraction must lie strictly between 0 and 1, got {v}"
                )
            }
            DataError::EmptySplitPart => write!(f, "split would produce an empty part"),
        }
    }
}

impl std::error::Error for DataError {}

impl Dataset {
    pub fn from_rows(
        features: Vec<f64>,
        num_features: usize,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Self {
        assert_eq!(
            features.len(),
            num_features * labels.len(),
            "row count mismatch"
        );
        Dataset {
            features,
            num_features,
            labels,
            class_names,
            feature_names: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.features[r * self.num_features..(r + 1) * self.num_features]
    }

    pub fn view(&self) -> DataView<'_> {
        DataView::new(&self.features, self.num_features, &self.labels)
    }

    /// Per-class row counts; counts sum to `len()`.
    pub fn label_stats(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for &label in &self.labels {
            counts[label] += 1;
        }
        counts
    }

    /// Per-feature mean and standard deviation (population); constant
    /// features get std 1 so standardization maps them to zero.
    pub fn mean_std(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len().max(1) as f64;
        let mut mean = vec![0.0; self.num_features];
        for r in 0..self.len() {
            for (m, v) in mean.iter_mut().zip(self.row(r)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; self.num_features];
        for r in 0..self.len() {
            for (f, v) in self.row(r).iter().enumerate() {
                let d = v - mean[f];
                var[f] += d * d;
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        (mean, std)
    }
}

/// Load a CSV with a fresh label mapping (first-appearance order).
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset, DataError> {
    load_csv_inner(path, options, None)
}

/// Load a CSV against an existing class mapping; rows with labels
/// outside the mapping are an error listing the offending values.
pub fn load_csv_with_classes(
    path: &Path,
    options: &CsvOptions,
    class_names: &[String],
) -> Result<Dataset, DataError> {
    load_csv_inner(path, options, Some(class_names))
}

fn load_csv_inner(
    path: &Path,
    options: &CsvOptions,
    fixed_classes: Option<&[String]>,
) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;

    let header: Option<Vec<String>> = if options.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| DataError::Csv {
                    line: 1,
                    message: e.to_string(),
                })?
                .iter()
                .map(str::to_string)
                .collect(),
        )
    } else {
        None
    };

    let mut label_index: Option<usize> = match &options.label_column {
        LabelColumn::Last => None,
        LabelColumn::Index(i) => Some(*i),
        LabelColumn::Name(name) => {
            let header = header
                .as_ref()
                .ok_or(DataError::MissingLabelColumn(name.clone()))?;
            Some(
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| DataError::MissingLabelColumn(name.clone()))?,
            )
        }
    };

    let mut width: Option<usize> = None;
    let mut features = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 1 + u64::from(options.has_header);
        let record = record.map_err(|e| DataError::Csv {
            line,
            message: e.to_string(),
        })?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::RaggedRow {
                line,
                expected,
                got: record.len(),
            });
        }
        let label_col = match label_index {
            Some(idx) if idx >= expected => {
                return Err(DataError::LabelColumnOutOfRange {
                    index: idx,
                    columns: expected,
                });
            }
            Some(idx) => idx,
            None => {
                if expected == 0 {
                    return Err(DataError::RaggedRow {
                        line,
                        expected: 1,
                        got: 0,
                    });
                }
                let idx = expected - 1;
                label_index = Some(idx);
                idx
            }
        };
        for (column, field) in record.iter().enumerate() {
            if column == label_col {
                raw_labels.push(field.trim().to_string());
            } else {
                let value: f64 = field.trim().parse().map_err(|_| DataError::BadNumber {
                    line,
                    column,
                    value: field.to_string(),
                })?;
                if !value.is_finite() {
                    return Err(DataError::NonFiniteValue { line, column });
                }
                features.push(value);
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(DataError::EmptyFile);
    }

    let (labels, class_names) = match fixed_classes {
        None => {
            let mut class_names: Vec<String> = Vec::new();
            let labels = raw_labels
                .iter()
                .map(|raw| {
                    class_names
                        .iter()
                        .position(|c| c == raw)
                        .unwrap_or_else(|| {
                            class_names.push(raw.clone());
                            class_names.len() - 1
                        })
                })
                .collect();
            (labels, class_names)
        }
        Some(classes) => {
            let mut unknown: Vec<String> = Vec::new();
            let mut labels = Vec::with_capacity(raw_labels.len());
            for raw in &raw_labels {
                match classes.iter().position(|c| c == raw) {
                    Some(idx) => labels.push(idx),
                    None => {
                        if !unknown.contains(raw) {
                            unknown.push(raw.clone());
                        }
                    }
                }
            }
            if !unknown.is_empty() {
                return Err(DataError::UnknownLabels(unknown));
            }
            (labels, classes.to_vec())
        }
    };

    let num_features = width.unwrap_or(1).saturating_sub(1);
    let feature_names = header.map(|h| {
        h.iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_index)
            .map(|(_, name)| name.clone())
            .collect()
    });
    Ok(Dataset {
        features,
        num_features,
        labels,
        class_names,
        feature_names,
    })
}

/// Deterministic shuffle split into (train, test); both parts share the
/// source's class mapping and every row lands in exactly one part.
pub fn split(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::BadFraction(train_fraction));
    }
    let n = ds.len();
    let train_len = (n as f64 * train_fraction).round() as usize;
    if train_len == 0 || train_len == n {
        return Err(DataError::EmptySplitPart);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let take = |rows: &[usize]| {
        let mut features = Vec::with_capacity(rows.len() * ds.num_features);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(ds.row(r));
            labels.push(ds.labels[r]);
        }
        Dataset {
            features,
            num_features: ds.num_features,
            labels,
            class_names: ds.class_names.clone(),
            feature_names: ds.feature_names.clone(),
        }
    };
    Ok((take(&order[..train_len]), take(&order[train_len..])))
}

/// Resolve a [`SplitSpec`] into a (train, test) pair with a shared class
/// mapping.
pub fn load_split(spec: &SplitSpec, options: &CsvOptions) -> Result<(Dataset, Dataset), DataError> {
    match spec {
        SplitSpec::PreSplit { train, test } => {
            let train_ds = load_csv(train, options)?;
            let test_ds = load_csv_with_classes(test, options, train_ds.class_names())?;
            Ok((train_ds, test_ds))
        }
        SplitSpec::Fraction {
            source,
            train_fraction,
            seed,
        } => {
            let ds = load_csv(source, options)?;
            split(&ds, *train_fraction, *seed)
        }
    }
}
