//! Quantile binning and one-hot encoding of feature vectors.
//!
//! Boundaries are empirical nearest-rank quantiles of the training
//! column, deduplicated, so heavy-tailed or discrete features simply get
//! fewer bins. Quantization counts how many boundaries a value has
//! reached: values below every boundary land in bin 0, boundary equality
//! rounds up, and out-of-range values clamp into the edge bins. The `>=`
//! convention matches tree splits, so the compiled networks and the
//! trained models share one comparison rule.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Per-feature quantile bin boundaries. A feature with `m` boundaries has
/// `m + 1` bins; a constant feature has no boundaries and exactly 1 bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinningSpec {
    boundaries: Vec<Vec<f64>>,
    requested_bins: usize,
    offsets: Vec<usize>,
    total_width: usize,
}

/// Per-feature bin indices for one input vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedVector(pub Vec<usize>);

/// Concatenated one-hot blocks, one per feature; exactly one active
/// entry per block.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub enum BinError {
    EmptyColumn,
    NonFiniteValue {
        row: usize,
    },
    InvalidRequestedBins,
    NotIncreasing {
        feature: usize,
    },
    DimensionMismatch {
        expected: usize,
        got: usize,
    },
    BinOutOfRange {
        feature: usize,
        bin: usize,
        bins: usize,
    },
}

impl fmt::Display for BinError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinError::EmptyColumn => write!(f, "cannot fit bins on an empty column"),
            BinError::NonFiniteValue { row } => write!(f, "non-finite value at row {row}"),
            BinError::InvalidRequestedBins => write!(f, "requested_bins must be >= 1"),
            BinError::NotIncreasing { feature } => {
                write!(
                    f,
                    "feature {feature}: boundaries must be strictly increasing"
                )
            }
            BinError::DimensionMismatch { expected, got } => {
                write!(f, "expected {expected} features, got {got}")
            }
            BinError::BinOutOfRange { feature, bin, bins } => {
                write!(f, "feature {feature}: bin {bin} out of range ({bins} bins)")
            }
        }
    }
}

impl std::error::Error for BinError {}

impl BinningSpec {
    /// Build a spec from explicit boundaries (strictly increasing, finite).
    pub fn new(boundaries: Vec<Vec<f64>>, requested_bins: usize) -> Result<Self, BinError> {
        if requested_bins < 1 {
            return Err(BinError::InvalidRequestedBins);
        }
        for (feature, list) in boundaries.iter().enumerate() {
            for pair in list.windows(2) {
                if pair[0] >= pair[1] {
                    return Err(BinError::NotIncreasing { feature });
                }
            }
            if list.iter().any(|b| !b.is_finite()) {
                return Err(BinError::NotIncreasing { feature });
            }
        }
        let mut offsets = Vec::with_capacity(boundaries.len());
        let mut total_width = 0;
        for list in &boundaries {
            offsets.push(total_width);
            total_width += list.len() + 1;
        }
        Ok(BinningSpec {
            boundaries,
            requested_bins,
            offsets,
            total_width,
        })
    }

    pub fn num_features(&self) -> usize {
        self.boundaries.len()
    }

    pub fn requested_bins(&self) -> usize {
        self.requested_bins
    }

    pub fn boundaries(&self, feature: usize) -> &[f64] {
        &self.boundaries[feature]
    }

    /// Number of bins for one feature (boundary count + 1).
    pub fn num_bins(&self, feature: usize) -> usize {
        self.boundaries[feature].len() + 1
    }

    /// Offset of a feature's block in the one-hot layout.
    pub fn block_offset(&self, feature: usize) -> usize {
        self.offsets[feature]
    }

    /// Total one-hot width: the sum of per-feature bin counts.
    pub fn total_onehot_width(&self) -> usize {
        self.total_width
    }

    /// Bin index of a single value: the number of boundaries it has
    /// reached (`value >= boundary`).
    pub fn quantize_value(&self, feature: usize, value: f64) -> usize {
        self.boundaries[feature].partition_point(|b| *b <= value)
    }

    /// Quantize a full feature vector.
    pub fn quantize(&self, x: &[f64]) -> Result<QuantizedVector, BinError> {
        if x.len() != self.num_features() {
            return Err(BinError::DimensionMismatch {
                expected: self.num_features(),
                got: x.len(),
            });
        }
        if let Some(row) = x.iter().position(|v| !v.is_finite()) {
            return Err(BinError::NonFiniteValue { row });
        }
        Ok(QuantizedVector(
            x.iter()
                .enumerate()
                .map(|(f, &v)| self.quantize_value(f, v))
                .collect(),
        ))
    }

    /// One-hot encode a quantized vector: feature `f`'s block gets a 1 at
    /// `block_offset(f) + bin`.
    pub fn one_hot_encode(&self, q: &QuantizedVector) -> Result<OneHotVector, BinError> {
        if q.0.len() != self.num_features() {
            return Err(BinError::DimensionMismatch {
                expected: self.num_features(),
                got: q.0.len(),
            });
        }
        let mut out = vec![0.0; self.total_width];
        for (f, &bin) in q.0.iter().enumerate() {
            if bin >= self.num_bins(f) {
                return Err(BinError::BinOutOfRange {
                    feature: f,
                    bin,
                    bins: self.num_bins(f),
                });
            }
            out[self.offsets[f] + bin] = 1.0;
        }
        Ok(OneHotVector(out))
    }

    /// Quantize-and-encode into a preallocated buffer of width
    /// `total_onehot_width`; the model forward pass hot path.
    pub(crate) fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.num_features());
        debug_assert_eq!(out.len(), self.total_width);
        out.fill(0.0);
        for (f, &v) in x.iter().enumerate() {
            out[self.offsets[f] + self.quantize_value(f, v)] = 1.0;
        }
    }
}

/// Interior nearest-rank quantiles of a column, deduplicated. Levels are
/// `i / requested_bins` for `i = 1 .. requested_bins - 1`; the value at
/// level `p` is the sorted column's rank `ceil(p * n)` entry (1-based).
/// Boundaries equal to the column minimum are dropped as well: under the
/// `>=` rule no training value can fall below them, so they would only
/// create a dead one-hot column. A constant column therefore yields no
/// boundaries at all.
pub fn fit_quantile_bins(column: &[f64], requested_bins: usize) -> Result<Vec<f64>, BinError> {
    if requested_bins < 1 {
        return Err(BinError::InvalidRequestedBins);
    }
    if column.is_empty() {
        return Err(BinError::EmptyColumn);
    }
    if let Some(row) = column.iter().position(|v| !v.is_finite()) {
        return Err(BinError::NonFiniteValue { row });
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("values are finite"));
    let n = sorted.len();
    let min = sorted[0];
    let mut boundaries = Vec::with_capacity(requested_bins.saturating_sub(1));
    for i in 1..requested_bins {
        // ceil(i * n / requested_bins) in exact integer arithmetic.
        let rank = (i * n).div_ceil(requested_bins);
        boundaries.push(sorted[rank - 1]);
    }
    boundaries.dedup();
    boundaries.retain(|b| *b > min);
    Ok(boundaries)
}

/// Fit per-feature quantile bins over a row-major feature matrix.
pub fn fit_binning(
    features: &[f64],
    num_features: usize,
    requested_bins: usize,
) -> Result<BinningSpec, BinError> {
    if num_features == 0 || !features.len().is_multiple_of(num_features) {
        return Err(BinError::DimensionMismatch {
            expected: num_features,
            got: features.len(),
        });
    }
    let n_rows = features.len() / num_features;
    if n_rows == 0 {
        return Err(BinError::EmptyColumn);
    }
    let mut boundaries = Vec::with_capacity(num_features);
    let mut column = vec![0.0; n_rows];
    for f in 0..num_features {
        for (r, slot) in column.iter_mut().enumerate() {
            *slot = features[r * num_features + f];
        }
        boundaries.push(fit_quantile_bins(&column, requested_bins)?);
    }
    BinningSpec::new(boundaries, requested_bins)
}

// ---------------------------------------------------------------------------
// Serialization (shared by model files and the `bins` subcommand)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FeatureBinsDoc {
    feature: usize,
    boundaries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BinningDoc {
    requested_bins: usize,
    features: Vec<FeatureBinsDoc>,
}

impl Serialize for BinningSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        BinningDoc {
            requested_bins: self.requested_bins,
            features: self
                .boundaries
                .iter()
                .enumerate()
                .map(|(feature, boundaries)| FeatureBinsDoc {
                    feature,
                    boundaries: boundaries.clone(),
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BinningSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = BinningDoc::deserialize(deserializer)?;
        let mut boundaries = vec![Vec::new(); doc.features.len()];
        for fb in doc.features {
            if fb.feature >= boundaries.len() {
                return Err(serde::de::Error::custom(format!(
                    "feature index {} out of range",
                    fb.feature
                )));
            }
            boundaries[fb.feature] = fb.boundaries;
        }
        BinningSpec::new(boundaries, doc.requested_bins)
            .map_err(|e| serde::de::Error::custom(e.to_string()))
    }
}
