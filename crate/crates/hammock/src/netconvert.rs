//! Compile a tree ensemble into its exact step-network equivalent.
//!
//! The input transform turns a feature vector into complementary
//! indicator pairs `[f < t, f >= t]` for every distinct (feature,
//! threshold) in the ensemble. Each hidden node stands for one leaf: its
//! incoming weights select the indicator columns on the leaf's
//! root-to-leaf path, its bias is `-(k - epsilon)` for a path of `k`
//! conditions, and its activation is a step. A node therefore fires
//! exactly when all of its path conditions hold, which happens for
//! exactly one leaf per tree, and the output layer accumulates the
//! firing leaves' values per class on top of the base score.
//!
//! Hidden nodes are stored sparsely (the condition column indices); the
//! dense weight matrices the model file format wants are materialized on
//! demand.

use std::collections::HashMap;
use std::fmt;

use crate::trees::{check_input, Direction, EvalError, Task, ThresholdSet, TreeEnsemble};

/// One indicator column: the truth value of `feature < threshold` or
/// `feature >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorColumn {
    pub feature: usize,
    pub threshold: f64,
    pub direction: Direction,
}

/// Ordered indicator columns, adjacent (Lt, Ge) pairs per threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorTransform {
    columns: Vec<IndicatorColumn>,
    num_features: usize,
    // (feature, threshold bits) -> index of the pair's Lt column.
    pair_index: HashMap<(usize, u64), usize>,
}

impl IndicatorTransform {
    /// Columns ordered by feature, then threshold, with Lt before Ge.
    pub fn from_thresholds(thresholds: &ThresholdSet) -> Self {
        let mut columns = Vec::with_capacity(2 * thresholds.total_count());
        let mut pair_index = HashMap::new();
        for feature in 0..thresholds.num_features() {
            for &threshold in thresholds.thresholds(feature) {
                pair_index.insert((feature, threshold.to_bits()), columns.len());
                columns.push(IndicatorColumn {
                    feature,
                    threshold,
                    direction: Direction::Lt,
                });
                columns.push(IndicatorColumn {
                    feature,
                    threshold,
                    direction: Direction::Ge,
                });
            }
        }
        IndicatorTransform {
            columns,
            num_features: thresholds.num_features(),
            pair_index,
        }
    }

    pub fn columns(&self) -> &[IndicatorColumn] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Index of a (feature, threshold, direction) column, if present.
    pub fn column_index(
        &self,
        feature: usize,
        threshold: f64,
        direction: Direction,
    ) -> Option<usize> {
        let base = *self.pair_index.get(&(feature, threshold.to_bits()))?;
        Some(match direction {
            Direction::Lt => base,
            Direction::Ge => base + 1,
        })
    }

    /// The binary indicator vector for `x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        check_input(x, self.num_features)?;
        Ok(self
            .columns
            .iter()
            .map(|c| {
                let hit = match c.direction {
                    Direction::Lt => x[c.feature] < c.threshold,
                    Direction::Ge => x[c.feature] >= c.threshold,
                };
                if hit {
                    1.0
                } else {
                    0.0
                }
            })
            .collect())
    }

    fn apply_bits(&self, x: &[f64], bits: &mut Vec<bool>) {
        bits.clear();
        bits.extend(self.columns.iter().map(|c| match c.direction {
            Direction::Lt => x[c.feature] < c.threshold,
            Direction::Ge => x[c.feature] >= c.threshold,
        }));
    }

    /// Rebuild a transform from a stored column list, checking the
    /// pairing invariant.
    pub fn from_columns(
        columns: Vec<IndicatorColumn>,
        num_features: usize,
    ) -> Result<Self, ConvertError> {
        if !columns.len().is_multiple_of(2) {
            return Err(ConvertError::UnpairedColumns);
        }
        let mut pair_index = HashMap::new();
        for (i, pair) in columns.chunks(2).enumerate() {
            let ok = pair[0].feature == pair[1].feature
                && pair[0].threshold == pair[1].threshold
                && pair[0].direction == Direction::Lt
                && pair[1].direction == Direction::Ge
                && pair[0].feature < num_features;
            if !ok {
                return Err(ConvertError::UnpairedColumns);
            }
            pair_index.insert((pair[0].feature, pair[0].threshold.to_bits()), 2 * i);
        }
        Ok(IndicatorTransform {
            columns,
            num_features,
            pair_index,
        })
    }
}

/// One hidden node of a step network: the leaf it represents.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNode {
    /// Indicator columns on the leaf's path (distinct, ascending).
    pub condition_columns: Vec<usize>,
    /// `epsilon - condition count`; the node fires when every condition holds.
    pub bias: f64,
    /// The leaf value, wired to this node's class output.
    pub weight: f64,
    /// Output slot the weight feeds (0 unless multiclass).
    pub output: usize,
    /// Source tree index.
    pub tree: usize,
}

/// The exact network equivalent of an ensemble: indicator transform,
/// one step-activated hidden node per leaf, leaf values as output
/// weights, base score as output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNetwork {
    pub transform: IndicatorTransform,
    pub nodes: Vec<StepNode>,
    /// Output bias: the ensemble base score replicated per output.
    pub output_bias: Vec<f64>,
    pub task: Task,
    pub epsilon: f64,
    num_trees: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvertError {
    EpsilonOutOfRange(f64),
    UnpairedColumns,
}

impl fmt::Display for ConvertError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvertError::EpsilonOutOfRange(e) => {
                write!(f, "epsilon must lie strictly between 0 and 1, got {e}")
            }
            ConvertError::UnpairedColumns => {
                write!(
                    f,
                    "indicator columns must be adjacent (lt, ge) pairs per threshold"
                )
            }
        }
    }
}

impl std::error::Error for ConvertError {}

/// Compile an ensemble into its step network. Hidden nodes appear in
/// tree order, then depth-first leaf order, so conversion output is
/// reproducible byte for byte.
pub fn convert_ensemble(ens: &TreeEnsemble, epsilon: f64) -> Result<StepNetwork, ConvertError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ConvertError::EpsilonOutOfRange(epsilon));
    }
    let transform = IndicatorTransform::from_thresholds(&ens.collect_thresholds());
    let mut nodes = Vec::with_capacity(ens.total_leaves());
    for path in ens.all_paths() {
        let mut condition_columns = path
            .conditions
            .iter()
            .map(|c| {
                transform
                    .column_index(c.feature, c.threshold, c.direction)
                    .expect("path conditions use collected thresholds")
            })
            .collect::<Vec<_>>();
        condition_columns.sort_unstable();
        nodes.push(StepNode {
            bias: epsilon - condition_columns.len() as f64,
            weight: path.leaf_value,
            output: ens.class_of_tree(path.tree_index),
            tree: path.tree_index,
            condition_columns,
        });
    }
    Ok(StepNetwork {
        transform,
        nodes,
        output_bias: vec![ens.base_score(); ens.task().num_outputs()],
        task: ens.task(),
        epsilon,
        num_trees: ens.trees().len(),
    })
}

impl StepNetwork {
    /// Reassemble a network from stored parts (model file loading).
    pub fn from_parts(
        transform: IndicatorTransform,
        nodes: Vec<StepNode>,
        output_bias: Vec<f64>,
        task: Task,
        epsilon: f64,
    ) -> Result<Self, ConvertError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(ConvertError::EpsilonOutOfRange(epsilon));
        }
        let num_outputs = output_bias.len();
        let width = transform.width();
        for node in &nodes {
            if node.output >= num_outputs || node.condition_columns.iter().any(|&c| c >= width) {
                return Err(ConvertError::UnpairedColumns);
            }
        }
        let num_trees = nodes.iter().map(|n| n.tree + 1).max().unwrap_or(0);
        Ok(StepNetwork {
            transform,
            nodes,
            output_bias,
            task,
            epsilon,
            num_trees,
        })
    }

    pub fn hidden_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.output_bias.len()
    }

    pub fn num_trees(&self) -> usize {
        self.num_trees
    }

    pub fn num_features(&self) -> usize {
        self.transform.num_features()
    }

    /// Raw scores: step activations over the indicator transform, then
    /// accumulation into the output layer. Node order matches tree
    /// order, so sums are bit-identical to ensemble evaluation.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut bits = Vec::new();
        self.forward_with_bits(x, &mut bits)
    }

    fn forward_with_bits(&self, x: &[f64], bits: &mut Vec<bool>) -> Result<Vec<f64>, EvalError> {
        check_input(x, self.transform.num_features())?;
        self.transform.apply_bits(x, bits);
        let mut out = self.output_bias.clone();
        for node in &self.nodes {
            if node_fires(node, bits) {
                out[node.output] += node.weight;
            }
        }
        Ok(out)
    }

    /// Indices of firing hidden nodes for `x`.
    pub fn firing_nodes(&self, x: &[f64]) -> Result<Vec<usize>, EvalError> {
        check_input(x, self.transform.num_features())?;
        let mut bits = Vec::new();
        self.transform.apply_bits(x, &mut bits);
        Ok((0..self.nodes.len())
            .filter(|&i| node_fires(&self.nodes[i], &bits))
            .collect())
    }

    /// Dense first-layer weight matrix, row-major with shape
    /// (transform width, hidden count). Column sums equal each node's
    /// condition count.
    pub fn w1_dense(&self) -> Vec<f64> {
        let (rows, cols) = (self.transform.width(), self.nodes.len());
        let mut w = vec![0.0; rows * cols];
        for (j, node) in self.nodes.iter().enumerate() {
            for &i in &node.condition_columns {
                w[i * cols + j] = 1.0;
            }
        }
        w
    }

    pub fn b1(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.bias).collect()
    }

    /// Dense output weights, row-major with shape
    /// (hidden count, num outputs).
    pub fn w2_dense(&self) -> Vec<f64> {
        let cols = self.num_outputs();
        let mut w = vec![0.0; self.nodes.len() * cols];
        for (j, node) in self.nodes.iter().enumerate() {
            w[j * cols + node.output] = node.weight;
        }
        w
    }
}

fn node_fires(node: &StepNode, bits: &[bool]) -> bool {
    // step(z) with z = satisfied-count + (epsilon - k): fires iff z > 0,
    // i.e. iff every condition holds.
    let satisfied = node.condition_columns.iter().filter(|&&c| bits[c]).count();
    satisfied as f64 + node.bias > 0.0
}

/// Outcome of comparing a network against its source ensemble.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EquivalenceReport {
    pub inputs_checked: usize,
    pub max_abs_diff: f64,
    pub num_mismatches: usize,
    /// (input, tree) pairs where the firing hidden-node count was not 1.
    pub firing_violations: usize,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.num_mismatches == 0 && self.firing_violations == 0
    }
}

/// Compare raw ensemble scores against network outputs on every input,
/// and check that exactly one hidden node fires per source tree. An
/// input counts as a mismatch when any output differs by more than
/// `tol`. Mismatches are reported, never thrown.
pub fn verify_equivalence(
    ens: &TreeEnsemble,
    net: &StepNetwork,
    inputs: &[Vec<f64>],
    tol: f64,
) -> Result<EquivalenceReport, EvalError> {
    let mut report = EquivalenceReport {
        inputs_checked: inputs.len(),
        max_abs_diff: 0.0,
        num_mismatches: 0,
        firing_violations: 0,
    };
    let mut bits = Vec::new();
    let mut per_tree = vec![0usize; net.num_trees()];
    for x in inputs {
        let expected = ens.eval(x)?;
        let got = net.forward_with_bits(x, &mut bits)?;
        let mut mismatch = false;
        for (e, g) in expected.iter().zip(&got) {
            let diff = (e - g).abs();
            report.max_abs_diff = report.max_abs_diff.max(diff);
            mismatch |= diff > tol;
        }
        if mismatch {
            report.num_mismatches += 1;
        }
        per_tree.fill(0);
        for node in &net.nodes {
            if node_fires(node, &bits) {
                per_tree[node.tree] += 1;
            }
        }
        report.firing_violations += per_tree.iter().filter(|&&c| c != 1).count();
    }
    Ok(report)
}
