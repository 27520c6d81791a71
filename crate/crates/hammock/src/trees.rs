//! Decision trees and gradient-boosted ensembles.
//!
//! Trees are immutable after construction: binary splits of the form
//! `feature < threshold` route left, `feature >= threshold` route right.
//! An ensemble sums routed leaf values on top of a base score, per class
//! group in the multiclass case. This module also extracts the raw
//! material the network compiler needs: root-to-leaf paths and the set
//! of distinct thresholds per feature.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A node in a decision tree. Children are indices into the owning
/// tree's node vector; index 0 is always the root.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A single binary decision tree with real-valued leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

/// Prediction task of an ensemble. Determines the number of raw score
/// outputs and the link applied by [`TreeEnsemble::predict`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    BinaryLogistic,
    Multiclass(usize),
}

impl Task {
    /// Number of raw score outputs (1, or k for multiclass).
    pub fn num_outputs(&self) -> usize {
        match self {
            Task::Regression | Task::BinaryLogistic => 1,
            Task::Multiclass(k) => *k,
        }
    }
}

/// An additive ensemble of decision trees.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    trees: Vec<DecisionTree>,
    num_features: usize,
    base_score: f64,
    task: Task,
    /// Class index per tree; present iff `task` is multiclass.
    class_of_tree: Option<Vec<usize>>,
}

/// Which side of a `feature < threshold` split a path edge took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Lt,
    Ge,
}

/// One edge condition on a root-to-leaf path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathCondition {
    pub feature: usize,
    pub threshold: f64,
    pub direction: Direction,
}

/// A root-to-leaf path: the conjunction of its conditions selects the leaf.
/// Conditions are ordered root to leaf with duplicate triples removed.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPath {
    pub leaf_value: f64,
    pub conditions: Vec<PathCondition>,
    pub tree_index: usize,
}

/// Distinct split thresholds per feature, sorted ascending. Features the
/// ensemble never splits on map to empty lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    per_feature: Vec<Vec<f64>>,
}

impl ThresholdSet {
    pub fn num_features(&self) -> usize {
        self.per_feature.len()
    }

    pub fn thresholds(&self, feature: usize) -> &[f64] {
        &self.per_feature[feature]
    }

    /// Total number of thresholds across all features.
    pub fn total_count(&self) -> usize {
        self.per_feature.iter().map(Vec::len).sum()
    }
}

/// Structural or schema violation found while building an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleError {
    Json(String),
    UnknownTask(String),
    MissingNumClasses,
    UnexpectedNumClasses,
    EmptyEnsemble,
    NonFiniteBaseScore,
    DuplicateNodeId {
        tree: usize,
        id: i64,
    },
    MissingRoot {
        tree: usize,
    },
    DanglingChild {
        tree: usize,
        id: i64,
        child: i64,
    },
    NodeRevisited {
        tree: usize,
        id: i64,
    },
    UnreachableNode {
        tree: usize,
        id: i64,
    },
    FeatureOutOfRange {
        tree: usize,
        id: i64,
        feature: usize,
        num_features: usize,
    },
    NonFiniteThreshold {
        tree: usize,
        id: i64,
    },
    NonFiniteLeaf {
        tree: usize,
        id: i64,
    },
    ClassOutOfRange {
        tree: usize,
        class: usize,
        num_classes: usize,
    },
    MissingClass {
        tree: usize,
    },
    UnexpectedClass {
        tree: usize,
    },
}

impl fmt::Display for EnsembleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnsembleError::Json(msg) => write!(f, "malformed ensemble JSON: {msg}"),
            EnsembleError::UnknownTask(t) => write!(f, "unknown task {t:?}"),
            EnsembleError::MissingNumClasses => {
                write!(f, "multiclass ensemble requires num_classes >= 2")
            }
            EnsembleError::UnexpectedNumClasses => {
                write!(f, "num_classes is only valid for multiclass ensembles")
            }
            EnsembleError::EmptyEnsemble => write!(f, "ensemble has no trees"),
            EnsembleError::NonFiniteBaseScore => write!(f, "base_score must be finite"),
            EnsembleError::DuplicateNodeId { tree, id } => {
                write!(f, "tree {tree}: duplicate node id {id}")
            }
            EnsembleError::MissingRoot { tree } => write!(f, "tree {tree}: no node with id 0"),
            EnsembleError::DanglingChild { tree, id, child } => {
                write!(f, "tree {tree}: node {id} references missing child {child}")
            }
            EnsembleError::NodeRevisited { tree, id } => {
                write!(f, "tree {tree}: node {id} is reachable more than once")
            }
            EnsembleError::UnreachableNode { tree, id } => {
                write!(f, "tree {tree}: node {id} is unreachable from the root")
            }
            EnsembleError::FeatureOutOfRange { tree, id, feature, num_features } => write!(
                f,
                "tree {tree}: node {id} splits on feature {feature}, but the ensemble has {num_features} features"
            ),
            EnsembleError::NonFiniteThreshold { tree, id } => {
                write!(f, "tree {tree}: node {id} has a non-finite threshold")
            }
            EnsembleError::NonFiniteLeaf { tree, id } => {
                write!(f, "tree {tree}: node {id} has a non-finite leaf value")
            }
            EnsembleError::ClassOutOfRange { tree, class, num_classes } => {
                write!(f, "tree {tree}: class {class} out of range (num_classes={num_classes})")
            }
            EnsembleError::MissingClass { tree } => {
                write!(f, "tree {tree}: multiclass ensembles require a class per tree")
            }
            EnsembleError::UnexpectedClass { tree } => {
                write!(f, "tree {tree}: class is only valid for multiclass ensembles")
            }
        }
    }
}

impl std::error::Error for EnsembleError {}

/// Invalid input vector passed to an evaluation routine.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    DimensionMismatch { expected: usize, got: usize },
    NonFiniteInput { index: usize },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::DimensionMismatch { expected, got } => {
                write!(f, "expected {expected} features, got {got}")
            }
            EvalError::NonFiniteInput { index } => {
                write!(f, "feature {index} is not finite")
            }
        }
    }
}

impl std::error::Error for EvalError {}

/// Outcome of [`TreeEnsemble::predict`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    /// Raw score (regression).
    Value(f64),
    /// Probability of the positive class (binary logistic).
    Probability(f64),
    /// Argmax class index (multiclass), ties broken toward the lowest index.
    Class(usize),
}

pub(crate) fn check_input(x: &[f64], expected: usize) -> Result<(), EvalError> {
    if x.len() != expected {
        return Err(EvalError::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(EvalError::NonFiniteInput { index });
    }
    Ok(())
}

impl DecisionTree {
    /// Build a tree from nodes with the root at index 0. Structure is
    /// validated (tree-shaped, thresholds finite); feature range checks
    /// happen at the ensemble level.
    pub fn new(nodes: Vec<TreeNode>) -> Result<Self, EnsembleError> {
        let tree = DecisionTree { nodes };
        tree.validate_structure(0)?;
        Ok(tree)
    }

    /// Single leaf with a constant value.
    pub fn leaf(value: f64) -> Self {
        DecisionTree {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Longest root-to-leaf edge count.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    fn validate_structure(&self, tree_index: usize) -> Result<(), EnsembleError> {
        if self.nodes.is_empty() {
            return Err(EnsembleError::MissingRoot { tree: tree_index });
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if seen[i] {
                return Err(EnsembleError::NodeRevisited {
                    tree: tree_index,
                    id: i as i64,
                });
            }
            seen[i] = true;
            match self.nodes[i] {
                TreeNode::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(EnsembleError::NonFiniteLeaf {
                            tree: tree_index,
                            id: i as i64,
                        });
                    }
                }
                TreeNode::Internal {
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return Err(EnsembleError::NonFiniteThreshold {
                            tree: tree_index,
                            id: i as i64,
                        });
                    }
                    for child in [left, right] {
                        if child >= self.nodes.len() {
                            return Err(EnsembleError::DanglingChild {
                                tree: tree_index,
                                id: i as i64,
                                child: child as i64,
                            });
                        }
                    }
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(EnsembleError::UnreachableNode {
                tree: tree_index,
                id: i as i64,
            });
        }
        Ok(())
    }

    /// Route `x` to a leaf and return its value. `x[feature] < threshold`
    /// goes left; boundary values go right.
    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(EvalError::NonFiniteInput { index });
        }
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return Ok(value),
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = *x.get(feature).ok_or(EvalError::DimensionMismatch {
                        expected: feature + 1,
                        got: x.len(),
                    })?;
                    i = if v < threshold { left } else { right };
                }
            }
        }
    }

    /// Routing without input checks; callers must have validated `x`.
    fn eval_routed(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    /// All root-to-leaf paths in depth-first left-to-right order.
    /// Conditions are ordered root to leaf; a condition triple that
    /// repeats on the way down is recorded once.
    pub fn paths(&self, tree_index: usize) -> Vec<LeafPath> {
        let mut out = Vec::with_capacity(self.num_leaves());
        let mut conditions: Vec<PathCondition> = Vec::new();
        self.paths_rec(0, tree_index, &mut conditions, &mut out);
        out
    }

    fn paths_rec(
        &self,
        i: usize,
        tree_index: usize,
        conditions: &mut Vec<PathCondition>,
        out: &mut Vec<LeafPath>,
    ) {
        match self.nodes[i] {
            TreeNode::Leaf { value } => out.push(LeafPath {
                leaf_value: value,
                conditions: conditions.clone(),
                tree_index,
            }),
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                for (child, direction) in [(left, Direction::Lt), (right, Direction::Ge)] {
                    let cond = PathCondition {
                        feature,
                        threshold,
                        direction,
                    };
                    let duplicate = conditions.contains(&cond);
                    if !duplicate {
                        conditions.push(cond);
                    }
                    self.paths_rec(child, tree_index, conditions, out);
                    if !duplicate {
                        conditions.pop();
                    }
                }
            }
        }
    }
}

impl TreeEnsemble {
    pub fn new(
        trees: Vec<DecisionTree>,
        num_features: usize,
        base_score: f64,
        task: Task,
        class_of_tree: Option<Vec<usize>>,
    ) -> Result<Self, EnsembleError> {
        if trees.is_empty() {
            return Err(EnsembleError::EmptyEnsemble);
        }
        if !base_score.is_finite() {
            return Err(EnsembleError::NonFiniteBaseScore);
        }
        match (task, &class_of_tree) {
            (Task::Multiclass(k), Some(classes)) => {
                if k < 2 {
                    return Err(EnsembleError::MissingNumClasses);
                }
                if classes.len() != trees.len() {
                    return Err(EnsembleError::MissingClass {
                        tree: classes.len(),
                    });
                }
                for (t, &c) in classes.iter().enumerate() {
                    if c >= k {
                        return Err(EnsembleError::ClassOutOfRange {
                            tree: t,
                            class: c,
                            num_classes: k,
                        });
                    }
                }
            }
            (Task::Multiclass(_), None) => {
                return Err(EnsembleError::MissingClass { tree: 0 });
            }
            (_, Some(_)) => return Err(EnsembleError::UnexpectedClass { tree: 0 }),
            (_, None) => {}
        }
        for (t, tree) in trees.iter().enumerate() {
            tree.validate_structure(t)?;
            for (i, node) in tree.nodes.iter().enumerate() {
                if let TreeNode::Internal { feature, .. } = node {
                    if *feature >= num_features {
                        return Err(EnsembleError::FeatureOutOfRange {
                            tree: t,
                            id: i as i64,
                            feature: *feature,
                            num_features,
                        });
                    }
                }
            }
        }
        Ok(TreeEnsemble {
            trees,
            num_features,
            base_score,
            task,
            class_of_tree,
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Class group of tree `t` (0 for single-output tasks).
    pub fn class_of_tree(&self, t: usize) -> usize {
        self.class_of_tree.as_ref().map_or(0, |c| c[t])
    }

    pub fn total_leaves(&self) -> usize {
        self.trees.iter().map(DecisionTree::num_leaves).sum()
    }

    /// Raw scores: `base_score` plus the routed leaf value of every tree,
    /// summed per class group. No link function is applied.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        check_input(x, self.num_features)?;
        let mut scores = vec![self.base_score; self.task.num_outputs()];
        for (t, tree) in self.trees.iter().enumerate() {
            scores[self.class_of_tree(t)] += tree.eval_routed(x);
        }
        Ok(scores)
    }

    /// Apply the task's link to the raw scores: identity for regression,
    /// sigmoid for binary logistic, argmax for multiclass.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, EvalError> {
        let scores = self.eval(x)?;
        Ok(match self.task {
            Task::Regression => Prediction::Value(scores[0]),
            Task::BinaryLogistic => Prediction::Probability(1.0 / (1.0 + (-scores[0]).exp())),
            Task::Multiclass(_) => {
                let mut best = 0;
                for (c, &s) in scores.iter().enumerate() {
                    if s > scores[best] {
                        best = c;
                    }
                }
                Prediction::Class(best)
            }
        })
    }

    /// All leaf paths across the ensemble, tree order then depth-first
    /// leaf order.
    pub fn all_paths(&self) -> Vec<LeafPath> {
        self.trees
            .iter()
            .enumerate()
            .flat_map(|(t, tree)| tree.paths(t))
            .collect()
    }

    /// Distinct thresholds per feature across every tree, sorted ascending.
    pub fn collect_thresholds(&self) -> ThresholdSet {
        let mut per_feature = vec![Vec::new(); self.num_features];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let TreeNode::Internal {
                    feature, threshold, ..
                } = node
                {
                    per_feature[*feature].push(*threshold);
                }
            }
        }
        for list in &mut per_feature {
            list.sort_by(|a, b| a.partial_cmp(b).expect("thresholds are finite"));
            list.dedup();
        }
        ThresholdSet { per_feature }
    }
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct EnsembleDoc {
    num_features: usize,
    task: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    base_score: f64,
    trees: Vec<TreeDoc>,
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    class: Option<usize>,
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeDoc {
    Internal {
        id: i64,
        feature: usize,
        threshold: f64,
        left: i64,
        right: i64,
    },
    Leaf {
        id: i64,
        leaf: f64,
    },
}

/// Parse an ensemble from its JSON document. Node ids may be arbitrary
/// integers; id 0 is the root. The result stores nodes in depth-first
/// preorder, so serializations are canonical.
pub fn parse_ensemble(text: &str) -> Result<TreeEnsemble, EnsembleError> {
    let doc: EnsembleDoc =
        serde_json::from_str(text).map_err(|e| EnsembleError::Json(e.to_string()))?;

    let task = match doc.task.as_str() {
        "regression" => Task::Regression,
        "binary_logistic" => Task::BinaryLogistic,
        "multiclass" => match doc.num_classes {
            Some(k) if k >= 2 => Task::Multiclass(k),
            _ => return Err(EnsembleError::MissingNumClasses),
        },
        other => return Err(EnsembleError::UnknownTask(other.to_string())),
    };
    if !matches!(task, Task::Multiclass(_)) && doc.num_classes.is_some() {
        return Err(EnsembleError::UnexpectedNumClasses);
    }

    let mut trees = Vec::with_capacity(doc.trees.len());
    let mut classes = Vec::with_capacity(doc.trees.len());
    for (t, tree_doc) in doc.trees.iter().enumerate() {
        trees.push(tree_from_doc(t, tree_doc)?);
        match (task, tree_doc.class) {
            (Task::Multiclass(_), Some(c)) => classes.push(c),
            (Task::Multiclass(_), None) => return Err(EnsembleError::MissingClass { tree: t }),
            (_, Some(_)) => return Err(EnsembleError::UnexpectedClass { tree: t }),
            (_, None) => {}
        }
    }
    let class_of_tree = matches!(task, Task::Multiclass(_)).then_some(classes);
    TreeEnsemble::new(trees, doc.num_features, doc.base_score, task, class_of_tree)
}

fn tree_from_doc(t: usize, doc: &TreeDoc) -> Result<DecisionTree, EnsembleError> {
    let mut by_id: HashMap<i64, &NodeDoc> = HashMap::with_capacity(doc.nodes.len());
    for node in &doc.nodes {
        let id = match node {
            NodeDoc::Internal { id, .. } | NodeDoc::Leaf { id, .. } => *id,
        };
        if by_id.insert(id, node).is_some() {
            return Err(EnsembleError::DuplicateNodeId { tree: t, id });
        }
    }
    if !by_id.contains_key(&0) {
        return Err(EnsembleError::MissingRoot { tree: t });
    }

    // Rebuild in preorder from the root; detects cycles, shared nodes,
    // dangling ids, and nodes the root never reaches.
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    let mut visited: HashMap<i64, ()> = HashMap::with_capacity(doc.nodes.len());
    preorder(t, 0, &by_id, &mut visited, &mut nodes)?;
    if visited.len() != by_id.len() {
        let id = by_id
            .keys()
            .find(|id| !visited.contains_key(id))
            .copied()
            .unwrap_or(0);
        return Err(EnsembleError::UnreachableNode { tree: t, id });
    }
    Ok(DecisionTree { nodes })
}

fn preorder(
    t: usize,
    id: i64,
    by_id: &HashMap<i64, &NodeDoc>,
    visited: &mut HashMap<i64, ()>,
    nodes: &mut Vec<TreeNode>,
) -> Result<usize, EnsembleError> {
    if visited.insert(id, ()).is_some() {
        return Err(EnsembleError::NodeRevisited { tree: t, id });
    }
    let slot = nodes.len();
    match by_id[&id] {
        NodeDoc::Leaf { leaf, .. } => {
            if !leaf.is_finite() {
                return Err(EnsembleError::NonFiniteLeaf { tree: t, id });
            }
            nodes.push(TreeNode::Leaf { value: *leaf });
        }
        NodeDoc::Internal {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            if !threshold.is_finite() {
                return Err(EnsembleError::NonFiniteThreshold { tree: t, id });
            }
            for child in [*left, *right] {
                if !by_id.contains_key(&child) {
                    return Err(EnsembleError::DanglingChild { tree: t, id, child });
                }
            }
            nodes.push(TreeNode::Internal {
                feature: *feature,
                threshold: *threshold,
                left: usize::MAX,
                right: usize::MAX,
            });
            let left_slot = preorder(t, *left, by_id, visited, nodes)?;
            let right_slot = preorder(t, *right, by_id, visited, nodes)?;
            if let TreeNode::Internal {
                left: l, right: r, ..
            } = &mut nodes[slot]
            {
                *l = left_slot;
                *r = right_slot;
            }
        }
    }
    Ok(slot)
}

/// Serialize an ensemble to the JSON document format. Node ids are the
/// preorder indices, so output bytes are deterministic.
pub fn serialize_ensemble(ens: &TreeEnsemble) -> String {
    let (task, num_classes) = match ens.task {
        Task::Regression => ("regression", None),
        Task::BinaryLogistic => ("binary_logistic", None),
        Task::Multiclass(k) => ("multiclass", Some(k)),
    };
    let doc = EnsembleDoc {
        num_features: ens.num_features,
        task: task.to_string(),
        num_classes,
        base_score: ens.base_score,
        trees: ens
            .trees
            .iter()
            .enumerate()
            .map(|(t, tree)| TreeDoc {
                class: ens.class_of_tree.as_ref().map(|c| c[t]),
                nodes: tree
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(i, node)| match *node {
                        TreeNode::Leaf { value } => NodeDoc::Leaf {
                            id: i as i64,
                            leaf: value,
                        },
                        TreeNode::Internal {
                            feature,
                            threshold,
                            left,
                            right,
                        } => NodeDoc::Internal {
                            id: i as i64,
                            feature,
                            threshold,
                            left: left as i64,
                            right: right as i64,
                        },
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("ensemble serialization cannot fail")
}

/// Generate a reproducible random ensemble for equivalence testing.
/// Thresholds are drawn in [0, 1), leaf values in [-1, 1), the base
/// score in [-0.5, 0.5), and every tree has an internal root and depth
/// at most `max_depth`.
pub fn random_ensemble(
    seed: u64,
    num_features: usize,
    num_trees: usize,
    max_depth: usize,
    task: Task,
) -> TreeEnsemble {
    assert!(
        num_features >= 1 && num_trees >= 1 && max_depth >= 1,
        "all counts must be >= 1"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(num_trees);
    for _ in 0..num_trees {
        let mut nodes = Vec::new();
        grow(&mut rng, num_features, 0, max_depth, &mut nodes);
        trees.push(DecisionTree { nodes });
    }
    let class_of_tree = match task {
        Task::Multiclass(k) => {
            assert!(k >= 2, "multiclass requires k >= 2");
            Some((0..num_trees).map(|_| rng.random_range(0..k)).collect())
        }
        _ => None,
    };
    let base_score = rng.random_range(-0.5..0.5);
    TreeEnsemble::new(trees, num_features, base_score, task, class_of_tree)
        .expect("generated ensemble is structurally valid")
}

fn grow(
    rng: &mut ChaCha8Rng,
    num_features: usize,
    depth: usize,
    max_depth: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let slot = nodes.len();
    let make_leaf = depth == max_depth || (depth > 0 && rng.random_bool(0.3));
    if make_leaf {
        let value = rng.random_range(-1.0..1.0);
        nodes.push(TreeNode::Leaf { value });
    } else {
        let feature = rng.random_range(0..num_features);
        let threshold = rng.random_range(0.0..1.0);
        nodes.push(TreeNode::Internal {
            feature,
            threshold,
            left: usize::MAX,
            right: usize::MAX,
        });
        let left = grow(rng, num_features, depth + 1, max_depth, nodes);
        let right = grow(rng, num_features, depth + 1, max_depth, nodes);
        if let TreeNode::Internal {
            left: l, right: r, ..
        } = &mut nodes[slot]
        {
            *l = left;
            *r = right;
        }
    }
    slot
}
