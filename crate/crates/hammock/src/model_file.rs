//! Single-document JSON persistence for trained models and compiled
//! step networks.
//!
//! Layout: `{ format_version, encoding, layers, output_link, metadata }`
//! with dense row-major weight matrices per layer. Floats round-trip
//! through shortest-decimal form, so a reloaded model reproduces
//! bit-identical predictions. Step networks use layer activation
//! `"step"` plus an indicator encoding; their sparse in-memory form is
//! rebuilt from the dense weights on load.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binning::BinningSpec;
use crate::netconvert::{IndicatorColumn, IndicatorTransform, StepNetwork, StepNode};
use crate::nn::{Activation, DenseLayer, InputEncoding, MlpModel, OutputLink, TrainConfig};
use crate::trees::{Direction, Task};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum ModelFileError {
    Io { path: String, message: String },
    Json(String),
    BadFormat(String),
}

impl fmt::Display for ModelFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFileError::Io { path, message } => write!(f, "cannot access {path}: {message}"),
            ModelFileError::Json(msg) => write!(f, "malformed model file: {msg}"),
            ModelFileError::BadFormat(msg) => write!(f, "invalid model file: {msg}"),
        }
    }
}

impl std::error::Error for ModelFileError {}

fn bad(msg: impl Into<String>) -> ModelFileError {
    ModelFileError::BadFormat(msg.into())
}

/// Provenance and reproduction info stored alongside the parameters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arch: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    /// Step networks: the conversion margin.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Step networks: source tree index per hidden node.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_tree: Option<Vec<usize>>,
    /// Step networks: output slot per hidden node.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_class: Option<Vec<usize>>,
}

/// A loaded model file: either a trainable network or a compiled step
/// network.
#[derive(Debug)]
pub enum LoadedModel {
    Mlp(Box<MlpModel>, ModelMetadata),
    Step(Box<StepNetwork>, ModelMetadata),
}

// ---------------------------------------------------------------------------
// Wire structs
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    encoding: EncodingDoc,
    layers: Vec<LayerDoc>,
    output_link: LinkDoc,
    metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum EncodingDoc {
    Raw {
        mean: Vec<f64>,
        std: Vec<f64>,
    },
    QuantizedOnehot(BinningSpec),
    Indicator {
        num_features: usize,
        columns: Vec<ColumnDoc>,
    },
}

#[derive(Serialize, Deserialize)]
struct ColumnDoc {
    feature: usize,
    threshold: f64,
    direction: String,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LinkDoc {
    Identity,
    Sigmoid,
    Softmax { num_classes: usize },
}

impl From<OutputLink> for LinkDoc {
    fn from(link: OutputLink) -> Self {
        match link {
            OutputLink::Identity => LinkDoc::Identity,
            OutputLink::Sigmoid => LinkDoc::Sigmoid,
            OutputLink::Softmax(k) => LinkDoc::Softmax { num_classes: k },
        }
    }
}

impl From<LinkDoc> for OutputLink {
    fn from(doc: LinkDoc) -> Self {
        match doc {
            LinkDoc::Identity => OutputLink::Identity,
            LinkDoc::Sigmoid => OutputLink::Sigmoid,
            LinkDoc::Softmax { num_classes } => OutputLink::Softmax(num_classes),
        }
    }
}

fn task_to_link(task: Task) -> LinkDoc {
    match task {
        Task::Regression => LinkDoc::Identity,
        Task::BinaryLogistic => LinkDoc::Sigmoid,
        Task::Multiclass(k) => LinkDoc::Softmax { num_classes: k },
    }
}

fn link_to_task(link: &LinkDoc) -> Task {
    match link {
        LinkDoc::Identity => Task::Regression,
        LinkDoc::Sigmoid => Task::BinaryLogistic,
        LinkDoc::Softmax { num_classes } => Task::Multiclass(*num_classes),
    }
}

// ---------------------------------------------------------------------------
// MLP <-> doc
// ---------------------------------------------------------------------------

fn mlp_to_doc(model: &MlpModel, metadata: &ModelMetadata) -> ModelDoc {
    let mut metadata = metadata.clone();
    metadata.seed.get_or_insert(model.rng_seed);
    ModelDoc {
        format_version: FORMAT_VERSION,
        encoding: match &model.encoding {
            InputEncoding::Raw { mean, std } => EncodingDoc::Raw {
                mean: mean.clone(),
                std: std.clone(),
            },
            InputEncoding::QuantizedOneHot(spec) => EncodingDoc::QuantizedOnehot(spec.clone()),
        },
        layers: model
            .layers
            .iter()
            .map(|l| LayerDoc {
                rows: l.in_dim,
                cols: l.out_dim,
                weights: l.weights.clone(),
                bias: l.bias.clone(),
                activation: match l.activation {
                    Activation::Identity => "identity".into(),
                    Activation::Relu => "relu".into(),
                },
            })
            .collect(),
        output_link: model.output_link.into(),
        metadata,
    }
}

fn doc_to_model(doc: ModelDoc) -> Result<LoadedModel, ModelFileError> {
    if doc.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format_version {}",
            doc.format_version
        )));
    }
    for (i, layer) in doc.layers.iter().enumerate() {
        if layer.weights.len() != layer.rows * layer.cols || layer.bias.len() != layer.cols {
            return Err(bad(format!(
                "layer {i}: buffer sizes do not match rows x cols"
            )));
        }
    }
    let is_step = doc.layers.iter().any(|l| l.activation == "step");
    if is_step {
        doc_to_step(doc)
    } else {
        doc_to_mlp(doc)
    }
}

fn doc_to_mlp(doc: ModelDoc) -> Result<LoadedModel, ModelFileError> {
    let encoding = match doc.encoding {
        EncodingDoc::Raw { mean, std } => {
            if mean.len() != std.len() {
                return Err(bad("raw encoding mean/std length mismatch"));
            }
            if std.iter().any(|s| *s == 0.0 || !s.is_finite()) {
                return Err(bad("raw encoding std entries must be finite and non-zero"));
            }
            InputEncoding::Raw { mean, std }
        }
        EncodingDoc::QuantizedOnehot(spec) => InputEncoding::QuantizedOneHot(spec),
        EncodingDoc::Indicator { .. } => {
            return Err(bad("indicator encodings require step layers"));
        }
    };
    let mut layers = Vec::with_capacity(doc.layers.len());
    for layer in doc.layers {
        let activation = match layer.activation.as_str() {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            other => return Err(bad(format!("unknown activation {other:?}"))),
        };
        layers.push(DenseLayer {
            in_dim: layer.rows,
            out_dim: layer.cols,
            weights: layer.weights,
            bias: layer.bias,
            activation,
        });
    }
    let seed = doc.metadata.seed.unwrap_or(0);
    let model = MlpModel::new(encoding, layers, doc.output_link.into(), seed)
        .map_err(|e| bad(e.to_string()))?;
    Ok(LoadedModel::Mlp(Box::new(model), doc.metadata))
}

// ---------------------------------------------------------------------------
// Step network <-> doc
// ---------------------------------------------------------------------------

fn step_to_doc(net: &StepNetwork, metadata: &ModelMetadata) -> ModelDoc {
    let mut metadata = metadata.clone();
    metadata.epsilon.get_or_insert(net.epsilon);
    metadata
        .node_tree
        .get_or_insert_with(|| net.nodes.iter().map(|n| n.tree).collect());
    metadata
        .node_class
        .get_or_insert_with(|| net.nodes.iter().map(|n| n.output).collect());
    ModelDoc {
        format_version: FORMAT_VERSION,
        encoding: EncodingDoc::Indicator {
            num_features: net.transform.num_features(),
            columns: net
                .transform
                .columns()
                .iter()
                .map(|c| ColumnDoc {
                    feature: c.feature,
                    threshold: c.threshold,
                    direction: match c.direction {
                        Direction::Lt => "lt".into(),
                        Direction::Ge => "ge".into(),
                    },
                })
                .collect(),
        },
        layers: vec![
            LayerDoc {
                rows: net.transform.width(),
                cols: net.hidden_count(),
                weights: net.w1_dense(),
                bias: net.b1(),
                activation: "step".into(),
            },
            LayerDoc {
                rows: net.hidden_count(),
                cols: net.num_outputs(),
                weights: net.w2_dense(),
                bias: net.output_bias.clone(),
                activation: "identity".into(),
            },
        ],
        output_link: task_to_link(net.task),
        metadata,
    }
}

fn doc_to_step(doc: ModelDoc) -> Result<LoadedModel, ModelFileError> {
    let (num_features, column_docs) = match doc.encoding {
        EncodingDoc::Indicator {
            num_features,
            columns,
        } => (num_features, columns),
        _ => return Err(bad("step layers require an indicator encoding")),
    };
    let columns = column_docs
        .into_iter()
        .map(|c| {
            let direction = match c.direction.as_str() {
                "lt" => Ok(Direction::Lt),
                "ge" => Ok(Direction::Ge),
                other => Err(bad(format!("unknown indicator direction {other:?}"))),
            }?;
            Ok(IndicatorColumn {
                feature: c.feature,
                threshold: c.threshold,
                direction,
            })
        })
        .collect::<Result<Vec<_>, ModelFileError>>()?;
    let transform =
        IndicatorTransform::from_columns(columns, num_features).map_err(|e| bad(e.to_string()))?;

    if doc.layers.len() != 2 {
        return Err(bad("step networks have exactly two layers"));
    }
    let (hidden, output) = (&doc.layers[0], &doc.layers[1]);
    if hidden.activation != "step" || output.activation != "identity" {
        return Err(bad("step networks use activations (step, identity)"));
    }
    if hidden.rows != transform.width() || output.rows != hidden.cols {
        return Err(bad(
            "step layer shapes do not chain with the indicator transform",
        ));
    }

    let epsilon = doc
        .metadata
        .epsilon
        .ok_or_else(|| bad("metadata.epsilon missing"))?;
    let node_tree = doc
        .metadata
        .node_tree
        .clone()
        .ok_or_else(|| bad("metadata.node_tree missing"))?;
    let node_class = doc
        .metadata
        .node_class
        .clone()
        .ok_or_else(|| bad("metadata.node_class missing"))?;
    let hidden_count = hidden.cols;
    if node_tree.len() != hidden_count || node_class.len() != hidden_count {
        return Err(bad("node metadata length does not match the hidden layer"));
    }

    let mut nodes = Vec::with_capacity(hidden_count);
    for j in 0..hidden_count {
        let mut condition_columns = Vec::new();
        for i in 0..hidden.rows {
            let w = hidden.weights[i * hidden_count + j];
            if w == 1.0 {
                condition_columns.push(i);
            } else if w != 0.0 {
                return Err(bad(format!("hidden weight at ({i}, {j}) is not binary")));
            }
        }
        let class = node_class[j];
        if class >= output.cols {
            return Err(bad(format!("node {j}: class {class} out of range")));
        }
        for c in 0..output.cols {
            if c != class && output.weights[j * output.cols + c] != 0.0 {
                return Err(bad(format!(
                    "node {j}: output weights leak outside class {class}"
                )));
            }
        }
        nodes.push(StepNode {
            condition_columns,
            bias: hidden.bias[j],
            weight: output.weights[j * output.cols + class],
            output: class,
            tree: node_tree[j],
        });
    }
    let net = StepNetwork::from_parts(
        transform,
        nodes,
        output.bias.clone(),
        link_to_task(&doc.output_link),
        epsilon,
    )
    .map_err(|e| bad(e.to_string()))?;
    Ok(LoadedModel::Step(Box::new(net), doc.metadata))
}

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

pub fn model_to_json(model: &MlpModel, metadata: &ModelMetadata) -> String {
    serde_json::to_string(&mlp_to_doc(model, metadata)).expect("model serialization cannot fail")
}

pub fn step_to_json(net: &StepNetwork, metadata: &ModelMetadata) -> String {
    serde_json::to_string(&step_to_doc(net, metadata)).expect("model serialization cannot fail")
}

pub fn model_from_json(text: &str) -> Result<LoadedModel, ModelFileError> {
    let doc: ModelDoc =
        serde_json::from_str(text).map_err(|e| ModelFileError::Json(e.to_string()))?;
    doc_to_model(doc)
}

pub fn save_model(
    path: &Path,
    model: &MlpModel,
    metadata: &ModelMetadata,
) -> Result<(), ModelFileError> {
    write_doc(path, &mlp_to_doc(model, metadata))
}

pub fn save_step_network(
    path: &Path,
    net: &StepNetwork,
    metadata: &ModelMetadata,
) -> Result<(), ModelFileError> {
    write_doc(path, &step_to_doc(net, metadata))
}

pub fn load_model(path: &Path) -> Result<LoadedModel, ModelFileError> {
    let file = File::open(path).map_err(|e| ModelFileError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let doc: ModelDoc = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| ModelFileError::Json(e.to_string()))?;
    doc_to_model(doc)
}

fn write_doc(path: &Path, doc: &ModelDoc) -> Result<(), ModelFileError> {
    let file = File::create(path).map_err(|e| ModelFileError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::to_writer(BufWriter::new(file), doc)
        .map_err(|e| ModelFileError::Json(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::fit_binning;
    use crate::netconvert::convert_ensemble;
    use crate::nn::{init_model, ArchConfig};
    use crate::trees::random_ensemble;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_mlp() -> MlpModel {
        let rows: Vec<f64> = (0..120)
            .flat_map(|i| vec![(i % 17) as f64, (i % 5) as f64 * 0.7])
            .collect();
        let spec = fit_binning(&rows, 2, 6).unwrap();
        let mut model =
            init_model(&ArchConfig::hammock(spec, 5, OutputLink::Softmax(3)), 42).unwrap();
        // Give the parameters awkward values so round-trips are exercised
        // beyond the init distribution.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for layer in &mut model.layers {
            for b in &mut layer.bias {
                *b = rng.random_range(-0.01..0.01) / 3.0;
            }
        }
        model
    }

    #[test]
    fn mlp_round_trip_is_bit_identical() {
        let model = sample_mlp();
        let json = model_to_json(&model, &ModelMetadata::default());
        let LoadedModel::Mlp(loaded, meta) = model_from_json(&json).unwrap() else {
            panic!("expected an mlp");
        };
        assert_eq!(*loaded, model);
        assert_eq!(meta.seed, Some(42));

        let mut cache_a = model.scratch();
        let mut cache_b = loaded.scratch();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = [rng.random_range(-5.0..25.0), rng.random_range(-5.0..10.0)];
            assert_eq!(
                model.forward_infer(&x, &mut cache_a).unwrap(),
                loaded.forward_infer(&x, &mut cache_b).unwrap()
            );
        }
    }

    #[test]
    fn step_round_trip_is_bit_identical() {
        let ens = random_ensemble(5, 4, 6, 4, crate::trees::Task::Multiclass(3));
        let net = convert_ensemble(&ens, 0.1).unwrap();
        let json = step_to_json(&net, &ModelMetadata::default());
        let LoadedModel::Step(loaded, meta) = model_from_json(&json).unwrap() else {
            panic!("expected a step network");
        };
        assert_eq!(*loaded, net);
        assert_eq!(meta.epsilon, Some(0.1));

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..1.5)).collect();
            assert_eq!(net.forward(&x).unwrap(), loaded.forward(&x).unwrap());
        }
    }

    #[test]
    fn save_and_load_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = sample_mlp();
        let meta = ModelMetadata {
            arch: Some("hammock".into()),
            class_names: Some(vec!["a".into(), "b".into(), "c".into()]),
            ..ModelMetadata::default()
        };
        save_model(&path, &model, &meta).unwrap();
        let LoadedModel::Mlp(loaded, loaded_meta) = load_model(&path).unwrap() else {
            panic!("expected an mlp");
        };
        assert_eq!(*loaded, model);
        assert_eq!(loaded_meta.arch.as_deref(), Some("hammock"));
        assert_eq!(loaded_meta.class_names.unwrap().len(), 3);
    }

    #[test]
    fn rejects_malformed_documents() {
        assert!(matches!(model_from_json("{"), Err(ModelFileError::Json(_))));
        assert!(matches!(
            model_from_json(
                r#"{"format_version": 9, "encoding": {"kind": "raw", "mean": [], "std": []}, "layers": [], "output_link": {"kind": "identity"}, "metadata": {}}"#
            ),
            Err(ModelFileError::BadFormat(_))
        ));
    }

    #[test]
    fn rejects_step_file_without_node_metadata() {
        let ens = random_ensemble(5, 3, 2, 3, crate::trees::Task::Regression);
        let net = convert_ensemble(&ens, 0.1).unwrap();
        let json = step_to_json(&net, &ModelMetadata::default());
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc["metadata"].as_object_mut().unwrap().remove("node_tree");
        let err = model_from_json(&doc.to_string()).unwrap_err();
        assert!(matches!(err, ModelFileError::BadFormat(_)));
    }

    #[test]
    fn rejects_non_binary_step_weights() {
        let ens = random_ensemble(6, 3, 2, 3, crate::trees::Task::Regression);
        let net = convert_ensemble(&ens, 0.1).unwrap();
        let json = step_to_json(&net, &ModelMetadata::default());
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        doc["layers"][0]["weights"][0] = serde_json::json!(0.5);
        let err = model_from_json(&doc.to_string()).unwrap_err();
        assert!(matches!(err, ModelFileError::BadFormat(_)));
    }
}
