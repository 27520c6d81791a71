//! Trainable feed-forward networks over raw or quantized one-hot inputs.
//!
//! Three configurations cover the models this crate trains:
//!
//! - `hammock`: quantized one-hot encoding, one hidden layer, output layer;
//! - `lr-nn`: standardized raw input straight into the output layer;
//! - `nn-1l`: standardized raw input, one hidden layer, output layer.
//!
//! The forward/backward passes skip zero input entries, so the one-hot
//! encoding costs `num_features` weight-row updates per sample instead
//! of `onehot_width`.

mod adadelta;
mod train;

pub use adadelta::{adadelta_step, AdaDeltaState};
pub use train::{evaluate, train, EvalMetrics, TrainConfig, TrainReport};

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binning::BinningSpec;

#[derive(Debug, Clone, PartialEq)]
pub enum NnError {
    DimensionMismatch { expected: usize, got: usize },
    NonFiniteInput { index: usize },
    InvalidLabel { label: usize, num_classes: usize },
    NumericOverflow,
    UnsupportedLink,
    EmptyDataset,
    InvalidConfig(String),
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::DimensionMismatch { expected, got } => {
                write!(f, "expected input of dimension {expected}, got {got}")
            }
            NnError::NonFiniteInput { index } => write!(f, "feature {index} is not finite"),
            NnError::InvalidLabel { label, num_classes } => {
                write!(f, "label {label} invalid for {num_classes} model outputs")
            }
            NnError::NumericOverflow => write!(f, "non-finite activations during forward pass"),
            NnError::UnsupportedLink => {
                write!(f, "operation requires a sigmoid or softmax output link")
            }
            NnError::EmptyDataset => write!(f, "dataset has no rows"),
            NnError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl std::error::Error for NnError {}

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative, judged from the activation output. For relu the
    /// output sign equals the pre-activation sign, with 0 at the kink.
    #[inline]
    fn grad_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Output link and loss: softmax + cross-entropy, sigmoid + binary
/// cross-entropy, or identity (raw scores, not trainable here).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputLink {
    Identity,
    Sigmoid,
    Softmax(usize),
}

/// How raw feature vectors become network inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum InputEncoding {
    /// Per-feature standardization `(x - mean) / std`, fitted on training
    /// data. Identity when mean 0 / std 1.
    Raw { mean: Vec<f64>, std: Vec<f64> },
    /// Quantile binning followed by one-hot encoding.
    QuantizedOneHot(BinningSpec),
}

impl InputEncoding {
    pub fn raw_identity(num_features: usize) -> Self {
        InputEncoding::Raw {
            mean: vec![0.0; num_features],
            std: vec![1.0; num_features],
        }
    }

    /// Number of raw features expected from the caller.
    pub fn num_features(&self) -> usize {
        match self {
            InputEncoding::Raw { mean, .. } => mean.len(),
            InputEncoding::QuantizedOneHot(spec) => spec.num_features(),
        }
    }

    /// Width of the encoded vector the first layer consumes.
    pub fn encoded_width(&self) -> usize {
        match self {
            InputEncoding::Raw { mean, .. } => mean.len(),
            InputEncoding::QuantizedOneHot(spec) => spec.total_onehot_width(),
        }
    }

    fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            InputEncoding::Raw { mean, std } => {
                for (i, &v) in x.iter().enumerate() {
                    out[i] = (v - mean[i]) / std[i];
                }
            }
            InputEncoding::QuantizedOneHot(spec) => spec.encode_into(x, out),
        }
    }
}

/// One dense layer. Weights are row-major with shape
/// (in_dim, out_dim), so row `i` holds the fan-out of input `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// `out = bias + x W`, skipping zero input entries.
    fn affine_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.out_dim..(i + 1) * self.out_dim];
            if xi == 1.0 {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += w;
                }
            } else {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += xi * w;
                }
            }
        }
    }
}

/// A feed-forward network: input encoding, dense layers, output link.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub encoding: InputEncoding,
    pub layers: Vec<DenseLayer>,
    pub output_link: OutputLink,
    pub rng_seed: u64,
}

/// Architecture description handed to [`init_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub encoding: InputEncoding,
    pub hidden_units: Option<usize>,
    pub hidden_activation: Activation,
    pub output_link: OutputLink,
}

impl ArchConfig {
    /// Quantized one-hot input, one hidden layer.
    pub fn hammock(spec: BinningSpec, hidden_units: usize, output_link: OutputLink) -> Self {
        ArchConfig {
            encoding: InputEncoding::QuantizedOneHot(spec),
            hidden_units: Some(hidden_units),
            hidden_activation: Activation::Relu,
            output_link,
        }
    }

    /// Raw input, no hidden layer: a linear (logistic-regression) model.
    pub fn lr_nn(mean: Vec<f64>, std: Vec<f64>, output_link: OutputLink) -> Self {
        ArchConfig {
            encoding: InputEncoding::Raw { mean, std },
            hidden_units: None,
            hidden_activation: Activation::Relu,
            output_link,
        }
    }

    /// Raw input, one hidden layer.
    pub fn nn_1l(
        mean: Vec<f64>,
        std: Vec<f64>,
        hidden_units: usize,
        output_link: OutputLink,
    ) -> Self {
        ArchConfig {
            encoding: InputEncoding::Raw { mean, std },
            hidden_units: Some(hidden_units),
            hidden_activation: Activation::Relu,
            output_link,
        }
    }

    fn output_dim(&self) -> usize {
        match self.output_link {
            OutputLink::Sigmoid => 1,
            OutputLink::Softmax(k) => k,
            OutputLink::Identity => 1,
        }
    }
}

/// Initialize a model: weights uniform in
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases zero,
/// drawn layer by layer in row-major order from a seeded stream.
pub fn init_model(config: &ArchConfig, seed: u64) -> Result<MlpModel, NnError> {
    let mut dims = vec![config.encoding.encoded_width()];
    if let Some(h) = config.hidden_units {
        if h == 0 {
            return Err(NnError::InvalidConfig("hidden_units must be >= 1".into()));
        }
        dims.push(h);
    }
    dims.push(config.output_dim());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (l, pair) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let is_output = l == dims.len() - 2;
        let mut layer = DenseLayer::zeros(
            fan_in,
            fan_out,
            if is_output {
                Activation::Identity
            } else {
                config.hidden_activation
            },
        );
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-limit..limit);
        }
        layers.push(layer);
    }
    MlpModel::new(config.encoding.clone(), layers, config.output_link, seed)
}

impl MlpModel {
    pub fn new(
        encoding: InputEncoding,
        layers: Vec<DenseLayer>,
        output_link: OutputLink,
        rng_seed: u64,
    ) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidConfig(
                "model needs at least one layer".into(),
            ));
        }
        let mut expected = encoding.encoded_width();
        for layer in &layers {
            if layer.in_dim != expected {
                return Err(NnError::DimensionMismatch {
                    expected,
                    got: layer.in_dim,
                });
            }
            if layer.weights.len() != layer.in_dim * layer.out_dim
                || layer.bias.len() != layer.out_dim
            {
                return Err(NnError::InvalidConfig(
                    "layer buffer sizes do not match dims".into(),
                ));
            }
            expected = layer.out_dim;
        }
        let out_dim = layers.last().unwrap().out_dim;
        match output_link {
            OutputLink::Sigmoid if out_dim != 1 => {
                return Err(NnError::InvalidConfig(
                    "sigmoid link requires one output".into(),
                ));
            }
            OutputLink::Softmax(k) if k < 2 || k != out_dim => {
                return Err(NnError::InvalidConfig(
                    "softmax link requires k >= 2 matching outputs".into(),
                ));
            }
            _ => {}
        }
        Ok(MlpModel {
            encoding,
            layers,
            output_link,
            rng_seed,
        })
    }

    pub fn num_outputs(&self) -> usize {
        self.layers.last().expect("validated non-empty").out_dim
    }

    /// Number of classes the model distinguishes (2 for sigmoid).
    pub fn num_classes(&self) -> usize {
        match self.output_link {
            OutputLink::Sigmoid => 2,
            OutputLink::Softmax(k) => k,
            OutputLink::Identity => self.num_outputs(),
        }
    }

    pub fn scratch(&self) -> ForwardCache {
        ForwardCache::for_model(self)
    }

    pub fn gradients(&self) -> Gradients {
        Gradients::for_model(self)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        let expected = self.encoding.num_features();
        if x.len() != expected {
            return Err(NnError::DimensionMismatch {
                expected,
                got: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteInput { index });
        }
        Ok(())
    }

    /// Inference forward pass: no dropout. Returns the logits slice held
    /// in `cache`.
    pub fn forward_infer<'c>(
        &self,
        x: &[f64],
        cache: &'c mut ForwardCache,
    ) -> Result<&'c [f64], NnError> {
        self.forward_inner(x, 0.0, None::<&mut ChaCha8Rng>, cache)
    }

    /// Training forward pass with inverted dropout on hidden-layer
    /// outputs: units drop with probability `dropout_rate`, kept units
    /// scale by `1/(1 - dropout_rate)`, masks drawn from `mask_rng`.
    pub fn forward_train<'c, R: Rng>(
        &self,
        x: &[f64],
        dropout_rate: f64,
        mask_rng: &mut R,
        cache: &'c mut ForwardCache,
    ) -> Result<&'c [f64], NnError> {
        self.forward_inner(x, dropout_rate, Some(mask_rng), cache)
    }

    fn forward_inner<'c, R: Rng>(
        &self,
        x: &[f64],
        dropout_rate: f64,
        mut mask_rng: Option<&mut R>,
        cache: &'c mut ForwardCache,
    ) -> Result<&'c [f64], NnError> {
        self.check_input(x)?;
        let ForwardCache {
            x_enc,
            acts,
            mask_scales,
            ..
        } = cache;
        self.encoding.encode_into(x, x_enc);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = acts.split_at_mut(l);
            let input: &[f64] = if l == 0 { x_enc } else { &head[l - 1] };
            let out = &mut tail[0];
            layer.affine_into(input, out);
            if layer.activation != Activation::Identity {
                for v in out.iter_mut() {
                    *v = layer.activation.apply(*v);
                }
            }
            if l < last && dropout_rate > 0.0 {
                let rng = mask_rng
                    .as_deref_mut()
                    .expect("train mode supplies a mask source");
                let keep_scale = 1.0 / (1.0 - dropout_rate);
                for (v, s) in out.iter_mut().zip(&mut mask_scales[l]) {
                    *s = if rng.random::<f64>() < dropout_rate {
                        0.0
                    } else {
                        keep_scale
                    };
                    *v *= *s;
                }
            }
        }
        let logits = &cache.acts[last];
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NumericOverflow);
        }
        Ok(logits)
    }

    /// Predicted class from logits: argmax for softmax (ties toward the
    /// lowest index), `logit > 0` for sigmoid.
    pub fn predict_class(&self, logits: &[f64]) -> Result<usize, NnError> {
        match self.output_link {
            OutputLink::Softmax(_) => {
                let mut best = 0;
                for (c, &z) in logits.iter().enumerate() {
                    if z > logits[best] {
                        best = c;
                    }
                }
                Ok(best)
            }
            OutputLink::Sigmoid => Ok(usize::from(logits[0] > 0.0)),
            OutputLink::Identity => Err(NnError::UnsupportedLink),
        }
    }
}

/// Class probabilities under a link: softmax simplex, `[p]` for sigmoid,
/// raw scores for identity.
pub fn output_probabilities(link: OutputLink, logits: &[f64]) -> Vec<f64> {
    match link {
        OutputLink::Identity => logits.to_vec(),
        OutputLink::Sigmoid => vec![sigmoid(logits[0])],
        OutputLink::Softmax(_) => {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut probs: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
            let sum: f64 = probs.iter().sum();
            for p in &mut probs {
                *p /= sum;
            }
            probs
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Cross-entropy of one sample, computed from logits in stable form.
fn sample_loss(link: OutputLink, logits: &[f64], label: usize) -> Result<f64, NnError> {
    match link {
        OutputLink::Softmax(k) => {
            if label >= k {
                return Err(NnError::InvalidLabel {
                    label,
                    num_classes: k,
                });
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum: f64 = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            Ok(-(logits[label] - max - log_sum))
        }
        OutputLink::Sigmoid => {
            if label > 1 {
                return Err(NnError::InvalidLabel {
                    label,
                    num_classes: 2,
                });
            }
            let z = logits[0];
            let y = label as f64;
            Ok(z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
        }
        OutputLink::Identity => Err(NnError::UnsupportedLink),
    }
}

/// d(loss)/d(logits) for one sample, written into `dlogits` scaled by
/// `scale` (the 1/batch factor).
fn sample_dlogits(link: OutputLink, logits: &[f64], label: usize, scale: f64, dlogits: &mut [f64]) {
    match link {
        OutputLink::Softmax(_) => {
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
            for (d, &z) in dlogits.iter_mut().zip(logits) {
                *d = (z - max).exp() / sum * scale;
            }
            dlogits[label] -= scale;
        }
        OutputLink::Sigmoid => {
            dlogits[0] = (sigmoid(logits[0]) - label as f64) * scale;
        }
        OutputLink::Identity => unreachable!("loss rejects identity links"),
    }
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn for_model(model: &MlpModel) -> Self {
        Gradients {
            weights: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            bias: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.bias.len()])
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for w in &mut self.weights {
            w.fill(0.0);
        }
        for b in &mut self.bias {
            b.fill(0.0);
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Reusable per-sample buffers for forward and backward passes.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x_enc: Vec<f64>,
    /// Post-activation (and post-dropout) output per layer.
    acts: Vec<Vec<f64>>,
    /// Dropout scale per hidden layer (0 or 1/(1-p)); valid when the
    /// last forward pass ran with dropout.
    mask_scales: Vec<Vec<f64>>,
    /// Backprop buffers, one per layer output.
    d_bufs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn for_model(model: &MlpModel) -> Self {
        ForwardCache {
            x_enc: vec![0.0; model.encoding.encoded_width()],
            acts: model.layers.iter().map(|l| vec![0.0; l.out_dim]).collect(),
            mask_scales: model.layers[..model.layers.len() - 1]
                .iter()
                .map(|l| vec![0.0; l.out_dim])
                .collect(),
            d_bufs: model.layers.iter().map(|l| vec![0.0; l.out_dim]).collect(),
        }
    }

    pub fn logits(&self) -> &[f64] {
        self.acts
            .last()
            .expect("cache built from a validated model")
    }
}

/// Accumulate one sample's contribution to the batch gradient. The
/// forward pass must already be in `cache`. `scale` is 1/batch_size;
/// `dropout_active` tells backprop whether mask scales apply.
fn backward_sample(
    model: &MlpModel,
    label: usize,
    dropout_active: bool,
    scale: f64,
    cache: &mut ForwardCache,
    grads: &mut Gradients,
) {
    let last = model.layers.len() - 1;
    {
        let logits = &cache.acts[last];
        let dlogits = &mut cache.d_bufs[last];
        sample_dlogits(model.output_link, logits, label, scale, dlogits);
    }
    for l in (0..=last).rev() {
        let layer = &model.layers[l];
        // Fold activation and dropout factors into d_bufs[l] so it holds
        // dL/dz for this layer.
        if layer.activation != Activation::Identity || (dropout_active && l < last) {
            for j in 0..layer.out_dim {
                let mut d = cache.d_bufs[l][j];
                if dropout_active && l < last {
                    d *= cache.mask_scales[l][j];
                }
                d *= layer.activation.grad_from_output(cache.acts[l][j]);
                cache.d_bufs[l][j] = d;
            }
        }
        let input: &[f64] = if l == 0 {
            &cache.x_enc
        } else {
            &cache.acts[l - 1]
        };
        let dz = &cache.d_bufs[l];
        for (gb, d) in grads.bias[l].iter_mut().zip(dz) {
            *gb += d;
        }
        let gw = &mut grads.weights[l];
        for (i, &xi) in input.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &mut gw[i * layer.out_dim..(i + 1) * layer.out_dim];
            if xi == 1.0 {
                for (g, d) in row.iter_mut().zip(dz) {
                    *g += d;
                }
            } else {
                for (g, d) in row.iter_mut().zip(dz) {
                    *g += xi * d;
                }
            }
        }
        if l > 0 {
            // d_prev[i] = W_l[i, :] . dz
            let (head, tail) = cache.d_bufs.split_at_mut(l);
            let d_prev = &mut head[l - 1];
            let dz = &tail[0];
            for (i, dp) in d_prev.iter_mut().enumerate() {
                let row = &layer.weights[i * layer.out_dim..(i + 1) * layer.out_dim];
                *dp = row.iter().zip(dz).map(|(w, d)| w * d).sum();
            }
        }
    }
}

/// Mean cross-entropy and parameter gradients over a batch of rows, plus
/// l1/l2 penalties on weight matrices (never biases). Dropout masks for
/// sample `rows[s]` come from a stream derived from
/// `(mask_seed, epoch, rows[s])`, so results do not depend on batch
/// composition order beyond float summation.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad(
    model: &MlpModel,
    data: &DataView<'_>,
    rows: &[usize],
    dropout_rate: f64,
    l1_weight: f64,
    l2_weight: f64,
    mask_seed: u64,
    epoch: u64,
    cache: &mut ForwardCache,
    grads: &mut Gradients,
) -> Result<f64, NnError> {
    grads.zero();
    let data_loss = accumulate_rows(
        model,
        data,
        rows,
        dropout_rate,
        mask_seed,
        epoch,
        cache,
        grads,
    )?;
    finish_batch_loss(model, rows.len(), data_loss, l1_weight, l2_weight, grads)
}

/// Per-chunk worker: accumulates summed CE loss and 1/B-scaled gradients
/// for `rows` into `grads` without zeroing it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_rows(
    model: &MlpModel,
    data: &DataView<'_>,
    rows: &[usize],
    dropout_rate: f64,
    mask_seed: u64,
    epoch: u64,
    cache: &mut ForwardCache,
    grads: &mut Gradients,
) -> Result<f64, NnError> {
    let scale = 1.0 / rows.len() as f64;
    let mut loss_sum = 0.0;
    for &row in rows {
        let x = data.row(row);
        let label = data.labels[row];
        if dropout_rate > 0.0 {
            let mut rng = mask_stream(mask_seed, epoch, row as u64);
            model.forward_train(x, dropout_rate, &mut rng, cache)?;
        } else {
            model.forward_infer(x, cache)?;
        }
        loss_sum += sample_loss(model.output_link, cache.logits(), label)?;
        backward_sample(model, label, dropout_rate > 0.0, scale, cache, grads);
    }
    Ok(loss_sum)
}

/// Add regularization terms to the summed data loss and the gradients.
pub(crate) fn finish_batch_loss(
    model: &MlpModel,
    batch_len: usize,
    data_loss_sum: f64,
    l1_weight: f64,
    l2_weight: f64,
    grads: &mut Gradients,
) -> Result<f64, NnError> {
    let mut loss = data_loss_sum / batch_len as f64;
    if l1_weight != 0.0 || l2_weight != 0.0 {
        for (layer, gw) in model.layers.iter().zip(&mut grads.weights) {
            for (w, g) in layer.weights.iter().zip(gw.iter_mut()) {
                loss += l1_weight * w.abs() + l2_weight * w * w;
                // Subgradient 0 at w == 0 for the l1 term.
                let sign = if *w > 0.0 {
                    1.0
                } else if *w < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *g += l1_weight * sign + 2.0 * l2_weight * w;
            }
        }
    }
    if !loss.is_finite() {
        return Err(NnError::NumericOverflow);
    }
    Ok(loss)
}

/// Dropout mask stream for one (epoch, row) pair; independent of batch
/// order and thread layout.
pub(crate) fn mask_stream(mask_seed: u64, epoch: u64, row: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&mask_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&epoch.to_le_bytes());
    seed[16..24].copy_from_slice(&row.to_le_bytes());
    seed[24..32].copy_from_slice(&0x6b73616d_u64.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

pub(crate) fn reduce_chunks(out: &mut Gradients, chunks: &[Gradients]) {
    for chunk in chunks {
        out.add_assign(chunk);
    }
}

/// Borrowed dense dataset: row-major features plus integer labels.
#[derive(Debug, Clone, Copy)]
pub struct DataView<'a> {
    pub features: &'a [f64],
    pub num_features: usize,
    pub labels: &'a [usize],
}

impl<'a> DataView<'a> {
    pub fn new(features: &'a [f64], num_features: usize, labels: &'a [usize]) -> Self {
        assert_eq!(
            features.len(),
            num_features * labels.len(),
            "row count mismatch"
        );
        DataView {
            features,
            num_features,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, r: usize) -> &'a [f64] {
        &self.features[r * self.num_features..(r + 1) * self.num_features]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::fit_binning;

    fn small_hammock() -> MlpModel {
        // Widths (3, 2): feature 0 has boundaries [1, 2], feature 1 has [10].
        let spec = crate::binning::BinningSpec::new(vec![vec![1.0, 2.0], vec![10.0]], 3).unwrap();
        init_model(&ArchConfig::hammock(spec, 4, OutputLink::Softmax(3)), 7).unwrap()
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = crate::binning::BinningSpec::new(vec![vec![0.5]], 2).unwrap();
        let cfg = ArchConfig::hammock(spec, 8, OutputLink::Softmax(2));
        let a = init_model(&cfg, 3).unwrap();
        let b = init_model(&cfg, 3).unwrap();
        let c = init_model(&cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn lr_nn_is_a_single_layer() {
        let cfg = ArchConfig::lr_nn(vec![0.0; 5], vec![1.0; 5], OutputLink::Softmax(3));
        let model = init_model(&cfg, 0).unwrap();
        assert_eq!(model.layers.len(), 1);
        assert_eq!(model.layers[0].in_dim, 5);
        assert_eq!(model.layers[0].out_dim, 3);
    }

    #[test]
    fn hidden_layer_shapes_follow_onehot_width() {
        let rows: Vec<f64> = (0..400)
            .flat_map(|i| vec![i as f64, (i % 31) as f64])
            .collect();
        let spec = fit_binning(&rows, 2, 50).unwrap();
        let width = spec.total_onehot_width();
        let model =
            init_model(&ArchConfig::hammock(spec, 1000, OutputLink::Softmax(4)), 1).unwrap();
        assert_eq!(model.layers[0].in_dim, width);
        assert_eq!(model.layers[0].weights.len(), width * 1000);
        assert_eq!(model.layers[1].in_dim, 1000);
    }

    #[test]
    fn init_limits_follow_fan_sizes() {
        let model = small_hammock();
        for layer in &model.layers {
            let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= limit));
            assert!(layer.bias.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn forward_consumes_one_hot_blocks() {
        // q = (0, 0) encodes as [1,0,0,1,0]; with identity weights rigged
        // so the logits reveal the active inputs.
        let spec = crate::binning::BinningSpec::new(vec![vec![1.0, 2.0], vec![10.0]], 3).unwrap();
        let mut layer = DenseLayer::zeros(5, 5, Activation::Identity);
        for i in 0..5 {
            layer.weights[i * 5 + i] = 1.0;
        }
        let model = MlpModel::new(
            InputEncoding::QuantizedOneHot(spec),
            vec![layer],
            OutputLink::Identity,
            0,
        )
        .unwrap();
        let mut cache = model.scratch();
        let logits = model.forward_infer(&[0.5, 3.0], &mut cache).unwrap();
        assert_eq!(logits, &[1.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_weights_softmax_is_uniform() {
        let model = MlpModel::new(
            InputEncoding::raw_identity(4),
            vec![DenseLayer::zeros(4, 3, Activation::Identity)],
            OutputLink::Softmax(3),
            0,
        )
        .unwrap();
        let mut cache = model.scratch();
        let logits = model
            .forward_infer(&[0.3, -1.0, 2.0, 0.0], &mut cache)
            .unwrap();
        let probs = output_probabilities(model.output_link, logits);
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dropout_zero_matches_infer_exactly() {
        let model = small_hammock();
        let mut cache = model.scratch();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = [1.5, 20.0];
        let train = model
            .forward_train(&x, 0.0, &mut rng, &mut cache)
            .unwrap()
            .to_vec();
        let infer = model.forward_infer(&x, &mut cache).unwrap().to_vec();
        assert_eq!(train, infer);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let model = small_hammock();
        let mut cache = model.scratch();
        assert!(matches!(
            model.forward_infer(&[1.0], &mut cache),
            Err(NnError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(matches!(
            model.forward_infer(&[1.0, f64::NAN], &mut cache),
            Err(NnError::NonFiniteInput { index: 1 })
        ));
    }

    #[test]
    fn uniform_softmax_loss_is_ln_k() {
        for k in [2usize, 3, 7] {
            let logits = vec![0.0; k];
            let loss = sample_loss(OutputLink::Softmax(k), &logits, k - 1).unwrap();
            assert!((loss - (k as f64).ln()).abs() < 1e-12);
        }
        assert!((sample_loss(OutputLink::Sigmoid, &[0.0], 1).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_labels_rejected() {
        assert!(matches!(
            sample_loss(OutputLink::Softmax(3), &[0.0; 3], 3),
            Err(NnError::InvalidLabel {
                label: 3,
                num_classes: 3
            })
        ));
        assert!(matches!(
            sample_loss(OutputLink::Sigmoid, &[0.0], 2),
            Err(NnError::InvalidLabel { .. })
        ));
    }

    #[test]
    fn softmax_probabilities_form_a_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let logits: Vec<f64> = (0..6).map(|_| rng.random_range(-30.0..30.0)).collect();
            let probs = output_probabilities(OutputLink::Softmax(6), &logits);
            assert!(probs.iter().all(|p| *p >= 0.0));
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn numeric_gradient(
        model: &mut MlpModel,
        data: &DataView<'_>,
        rows: &[usize],
        l1: f64,
        l2: f64,
    ) -> Gradients {
        // Central differences with step 1e-5 on every parameter.
        let mut cache = model.scratch();
        let mut scratch_grads = model.gradients();
        let mut numeric = model.gradients();
        let h = 1e-5;
        let eval = |model: &MlpModel, cache: &mut ForwardCache, g: &mut Gradients| {
            loss_and_grad(model, data, rows, 0.0, l1, l2, 0, 0, cache, g).unwrap()
        };
        for l in 0..model.layers.len() {
            for i in 0..model.layers[l].weights.len() {
                let orig = model.layers[l].weights[i];
                model.layers[l].weights[i] = orig + h;
                let up = eval(model, &mut cache, &mut scratch_grads);
                model.layers[l].weights[i] = orig - h;
                let down = eval(model, &mut cache, &mut scratch_grads);
                model.layers[l].weights[i] = orig;
                numeric.weights[l][i] = (up - down) / (2.0 * h);
            }
            for i in 0..model.layers[l].bias.len() {
                let orig = model.layers[l].bias[i];
                model.layers[l].bias[i] = orig + h;
                let up = eval(model, &mut cache, &mut scratch_grads);
                model.layers[l].bias[i] = orig - h;
                let down = eval(model, &mut cache, &mut scratch_grads);
                model.layers[l].bias[i] = orig;
                numeric.bias[l][i] = (up - down) / (2.0 * h);
            }
        }
        numeric
    }

    pub(crate) fn max_relative_error(analytic: &Gradients, numeric: &Gradients) -> f64 {
        let mut max_err = 0.0f64;
        let pairs = analytic
            .weights
            .iter()
            .zip(&numeric.weights)
            .chain(analytic.bias.iter().zip(&numeric.bias));
        for (a, n) in pairs {
            for (&ga, &gn) in a.iter().zip(n) {
                let denom = ga.abs().max(gn.abs());
                if denom > 1e-10 {
                    max_err = max_err.max((ga - gn).abs() / denom);
                }
            }
        }
        max_err
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        // 5-input, 4-hidden, 3-class raw model, dropout off.
        let cfg = ArchConfig::nn_1l(vec![0.0; 5], vec![1.0; 5], 4, OutputLink::Softmax(3));
        let mut model = init_model(&cfg, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let features: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..3)).collect();
        let data = DataView::new(&features, 5, &labels);
        let rows: Vec<usize> = (0..6).collect();

        let mut cache = model.scratch();
        let mut analytic = model.gradients();
        loss_and_grad(
            &model,
            &data,
            &rows,
            0.0,
            0.0,
            0.0,
            0,
            0,
            &mut cache,
            &mut analytic,
        )
        .unwrap();
        let numeric = numeric_gradient(&mut model, &data, &rows, 0.0, 0.0);
        assert!(max_relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn gradients_match_with_regularization_and_sigmoid() {
        let cfg = ArchConfig::nn_1l(vec![0.0; 3], vec![1.0; 3], 4, OutputLink::Sigmoid);
        let mut model = init_model(&cfg, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let features: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = vec![0usize, 1, 1, 0];
        let data = DataView::new(&features, 3, &labels);
        let rows: Vec<usize> = (0..4).collect();

        let mut cache = model.scratch();
        let mut analytic = model.gradients();
        loss_and_grad(
            &model,
            &data,
            &rows,
            0.0,
            0.01,
            0.003,
            0,
            0,
            &mut cache,
            &mut analytic,
        )
        .unwrap();
        let numeric = numeric_gradient(&mut model, &data, &rows, 0.01, 0.003);
        assert!(max_relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn l1_adds_sign_times_weight_to_gradient() {
        let mut layer = DenseLayer::zeros(1, 2, Activation::Identity);
        layer.weights = vec![0.7, -0.3];
        let model = MlpModel::new(
            InputEncoding::raw_identity(1),
            vec![layer],
            OutputLink::Softmax(2),
            0,
        )
        .unwrap();
        let features = vec![0.0]; // zero input: data gradient vanishes
        let labels = vec![0usize];
        let data = DataView::new(&features, 1, &labels);
        let mut cache = model.scratch();
        let mut grads = model.gradients();
        let l1 = 0.05;
        loss_and_grad(
            &model,
            &data,
            &[0],
            0.0,
            l1,
            0.0,
            0,
            0,
            &mut cache,
            &mut grads,
        )
        .unwrap();
        assert_eq!(grads.weights[0][0], l1);
        assert_eq!(grads.weights[0][1], -l1);
    }

    #[test]
    fn dropout_expectation_converges_to_infer_output() {
        // With inverted dropout, averaging train-mode logits over many
        // masks approaches the inference logits.
        let cfg = ArchConfig::nn_1l(vec![0.0; 4], vec![1.0; 4], 24, OutputLink::Softmax(3));
        let mut model = init_model(&cfg, 21).unwrap();
        // Shift hidden biases up so relu units are mostly active and the
        // logits are well away from zero.
        for b in &mut model.layers[0].bias {
            *b = 0.5;
        }
        let x = [0.8, -0.4, 1.2, 0.3];
        let mut cache = model.scratch();
        let infer = model.forward_infer(&x, &mut cache).unwrap().to_vec();

        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let masks = 10_000;
        let mut mean = vec![0.0; infer.len()];
        for _ in 0..masks {
            let logits = model.forward_train(&x, 0.5, &mut rng, &mut cache).unwrap();
            for (m, z) in mean.iter_mut().zip(logits) {
                *m += z;
            }
        }
        for m in &mut mean {
            *m /= masks as f64;
        }
        for (m, z) in mean.iter().zip(&infer) {
            assert!(
                (m - z).abs() / z.abs().max(1e-6) < 0.02,
                "mask average {m} vs infer {z}"
            );
        }
    }

    #[test]
    fn predict_class_breaks_ties_low() {
        let model = MlpModel::new(
            InputEncoding::raw_identity(1),
            vec![DenseLayer::zeros(1, 3, Activation::Identity)],
            OutputLink::Softmax(3),
            0,
        )
        .unwrap();
        assert_eq!(model.predict_class(&[0.2, 0.7, 0.7]).unwrap(), 1);
        assert_eq!(model.predict_class(&[0.0, 0.0, 0.0]).unwrap(), 0);
    }
}
