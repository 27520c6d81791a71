//! AdaDelta: per-parameter adaptive steps from exponentially decayed
//! accumulators of squared gradients and squared updates.

use super::{Gradients, MlpModel, NnError};

/// Optimizer accumulators, one pair of tensors per parameter tensor in
/// the order (layer 0 weights, layer 0 bias, layer 1 weights, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaDeltaState {
    pub avg_sq_grad: Vec<Vec<f64>>,
    pub avg_sq_update: Vec<Vec<f64>>,
}

impl AdaDeltaState {
    pub fn for_model(model: &MlpModel) -> Self {
        let shapes: Vec<usize> = model
            .layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        AdaDeltaState {
            avg_sq_grad: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            avg_sq_update: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One update on a single parameter tensor:
///
/// ```text
/// Eg2   <- rho * Eg2 + (1 - rho) * g^2
/// delta  = -(sqrt(Edx2 + eps) / sqrt(Eg2 + eps)) * g
/// Edx2  <- rho * Edx2 + (1 - rho) * delta^2
/// param += delta
/// ```
pub fn adadelta_step(
    param: &mut [f64],
    grad: &[f64],
    avg_sq_grad: &mut [f64],
    avg_sq_update: &mut [f64],
    rho: f64,
    eps: f64,
) -> Result<(), NnError> {
    let n = param.len();
    if grad.len() != n || avg_sq_grad.len() != n || avg_sq_update.len() != n {
        return Err(NnError::DimensionMismatch {
            expected: n,
            got: grad.len(),
        });
    }
    for i in 0..n {
        let g = grad[i];
        avg_sq_grad[i] = rho * avg_sq_grad[i] + (1.0 - rho) * g * g;
        let delta = -((avg_sq_update[i] + eps).sqrt() / (avg_sq_grad[i] + eps).sqrt()) * g;
        avg_sq_update[i] = rho * avg_sq_update[i] + (1.0 - rho) * delta * delta;
        param[i] += delta;
    }
    Ok(())
}

/// Update every parameter tensor of a model from its gradients.
pub(crate) fn adadelta_step_model(
    model: &mut MlpModel,
    grads: &Gradients,
    state: &mut AdaDeltaState,
    rho: f64,
    eps: f64,
) -> Result<(), NnError> {
    for (l, layer) in model.layers.iter_mut().enumerate() {
        adadelta_step(
            &mut layer.weights,
            &grads.weights[l],
            &mut state.avg_sq_grad[2 * l],
            &mut state.avg_sq_update[2 * l],
            rho,
            eps,
        )?;
        adadelta_step(
            &mut layer.bias,
            &grads.bias[l],
            &mut state.avg_sq_grad[2 * l + 1],
            &mut state.avg_sq_update[2 * l + 1],
            rho,
            eps,
        )?;
    }
    Ok(())
}
