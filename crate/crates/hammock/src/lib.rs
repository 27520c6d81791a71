//! Gradient-boosted tree ensembles, their exact step-network equivalents,
//! and a trainable relaxation.
//!
//! The library has two halves:
//!
//! - **Compilation**: a parsed [`trees::TreeEnsemble`] converts into a
//!   [`netconvert::StepNetwork`] — a single-hidden-layer network with an
//!   indicator input transform, binary first-layer weights, step
//!   activations, and leaf values as output weights — that reproduces the
//!   ensemble's raw scores exactly.
//! - **Training**: [`nn`] trains the relaxed form ("Hammock"): feature
//!   values are quantile-binned, one-hot encoded, and fed to a two-layer
//!   fully connected network, optimized with AdaDelta and dropout.
//!   The raw-input baselines (a linear model and a one-hidden-layer MLP)
//!   share the same trainer.
//!
//! [`dataio`] loads CSV datasets, [`model_file`] persists models with
//! bit-exact reload, and [`cli`] wires everything into the `hammock`
//! binary.

pub mod binning;
pub mod cli;
pub mod dataio;
pub mod model_file;
pub mod netconvert;
pub mod nn;
pub mod trees;
