//! Causal concept effect estimation when only some concepts are annotated.
//!
//! The crate explains a black-box model's outputs in terms of
//! human-interpretable concepts. Unannotated concepts are compensated for by
//! pseudo-concepts: embedding directions orthogonal to the observed concept
//! design, fed to a linear predictor next to the observed concepts.
//!
//! * [`linalg`]: min-norm least squares, residualization, truncated SVD.
//! * [`concepts`]: schema, one-hot encoding, interventions, datasets and
//!   their file formats.
//! * [`explainers`]: the missingness-aware explainer, the S-Learner and
//!   approximate-counterfactual baselines, global coefficient reports.
//! * [`evaluation`]: per-pair effects, distances, grouped errors, macro-F1.
//! * [`synthetic`]: generator with exact ground-truth effects.

pub mod concepts;
pub mod error;
pub mod evaluation;
pub mod explainers;
pub mod linalg;
pub mod synthetic;

pub use error::{Error, Result};
