//! Concept-effect explainers.
//!
//! Each explainer answers "what happens to the black-box output of this
//! sample if one visible concept is switched to another level", returning an
//! [`EffectEstimate`] tagged with the output space it lives in.

mod approx;
mod mcce;
mod report;
mod slearner;

use serde::{Deserialize, Serialize};

pub use approx::{explain_approx, pair_seed, ApproxIndex};
pub use mcce::{fit_mcce, fit_mcce_matrices, predict_labels, FitDiagnostics, MccCoefficients, MccModel};
pub use report::{global_report, CoefficientReport, CoefficientRow};
pub use slearner::{fit_slearner, SLearnerModel, SLearnerOptions};

use crate::concepts::OutputSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mcce,
    Slearner,
    Approx,
    /// Passthrough of the synthetic generator's exact effects.
    Oracle,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mcce => "mcce",
            Method::Slearner => "slearner",
            Method::Approx => "approx",
            Method::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "mcce" => Ok(Method::Mcce),
            "slearner" => Ok(Method::Slearner),
            "approx" => Ok(Method::Approx),
            "oracle" => Ok(Method::Oracle),
            other => Err(crate::Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub sample_id: String,
    pub attribute: String,
    #[serde(rename = "from")]
    pub from_level: String,
    #[serde(rename = "to")]
    pub to_level: String,
    pub effect: Vec<f64>,
    pub method: Method,
    pub space: OutputSpace,
    /// Set by the approximate explainer when no exact label match existed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}
