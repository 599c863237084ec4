//! S-Learner baseline: multinomial logistic regression on the observed
//! concepts, trained on soft labels by full-batch gradient descent.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EffectEstimate, Method};
use crate::concepts::{softmax, ConceptSchema, Dataset, OutputSpace, Sample};
use crate::error::{Error, Result};
use crate::linalg::{rows_serde, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SLearnerOptions {
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Stop once the largest absolute gradient entry drops below this.
    pub gradient_tol: f64,
}

impl Default for SLearnerOptions {
    fn default() -> Self {
        SLearnerOptions {
            learning_rate: 0.1,
            max_iterations: 5000,
            gradient_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SLearnerModel {
    pub schema: ConceptSchema,
    pub hidden: BTreeSet<String>,
    #[serde(with = "rows_serde")]
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub final_loss: f64,
    pub converged: bool,
}

const SIMPLEX_TOL: f64 = 1e-6;

/// Fits `softmax(c W + b)` to the rows of `targets`, which must be
/// probability distributions.
pub fn fit_slearner(dataset: &Dataset, targets: &Matrix, options: SLearnerOptions) -> Result<SLearnerModel> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot fit on an empty dataset".into()));
    }
    if targets.nrows() != n {
        return Err(Error::dims(
            "fit_slearner",
            format!("{n} samples but {} target rows", targets.nrows()),
        ));
    }
    for (i, row) in targets.row_iter().enumerate() {
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|&v| v < -SIMPLEX_TOL || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "target row {i} is not a probability distribution"
            )));
        }
    }
    let q = targets.ncols();

    // Identical design rows contribute identically to loss and gradient, so
    // the descent runs over distinct concept configurations with summed
    // targets.
    let mut groups: BTreeMap<Vec<u64>, (Vec<f64>, f64, Vec<f64>)> = BTreeMap::new();
    for (i, s) in dataset.samples().iter().enumerate() {
        let x = dataset.encode_sample(s)?;
        let key = x.iter().map(|v| v.to_bits()).collect();
        let entry = groups.entry(key).or_insert_with(|| (x, 0.0, vec![0.0; q]));
        entry.1 += 1.0;
        for (acc, t) in entry.2.iter_mut().zip(targets.row(i).iter()) {
            *acc += t;
        }
    }
    let groups: Vec<_> = groups.into_values().collect();
    let k = dataset.visible_width();
    let inv_n = 1.0 / n as f64;

    let mut weights = Matrix::zeros(k, q);
    let mut bias = vec![0.0; q];
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_w = Matrix::zeros(k, q);
    let mut grad_b = vec![0.0; q];
    loop {
        grad_w.fill(0.0);
        grad_b.iter_mut().for_each(|g| *g = 0.0);
        for (x, count, target_sum) in &groups {
            let probs = softmax(&logits(&weights, &bias, x));
            for c in 0..q {
                let r = (count * probs[c] - target_sum[c]) * inv_n;
                grad_b[c] += r;
                for (f, &xv) in x.iter().enumerate() {
                    if xv != 0.0 {
                        grad_w[(f, c)] += xv * r;
                    }
                }
            }
        }
        let gmax = grad_w.amax().max(grad_b.iter().fold(0.0_f64, |m, g| m.max(g.abs())));
        if !gmax.is_finite() {
            return Err(Error::Numerical("S-Learner gradient diverged".into()));
        }
        if gmax < options.gradient_tol {
            converged = true;
            break;
        }
        if iterations == options.max_iterations {
            break;
        }
        weights -= &grad_w * options.learning_rate;
        for (b, g) in bias.iter_mut().zip(&grad_b) {
            *b -= options.learning_rate * g;
        }
        iterations += 1;
    }

    let final_loss = groups
        .iter()
        .map(|(x, _, target_sum)| {
            let probs = softmax(&logits(&weights, &bias, x));
            -target_sum
                .iter()
                .zip(&probs)
                .map(|(t, p)| if *t == 0.0 { 0.0 } else { t * p.max(f64::MIN_POSITIVE).ln() })
                .sum::<f64>()
        })
        .sum::<f64>()
        * inv_n;

    Ok(SLearnerModel {
        schema: dataset.schema().clone(),
        hidden: dataset.hidden().clone(),
        weights,
        bias,
        iterations,
        final_loss,
        converged,
    })
}

fn logits(weights: &Matrix, bias: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = bias.to_vec();
    for (f, &xv) in x.iter().enumerate() {
        if xv != 0.0 {
            for (c, o) in out.iter_mut().enumerate() {
                *o += xv * weights[(f, c)];
            }
        }
    }
    out
}

impl SLearnerModel {
    /// Predicted class distribution for an encoded concept vector.
    pub fn predict(&self, concepts: &[f64]) -> Result<Vec<f64>> {
        if concepts.len() != self.weights.nrows() {
            return Err(Error::dims(
                "slearner predict",
                format!("expected {} concepts, got {}", self.weights.nrows(), concepts.len()),
            ));
        }
        Ok(softmax(&logits(&self.weights, &self.bias, concepts)))
    }

    /// `R(c') - softmax(N(x))`, always in probability space.
    pub fn explain(
        &self,
        dataset: &Dataset,
        sample: &Sample,
        attribute: &str,
        to_level: &str,
    ) -> Result<EffectEstimate> {
        if dataset.schema() != &self.schema || dataset.hidden() != &self.hidden {
            return Err(Error::InvalidArgument(
                "dataset schema or mask differs from the fitted model".into(),
            ));
        }
        let from = dataset
            .label(sample, attribute)?
            .ok_or_else(|| Error::MissingLabel {
                sample: sample.id.clone(),
                attribute: attribute.to_string(),
            })?
            .to_string();
        let factual = dataset.encode_sample(sample)?;
        let counterfactual = dataset.intervene(&factual, attribute, to_level)?;
        let predicted = self.predict(&counterfactual)?;
        let observed = match dataset.space() {
            OutputSpace::Logit => softmax(&sample.output),
            OutputSpace::Probability => sample.output.clone(),
        };
        Ok(EffectEstimate {
            sample_id: sample.id.clone(),
            attribute: attribute.to_string(),
            from_level: from,
            to_level: to_level.to_string(),
            effect: predicted.iter().zip(&observed).map(|(p, o)| p - o).collect(),
            method: Method::Slearner,
            space: OutputSpace::Probability,
            fallback: false,
        })
    }
}
