//! Missingness-aware explainer.
//!
//! Fitting is closed form:
//!
//! 1. regress the embeddings `H` on the observed concepts `C` and keep the
//!    residual `R = H - C * gamma`, which is column-orthogonal to `C`;
//! 2. take the top-`j` right singular directions `V` of `R`; the pseudo-concepts
//!    are `R * V`;
//! 3. because the two blocks are orthogonal the joint least-squares problem
//!    splits into `beta_ob = lstsq(C, Y)` and `beta_pseud = lstsq(R V, Y)`.
//!
//! Out of sample the pseudo-concepts are `(e - c * gamma) * V`, so an
//! intervention on `c` moves both terms while the embedding stays fixed.

use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{EffectEstimate, Method};
use crate::concepts::{ConceptSchema, Dataset, OutputSpace, Sample};
use crate::error::{Error, Result};
use crate::linalg::{self, lstsq, max_abs_cross, residualize, rows_serde, truncated_svd, Matrix};

/// Pseudo-concept directions whose singular value falls below this fraction
/// of `||H||_F` are rounding noise of an exactly-spanned residual and are
/// given zero weight.
const NULL_DIRECTION_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// `max |C^T C_pseud|` on the training data.
    pub orthogonality: f64,
    pub residual_sos: f64,
    pub rank_observed: usize,
    pub rank_pseudo: usize,
    pub pseudo_singular_values: Vec<f64>,
}

/// Fitted coefficient blocks, independent of any concept schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MccCoefficients {
    #[serde(with = "rows_serde")]
    pub gamma: Matrix,
    #[serde(with = "rows_serde")]
    pub basis: Matrix,
    #[serde(with = "rows_serde")]
    pub beta_ob: Matrix,
    #[serde(with = "rows_serde")]
    pub beta_pseud: Matrix,
}

impl MccCoefficients {
    /// Pseudo-concept scores `(e - c * gamma) * V` for one row.
    pub fn pseudo(&self, concepts: &[f64], embedding: &[f64]) -> Result<Matrix> {
        let (k, d) = self.gamma.shape();
        if concepts.len() != k || embedding.len() != d {
            return Err(Error::dims(
                "predict_g",
                format!(
                    "expected concept length {k} and embedding length {d}, got {} and {}",
                    concepts.len(),
                    embedding.len()
                ),
            ));
        }
        let c = Matrix::from_row_slice(1, k, concepts);
        let e = Matrix::from_row_slice(1, d, embedding);
        Ok((e - &c * &self.gamma) * &self.basis)
    }

    pub fn predict(&self, concepts: &[f64], embedding: &[f64]) -> Result<Vec<f64>> {
        let pseudo = self.pseudo(concepts, embedding)?;
        let c = Matrix::from_row_slice(1, concepts.len(), concepts);
        let out = c * &self.beta_ob + pseudo * &self.beta_pseud;
        Ok(out.iter().copied().collect())
    }
}

/// Closed-form fit on raw matrices; `c_ob` is n x k, `h` n x d, `targets` n x q.
pub fn fit_mcce_matrices(
    c_ob: &Matrix,
    h: &Matrix,
    targets: &Matrix,
    j: usize,
    ridge: f64,
) -> Result<(MccCoefficients, FitDiagnostics)> {
    let (n, k) = c_ob.shape();
    let d = h.ncols();
    if h.nrows() != n || targets.nrows() != n {
        return Err(Error::dims(
            "fit_mcce",
            format!(
                "row counts differ: concepts {n}, embeddings {}, targets {}",
                h.nrows(),
                targets.nrows()
            ),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("no visible concepts to fit on".into()));
    }
    if j == 0 || j > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "number of pseudo-concepts j = {j} outside 1..={}",
            n.min(d)
        )));
    }
    if n < k + j {
        warn!("fitting {} coefficients per output on only {n} samples", k + j);
    }
    linalg::ensure_finite(h, "embeddings")?;

    let res = residualize(c_ob, h, ridge)?;
    let svd = truncated_svd(&res.residual, j)?;
    let cutoff = NULL_DIRECTION_RTOL * h.norm();
    let mut c_pseud = svd.scores;
    for (col, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff {
            c_pseud.column_mut(col).fill(0.0);
        }
    }

    let ob = lstsq(c_ob, targets, ridge)?;
    let pseud = lstsq(&c_pseud, targets, ridge)?;
    let fitted = c_ob * &ob.coefficients + &c_pseud * &pseud.coefficients;
    let diagnostics = FitDiagnostics {
        orthogonality: max_abs_cross(c_ob, &c_pseud)?,
        residual_sos: (targets - fitted).norm_squared(),
        rank_observed: ob.effective_rank,
        rank_pseudo: pseud.effective_rank,
        pseudo_singular_values: svd.singular_values,
    };
    Ok((
        MccCoefficients {
            gamma: res.gamma,
            basis: svd.basis,
            beta_ob: ob.coefficients,
            beta_pseud: pseud.coefficients,
        },
        diagnostics,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MccModel {
    pub schema: ConceptSchema,
    pub hidden: BTreeSet<String>,
    pub space: OutputSpace,
    pub ridge: f64,
    pub j: usize,
    #[serde(flatten)]
    pub coefficients: MccCoefficients,
    pub diagnostics: FitDiagnostics,
}

/// Fits on the dataset's visible concepts and embeddings against `targets`
/// (the outputs for explanation, one-hot gold labels for prediction).
pub fn fit_mcce(dataset: &Dataset, targets: &Matrix, j: usize, ridge: f64) -> Result<MccModel> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot fit on an empty dataset".into()));
    }
    let c_ob = dataset.concept_matrix()?;
    let h = dataset.embedding_matrix();
    let (coefficients, diagnostics) = fit_mcce_matrices(&c_ob, &h, targets, j, ridge)?;
    Ok(MccModel {
        schema: dataset.schema().clone(),
        hidden: dataset.hidden().clone(),
        space: dataset.space(),
        ridge,
        j,
        coefficients,
        diagnostics,
    })
}

impl MccModel {
    pub fn visible_width(&self) -> usize {
        self.coefficients.gamma.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.coefficients.beta_ob.ncols()
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.schema() != &self.schema || dataset.hidden() != &self.hidden {
            return Err(Error::InvalidArgument(
                "dataset schema or mask differs from the fitted model".into(),
            ));
        }
        if dataset.space() != self.space {
            return Err(Error::SpaceMismatch(format!(
                "model fitted in {} space, dataset holds {}",
                self.space,
                dataset.space()
            )));
        }
        Ok(())
    }

    /// Linear predictor on an encoded concept vector and a raw embedding.
    pub fn predict_g(&self, concepts: &[f64], embedding: &[f64]) -> Result<Vec<f64>> {
        self.coefficients.predict(concepts, embedding)
    }

    /// Effect of switching `attribute` to `to_level` on `sample`, with the
    /// embedding held fixed.
    pub fn explain(
        &self,
        dataset: &Dataset,
        sample: &Sample,
        attribute: &str,
        to_level: &str,
    ) -> Result<EffectEstimate> {
        self.check_dataset(dataset)?;
        let from = dataset
            .label(sample, attribute)?
            .ok_or_else(|| Error::MissingLabel {
                sample: sample.id.clone(),
                attribute: attribute.to_string(),
            })?
            .to_string();
        let factual = dataset.encode_sample(sample)?;
        let counterfactual = dataset.intervene(&factual, attribute, to_level)?;
        let predicted = self.predict_g(&counterfactual, &sample.embedding)?;
        Ok(EffectEstimate {
            sample_id: sample.id.clone(),
            attribute: attribute.to_string(),
            from_level: from,
            to_level: to_level.to_string(),
            effect: predicted.iter().zip(&sample.output).map(|(p, y)| p - y).collect(),
            method: Method::Mcce,
            space: self.space,
            fallback: false,
        })
    }
}

/// Argmax of the linear predictor per sample; ties go to the lowest class.
pub fn predict_labels(model: &MccModel, dataset: &Dataset) -> Result<Vec<usize>> {
    if dataset.schema() != &model.schema || dataset.hidden() != &model.hidden {
        return Err(Error::InvalidArgument(
            "dataset schema or mask differs from the fitted model".into(),
        ));
    }
    dataset
        .samples()
        .iter()
        .map(|s| {
            let out = model.predict_g(&dataset.encode_sample(s)?, &s.embedding)?;
            Ok(argmax(&out))
        })
        .collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::{Labels, OutputSpace};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
        Matrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    fn fitted(seed: u64, n: usize, k: usize, d: usize, q: usize, j: usize) -> (Matrix, Matrix, Matrix, MccCoefficients, FitDiagnostics) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random(&mut rng, n, k);
        let h = random(&mut rng, n, d);
        let y = random(&mut rng, n, q);
        let (coef, diag) = fit_mcce_matrices(&c, &h, &y, j, 0.0).unwrap();
        (c, h, y, coef, diag)
    }

    #[test]
    fn zero_targets_give_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random(&mut rng, 20, 3);
        let h = random(&mut rng, 20, 5);
        let (coef, _) = fit_mcce_matrices(&c, &h, &Matrix::zeros(20, 2), 3, 0.0).unwrap();
        assert!(coef.beta_ob.iter().all(|&v| v == 0.0));
        assert!(coef.beta_pseud.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interpolation_regime_reproduces_targets() {
        // n = k + j: observed plus pseudo-concepts span R^n
        let (c, h, y, coef, diag) = fitted(2, 6, 3, 5, 2, 3);
        assert!(diag.residual_sos < 1e-12);
        for i in 0..6 {
            let ci: Vec<f64> = c.row(i).iter().copied().collect();
            let hi: Vec<f64> = h.row(i).iter().copied().collect();
            let p = coef.predict(&ci, &hi).unwrap();
            for (a, b) in p.iter().zip(y.row(i).iter()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_residual_embedding_reduces_to_observed_term() {
        let (_, _, _, coef, _) = fitted(3, 30, 4, 6, 3, 4);
        let c = [0.3, -1.0, 0.5, 2.0];
        let cm = Matrix::from_row_slice(1, 4, &c);
        let e: Vec<f64> = (&cm * &coef.gamma).iter().copied().collect();
        let p = coef.predict(&c, &e).unwrap();
        let expect = &cm * &coef.beta_ob;
        for (a, b) in p.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_rejects_bad_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random(&mut rng, 10, 3);
        let h = random(&mut rng, 10, 4);
        let y = random(&mut rng, 10, 2);
        assert!(fit_mcce_matrices(&c, &h, &y, 0, 0.0).is_err());
        assert!(fit_mcce_matrices(&c, &h, &y, 5, 0.0).is_err());
        assert!(fit_mcce_matrices(&Matrix::zeros(10, 0), &h, &y, 2, 0.0).is_err());
    }

    #[test]
    fn predict_rejects_wrong_lengths() {
        let (_, _, _, coef, _) = fitted(5, 20, 3, 4, 2, 2);
        assert!(coef.predict(&[1.0, 0.0], &[0.0; 4]).is_err());
        assert!(coef.predict(&[1.0, 0.0, 0.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn model_round_trips_through_json() {
        let schema = ConceptSchema::uniform(&["a", "b"], &["x", "y"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples = (0..12)
            .map(|i| {
                let labels: Labels = [
                    ("a".to_string(), if i % 2 == 0 { "x" } else { "y" }.to_string()),
                    ("b".to_string(), if i % 3 == 0 { "x" } else { "y" }.to_string()),
                ]
                .into_iter()
                .collect();
                Sample::new(
                    format!("s{i}"),
                    labels,
                    (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    None,
                )
            })
            .collect();
        let ds = Dataset::new(schema, samples, vec![]).unwrap();
        let model = fit_mcce(&ds, &ds.output_matrix(), 2, 0.0).unwrap();
        let text = serde_json::to_string(&model).unwrap();
        let back: MccModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(model.space, OutputSpace::Logit);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn blocks_are_orthogonal_and_decoupled(seed in any::<u64>(), n in 15usize..60, k in 1usize..6, d in 2usize..10, q in 1usize..4) {
            let j = d.min(n).min(4);
            let (c, _, y, coef, diag) = fitted(seed, n, k, d, q, j);
            prop_assert!(diag.orthogonality < 1e-8);
            let alone = lstsq(&c, &y, 0.0).unwrap().coefficients;
            prop_assert!((alone - &coef.beta_ob).amax() < 1e-8);
        }

        #[test]
        fn predictor_is_affine_in_its_inputs(seed in any::<u64>(), alpha in -2.0f64..2.0) {
            let (_, _, _, coef, _) = fitted(seed, 25, 3, 5, 2, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
            let c1: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c2: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e1: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e2: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect() };
            let lhs = coef.predict(&mix(&c1, &c2), &mix(&e1, &e2)).unwrap();
            let p1 = coef.predict(&c1, &e1).unwrap();
            let p2 = coef.predict(&c2, &e2).unwrap();
            for i in 0..2 {
                let rhs = alpha * p1[i] + (1.0 - alpha) * p2[i];
                prop_assert!((lhs[i] - rhs).abs() < 1e-8 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn pseudo_recombination_leaves_predictions_unchanged(seed in any::<u64>()) {
            let (c, h, _, coef, _) = fitted(seed, 30, 3, 6, 2, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            let q = random(&mut rng, 3, 3) + Matrix::identity(3, 3) * 3.0;
            let q_inv = q.clone().try_inverse().unwrap();
            let mixed = MccCoefficients {
                basis: &coef.basis * &q,
                beta_pseud: q_inv * &coef.beta_pseud,
                ..coef.clone()
            };
            for i in 0..5 {
                let ci: Vec<f64> = c.row(i).iter().copied().collect();
                let hi: Vec<f64> = h.row(i).iter().copied().collect();
                let a = coef.predict(&ci, &hi).unwrap();
                let b = mixed.predict(&ci, &hi).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-8);
                }
            }
        }
    }
}
