//! Counterfactual evaluation: empirical per-pair effects, the three distance
//! metrics, grouped effect errors, a coefficient-contrast diagnostic and
//! macro-F1.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::concepts::{ConceptSchema, Dataset, EditPair, OutputSpace};
use crate::error::{Error, Result};
use crate::explainers::{EffectEstimate, Method};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L2,
    Cosine,
    Norm,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::L2, Metric::Cosine, Metric::Norm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
            Metric::Norm => "norm",
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            Metric::L2 => dist_l2(a, b),
            Metric::Cosine => dist_cosine(a, b),
            Metric::Norm => dist_norm(a, b),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Metric::L2),
            "cosine" => Ok(Metric::Cosine),
            "norm" => Ok(Metric::Norm),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dims("distance", format!("lengths {} and {}", a.len(), b.len())));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist_l2(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// `1 - cos(a, b)`; 0 when both vectors are zero, 1 when exactly one is.
pub fn dist_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    if a == b {
        return Ok(0.0);
    }
    let (na, nb) = (norm(a), norm(b));
    Ok(match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| (x / na) * (y / nb)).sum();
            (1.0 - dot).max(0.0)
        }
    })
}

pub fn dist_norm(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    Ok((norm(a) - norm(b)).abs())
}

/// Empirical effect of a pair: edited output minus original output, in the
/// dataset's output space.
pub fn icace(pair: &EditPair, dataset: &Dataset) -> Result<Vec<f64>> {
    let orig = dataset.sample_by_id(&pair.original_id)?;
    let edit = dataset.sample_by_id(&pair.edited_id)?;
    Ok(edit.output.iter().zip(&orig.output).map(|(e, o)| e - o).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub attribute: String,
    pub from: String,
    pub to: String,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub mask: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<OutputSpace>,
    /// Free-form resolved run configuration.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub metadata: RunMetadata,
    pub groups: Vec<GroupRow>,
    /// Unweighted mean of the group means.
    pub macro_mean: f64,
    /// Population standard deviation of the group means.
    pub macro_std: f64,
    pub pairs_evaluated: usize,
}

/// Mean and population standard deviation; `(0, 0)` when empty.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

type EffectKey<'a> = (&'a str, &'a str, &'a str, &'a str);

/// Mean distance between empirical and estimated effects per
/// (attribute, from, to) group, plus the macro average over groups.
///
/// Effects are matched to pairs by (sample, attribute, from, to); the first
/// estimate with a given key wins.
pub fn icace_error(
    effects: &[EffectEstimate],
    pairs: &[EditPair],
    dataset: &Dataset,
    metric: Metric,
) -> Result<EvalReport> {
    let mut lookup: HashMap<EffectKey<'_>, &EffectEstimate> = HashMap::new();
    for e in effects {
        if e.space != dataset.space() {
            return Err(Error::SpaceMismatch(format!(
                "{} effect for `{}` is in {} space but the dataset holds {}",
                e.method,
                e.sample_id,
                e.space,
                dataset.space()
            )));
        }
        lookup
            .entry((&e.sample_id, &e.attribute, &e.from_level, &e.to_level))
            .or_insert(e);
    }

    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for p in pairs {
        let est = lookup
            .get(&(p.original_id.as_str(), p.attribute.as_str(), p.from_level.as_str(), p.to_level.as_str()))
            .ok_or_else(|| Error::MissingEstimate {
                sample: p.original_id.clone(),
                attribute: p.attribute.clone(),
                from: p.from_level.clone(),
                to: p.to_level.clone(),
            })?;
        let truth = icace(p, dataset)?;
        let d = metric.distance(&truth, &est.effect)?;
        groups
            .entry((p.attribute.clone(), p.from_level.clone(), p.to_level.clone()))
            .or_default()
            .push(d);
    }

    let rows: Vec<GroupRow> = groups
        .into_iter()
        .map(|((attribute, from, to), ds)| {
            let (mean, std) = mean_std(&ds);
            GroupRow {
                attribute,
                from,
                to,
                metric,
                mean,
                std,
                count: ds.len(),
            }
        })
        .collect();
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let (macro_mean, macro_std) = mean_std(&means);
    Ok(EvalReport {
        metric,
        metadata: RunMetadata {
            space: Some(dataset.space()),
            mask: dataset.hidden().iter().cloned().collect(),
            ..Default::default()
        },
        groups: rows,
        macro_mean,
        macro_std,
        pairs_evaluated: pairs.len(),
    })
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "attribute,from,to,metric,mean,std,count";

    /// One row per group, columns as in [`EvalReport::CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for g in &self.groups {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                g.attribute, g.from, g.to, g.metric, g.mean, g.std, g.count
            );
        }
        out
    }
}

/// Sum over every ordered level swap of every visible attribute of the
/// distance between estimated and true level-contrast vectors.
///
/// Both matrices are k_vis x q over the visible encoding of `schema`/`hidden`.
pub fn coefficient_error(
    schema: &ConceptSchema,
    hidden: &BTreeSet<String>,
    beta_hat: &Matrix,
    beta_star: &Matrix,
    metric: Metric,
) -> Result<f64> {
    let k = schema.visible_width(hidden);
    if beta_hat.shape() != beta_star.shape() || beta_hat.nrows() != k {
        return Err(Error::dims(
            "coefficient_error",
            format!(
                "beta_hat {:?}, beta_star {:?}, visible width {k}",
                beta_hat.shape(),
                beta_star.shape()
            ),
        ));
    }
    let contrast = |m: &Matrix, from: usize, to: usize| -> Vec<f64> {
        (0..m.ncols()).map(|c| m[(to, c)] - m[(from, c)]).collect()
    };
    let mut total = 0.0;
    for (_, block) in schema.visible_blocks(hidden) {
        for from in block.clone() {
            for to in block.clone() {
                if from != to {
                    total += metric.distance(&contrast(beta_hat, from, to), &contrast(beta_star, from, to))?;
                }
            }
        }
    }
    Ok(total)
}

/// Unweighted mean of per-class `2TP / (2TP + FP + FN)`, with 0 for a class
/// that is neither predicted nor present.
pub fn macro_f1(predicted: &[usize], gold: &[usize], n_classes: usize) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::dims(
            "macro_f1",
            format!("{} predictions for {} gold labels", predicted.len(), gold.len()),
        ));
    }
    if n_classes == 0 {
        return Err(Error::InvalidArgument("macro-F1 needs at least one class".into()));
    }
    if let Some(bad) = predicted.iter().chain(gold).find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "class index {bad} out of range for {n_classes} classes"
        )));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &g) in predicted.iter().zip(gold) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let total: f64 = (0..n_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / n_classes as f64)
}
