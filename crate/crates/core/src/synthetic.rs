//! Synthetic data with known ground truth.
//!
//! The generator follows the causal chain exogenous state -> concepts ->
//! embedding -> black-box logits:
//!
//! * `u ~ N(0, I_m)`;
//! * each attribute picks the level maximizing `A_a u + g` with standard
//!   Gumbel noise `g`, so attributes loading on a common coordinate of `u`
//!   are confounded;
//! * `e = B c + sigma_e * z_e` on the complete one-hot vector `c`;
//! * `y = c beta* + sigma_y * z_y`.
//!
//! Randomness is split into ChaCha8 streams of one seed: stream 0 draws the
//! parameters, stream `i + 1` draws every noise term of sample `i` (in the
//! order u, Gumbel, embedding noise, logit noise), and the last stream
//! selects counterfactual edits. Replaying stream `i + 1` with a flipped
//! concept gives the counterfactual with the same noise.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::concepts::{softmax, Attribute, ConceptSchema, Dataset, EditPair, Labels, Sample};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, rows_serde, Matrix};

const PARAM_STREAM: u64 = 0;
const EDIT_STREAM: u64 = u64::MAX;

fn default_one() -> usize {
    1
}
fn default_weight() -> f64 {
    1.0
}
fn default_embedding_dim() -> usize {
    32
}
fn default_true() -> bool {
    true
}
fn default_classes() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub attributes: Vec<Attribute>,
    #[serde(default)]
    pub hidden: Vec<String>,
    /// Dimension m of the exogenous state; defaults to one private
    /// coordinate per attribute plus the shared ones.
    #[serde(default)]
    pub exogenous_dim: Option<usize>,
    /// Number of leading coordinates of `u` every attribute loads on.
    #[serde(default = "default_one")]
    pub shared_coords: usize,
    #[serde(default = "default_weight")]
    pub shared_weight: f64,
    #[serde(default = "default_weight")]
    pub private_weight: f64,
    /// Explicit per-attribute level-score maps (levels x m), overriding the
    /// shared/private construction.
    #[serde(default)]
    pub mixing: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    /// Explicit d x k embedding map; drawn at random when absent.
    #[serde(default)]
    pub embedding_map: Option<Vec<Vec<f64>>>,
    /// Orthonormalize the random embedding map, so that every concept level
    /// gets its own orthogonal direction. Needs `embedding_dim >= k`.
    #[serde(default = "default_true")]
    pub orthonormal_embedding: bool,
    #[serde(default)]
    pub embedding_noise: f64,
    /// Refuse embedding maps that are not injective on concept vectors.
    #[serde(default)]
    pub require_recoverable: bool,
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    #[serde(default = "default_weight")]
    pub beta_scale: f64,
    /// Explicit k x q outcome coefficients; Gaussian times `beta_scale` when
    /// absent.
    #[serde(default)]
    pub beta_star: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub logit_noise: f64,
    #[serde(default = "default_one")]
    pub edits_per_sample: usize,
}

impl SynthConfig {
    /// Four three-level attributes sharing one confounding coordinate.
    pub fn confounded(n: usize, seed: u64, hidden: &[&str]) -> Self {
        let levels = ["negative", "unknown", "positive"];
        SynthConfig {
            n,
            seed,
            attributes: ["ambiance", "food", "noise", "service"]
                .iter()
                .map(|name| Attribute {
                    name: name.to_string(),
                    levels: levels.iter().map(|l| l.to_string()).collect(),
                })
                .collect(),
            hidden: hidden.iter().map(|h| h.to_string()).collect(),
            exogenous_dim: None,
            shared_coords: 1,
            shared_weight: 1.0,
            private_weight: 1.0,
            mixing: None,
            embedding_dim: 32,
            embedding_map: None,
            orthonormal_embedding: true,
            embedding_noise: 0.0,
            require_recoverable: true,
            n_classes: 5,
            beta_scale: 1.0,
            beta_star: None,
            logit_noise: 0.05,
            edits_per_sample: 1,
        }
    }

    pub fn schema(&self) -> Result<ConceptSchema> {
        ConceptSchema::new(self.attributes.clone())
    }

    pub fn exogenous_dim(&self) -> usize {
        self.exogenous_dim
            .unwrap_or(self.shared_coords + self.attributes.len())
    }
}

/// Materialized generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub mixing: Vec<Vec<Vec<f64>>>,
    #[serde(with = "rows_serde")]
    pub embedding_map: Matrix,
    #[serde(with = "rows_serde")]
    pub beta_star: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTruth {
    pub original_id: String,
    pub edited_id: String,
    pub attribute: String,
    pub from: String,
    pub to: String,
    /// Realized output differences of the generated pair. The logit one
    /// equals the beta* contrast up to rounding, since the noise is shared.
    pub icace_logit: Vec<f64>,
    pub icace_probability: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGroundTruth {
    pub schema: ConceptSchema,
    pub params: SynthParams,
    pub hidden: Vec<String>,
    /// Labels of the hidden attributes for every sample.
    pub hidden_labels: BTreeMap<String, Labels>,
    pub pairs: Vec<PairTruth>,
}

impl SynthGroundTruth {
    pub fn beta_star(&self) -> &Matrix {
        &self.params.beta_star
    }

    /// Rows of beta* for the visible encoding of `hidden`.
    pub fn visible_beta_star(&self, hidden: &BTreeSet<String>) -> Matrix {
        let rows: Vec<usize> = self
            .schema
            .attributes()
            .iter()
            .enumerate()
            .filter(|(_, a)| !hidden.contains(&a.name))
            .flat_map(|(i, _)| self.schema.block(i))
            .collect();
        let beta = &self.params.beta_star;
        Matrix::from_fn(rows.len(), beta.ncols(), |i, j| beta[(rows[i], j)])
    }

    pub fn pair(&self, pair: &EditPair) -> Result<&PairTruth> {
        self.pairs
            .iter()
            .find(|t| t.original_id == pair.original_id && t.edited_id == pair.edited_id)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "pair {} -> {} is not registered in the ground truth",
                    pair.original_id, pair.edited_id
                ))
            })
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn rows_matrix(rows: &[Vec<f64>], what: &str, shape: (usize, usize)) -> Result<Matrix> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::InvalidArgument(format!(
            "{what} must be {}x{}",
            shape.0, shape.1
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("synthetic parameters"));
    }
    Ok(Matrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

/// Validates `config` and draws (or adopts) the mixing maps, embedding map
/// and outcome coefficients.
pub fn resolve_params(config: &SynthConfig) -> Result<SynthParams> {
    let schema = config.schema()?;
    if config.n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if config.embedding_dim == 0 || config.n_classes == 0 {
        return Err(Error::InvalidArgument(
            "embedding_dim and n_classes must be positive".into(),
        ));
    }
    let noise_ok = |v: f64| v.is_finite() && v >= 0.0;
    if !noise_ok(config.embedding_noise) || !noise_ok(config.logit_noise) {
        return Err(Error::InvalidArgument("noise scales must be finite and nonnegative".into()));
    }
    for h in &config.hidden {
        schema.attribute_index(h)?;
    }
    if config.edits_per_sample > schema.attributes().len() {
        return Err(Error::InvalidArgument(format!(
            "edits_per_sample {} exceeds the {} attributes",
            config.edits_per_sample,
            schema.attributes().len()
        )));
    }
    let m = config.exogenous_dim();
    let n_attr = schema.attributes().len();
    if m == 0 {
        return Err(Error::InvalidArgument("exogenous dimension must be positive".into()));
    }
    if config.mixing.is_none() && m < config.shared_coords + n_attr {
        return Err(Error::InvalidArgument(format!(
            "exogenous_dim {m} leaves no private coordinate for every attribute"
        )));
    }
    let k = schema.width();
    let d = config.embedding_dim;
    let q = config.n_classes;

    let mut rng = stream(config.seed, PARAM_STREAM);
    let mixing = match &config.mixing {
        Some(explicit) => {
            if explicit.len() != n_attr {
                return Err(Error::InvalidArgument("one mixing map per attribute required".into()));
            }
            for (a, map) in schema.attributes().iter().zip(explicit) {
                rows_matrix(map, &format!("mixing map of `{}`", a.name), (a.levels.len(), m))?;
            }
            explicit.clone()
        }
        None => schema
            .attributes()
            .iter()
            .enumerate()
            .map(|(ai, a)| {
                let half = (a.levels.len() - 1) as f64 / 2.0;
                (0..a.levels.len())
                    .map(|l| {
                        // ordinal position in [-1, 1]: negative .. positive
                        let pos = (l as f64 - half) / half;
                        let mut row = vec![0.0; m];
                        for s in row.iter_mut().take(config.shared_coords) {
                            *s = pos * config.shared_weight;
                        }
                        row[config.shared_coords + ai] = pos * config.private_weight;
                        row
                    })
                    .collect()
            })
            .collect(),
    };
    let embedding_map = match &config.embedding_map {
        Some(rows) => rows_matrix(rows, "embedding_map", (d, k))?,
        None => {
            let g = Matrix::from_fn(d, k, |_, _| gaussian(&mut rng));
            if !config.orthonormal_embedding {
                g
            } else if d < k {
                return Err(Error::InvalidArgument(format!(
                    "orthonormal embedding needs embedding_dim >= {k}, got {d}"
                )));
            } else {
                g.qr().q()
            }
        }
    };
    let beta_star = match &config.beta_star {
        Some(rows) => rows_matrix(rows, "beta_star", (k, q))?,
        None => {
            let mut beta = Matrix::zeros(k, q);
            for i in 0..k {
                for j in 0..q {
                    beta[(i, j)] = config.beta_scale * gaussian(&mut rng);
                }
            }
            beta
        }
    };
    if config.require_recoverable {
        let rank = lstsq(&embedding_map, &Matrix::zeros(d, 1), 0.0)?.effective_rank;
        if rank < k {
            return Err(Error::InvalidArgument(format!(
                "embedding map has rank {rank} < {k}; concepts are not recoverable from embeddings"
            )));
        }
    }
    Ok(SynthParams {
        mixing,
        embedding_map,
        beta_star,
    })
}

struct SampleNoise {
    u: Vec<f64>,
    gumbel: Vec<Vec<f64>>,
    embedding: Vec<f64>,
    logits: Vec<f64>,
}

fn draw_noise(config: &SynthConfig, schema: &ConceptSchema, index: usize) -> SampleNoise {
    let mut rng = stream(config.seed, index as u64 + 1);
    let gumbel = Gumbel::new(0.0, 1.0).expect("valid Gumbel");
    let u = (0..config.exogenous_dim()).map(|_| gaussian(&mut rng)).collect();
    let g = schema
        .attributes()
        .iter()
        .map(|a| (0..a.levels.len()).map(|_| gumbel.sample(&mut rng)).collect())
        .collect();
    let embedding = (0..config.embedding_dim).map(|_| gaussian(&mut rng)).collect();
    let logits = (0..config.n_classes).map(|_| gaussian(&mut rng)).collect();
    SampleNoise {
        u,
        gumbel: g,
        embedding,
        logits,
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn complete_encoding(schema: &ConceptSchema, labels: &Labels) -> Result<Vec<f64>> {
    crate::concepts::encode(schema, labels, &BTreeSet::new())
}

/// Embedding and logits of a complete label assignment under the noise of
/// sample `index`.
fn realize(
    config: &SynthConfig,
    params: &SynthParams,
    schema: &ConceptSchema,
    noise: &SampleNoise,
    id: String,
    labels: Labels,
) -> Result<Sample> {
    let c = complete_encoding(schema, &labels)?;
    let c = Matrix::from_column_slice(c.len(), 1, &c);
    let e = &params.embedding_map * &c;
    let y = params.beta_star.transpose() * &c;
    let embedding: Vec<f64> = e
        .iter()
        .zip(&noise.embedding)
        .map(|(v, z)| v + config.embedding_noise * z)
        .collect();
    let logits: Vec<f64> = y
        .iter()
        .zip(&noise.logits)
        .map(|(v, z)| v + config.logit_noise * z)
        .collect();
    let gold = argmax(&logits);
    Ok(Sample::new(id, labels, embedding, logits, Some(gold)))
}

fn sample_id(index: usize) -> String {
    format!("s{index}")
}

/// Draws `config.n` factual samples. The returned dataset masks
/// `config.hidden`; its samples still carry every label.
pub fn generate(config: &SynthConfig) -> Result<(Dataset, SynthGroundTruth)> {
    let schema = config.schema()?;
    let params = resolve_params(config)?;
    let mut samples = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let noise = draw_noise(config, &schema, i);
        let labels: Labels = schema
            .attributes()
            .iter()
            .zip(&params.mixing)
            .zip(&noise.gumbel)
            .map(|((attr, map), g)| {
                let scores: Vec<f64> = map
                    .iter()
                    .zip(g)
                    .map(|(row, gl)| row.iter().zip(&noise.u).map(|(w, u)| w * u).sum::<f64>() + gl)
                    .collect();
                (attr.name.clone(), attr.levels[argmax(&scores)].clone())
            })
            .collect();
        samples.push(realize(config, &params, &schema, &noise, sample_id(i), labels)?);
    }
    let hidden: BTreeSet<String> = config.hidden.iter().cloned().collect();
    let hidden_labels = samples
        .iter()
        .map(|s| {
            let l: Labels = s
                .oracle_labels()
                .iter()
                .filter(|(k, _)| hidden.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            (s.id.clone(), l)
        })
        .collect();
    let dataset = Dataset::new(schema.clone(), samples, vec![])?.mask(&hidden)?;
    Ok((
        dataset,
        SynthGroundTruth {
            schema,
            params,
            hidden: config.hidden.clone(),
            hidden_labels,
            pairs: vec![],
        },
    ))
}

/// Counterfactual of generated sample `index` with `attribute` set to
/// `to_level`, reusing every noise draw of the original.
pub fn counterfactual_sample(
    config: &SynthConfig,
    truth: &SynthGroundTruth,
    original: &Sample,
    index: usize,
    attribute: &str,
    to_level: &str,
    id: String,
) -> Result<Sample> {
    let schema = &truth.schema;
    schema.level_index(attribute, to_level)?;
    let noise = draw_noise(config, schema, index);
    let mut labels = original.oracle_labels().clone();
    labels.insert(attribute.to_string(), to_level.to_string());
    realize(config, &truth.params, schema, &noise, id, labels)
}

/// Exact effect of a registered pair: the beta* contrast of the flipped
/// attribute.
pub fn true_icace(truth: &SynthGroundTruth, pair: &EditPair) -> Result<Vec<f64>> {
    truth.pair(pair)?;
    true_icace_unchecked(truth, pair)
}

/// Appends `edits_per_sample` counterfactual edits of every generated sample
/// (distinct attributes, uniformly chosen other level) and registers their
/// exact effects in `truth`.
pub fn make_pairs(
    dataset: &Dataset,
    truth: &mut SynthGroundTruth,
    config: &SynthConfig,
    edits_per_sample: usize,
) -> Result<Dataset> {
    let schema = &truth.schema;
    if dataset.schema() != schema || dataset.len() != config.n {
        return Err(Error::InvalidArgument(
            "dataset was not produced by this generator configuration".into(),
        ));
    }
    let n_attr = schema.attributes().len();
    if edits_per_sample > n_attr {
        return Err(Error::InvalidArgument(format!(
            "cannot edit {edits_per_sample} distinct attributes out of {n_attr}"
        )));
    }
    let mut rng = stream(config.seed, EDIT_STREAM);
    let mut samples = dataset.samples().to_vec();
    let mut pairs = Vec::with_capacity(config.n * edits_per_sample);
    for (i, original) in dataset.samples().iter().enumerate() {
        if original.id != sample_id(i) {
            return Err(Error::InvalidArgument(format!(
                "sample `{}` at position {i} is not a generated sample",
                original.id
            )));
        }
        for ai in index::sample(&mut rng, n_attr, edits_per_sample) {
            let attr = &schema.attributes()[ai];
            let current = &original.oracle_labels()[&attr.name];
            let from = schema.level_index(&attr.name, current)?;
            let mut to = rng.random_range(0..attr.levels.len() - 1);
            if to >= from {
                to += 1;
            }
            let to_level = attr.levels[to].clone();
            let id = format!("{}~{}={}", original.id, attr.name, to_level);
            let edited = counterfactual_sample(config, truth, original, i, &attr.name, &to_level, id.clone())?;
            let pair = EditPair {
                original_id: original.id.clone(),
                edited_id: id,
                attribute: attr.name.clone(),
                from_level: current.clone(),
                to_level: to_level.clone(),
            };
            let icace_logit = edited.output.iter().zip(&original.output).map(|(a, b)| a - b).collect();
            let icace_probability = softmax(&edited.output)
                .iter()
                .zip(softmax(&original.output))
                .map(|(a, b)| a - b)
                .collect();
            truth.pairs.push(PairTruth {
                original_id: pair.original_id.clone(),
                edited_id: pair.edited_id.clone(),
                attribute: pair.attribute.clone(),
                from: pair.from_level.clone(),
                to: to_level,
                icace_logit,
                icace_probability,
            });
            if let Some(mut hl) = truth.hidden_labels.get(&original.id).cloned() {
                if let Some(level) = hl.get_mut(&attr.name) {
                    level.clone_from(&pair.to_level);
                }
                truth.hidden_labels.insert(pair.edited_id.clone(), hl);
            }
            samples.push(edited);
            pairs.push(pair);
        }
    }
    Dataset::new(schema.clone(), samples, pairs)?.mask(dataset.hidden())
}

fn true_icace_unchecked(truth: &SynthGroundTruth, pair: &EditPair) -> Result<Vec<f64>> {
    let ai = truth.schema.attribute_index(&pair.attribute)?;
    let block = truth.schema.block(ai);
    let from = block.start + truth.schema.level_index(&pair.attribute, &pair.from_level)?;
    let to = block.start + truth.schema.level_index(&pair.attribute, &pair.to_level)?;
    let beta = &truth.params.beta_star;
    Ok((0..beta.ncols()).map(|c| beta[(to, c)] - beta[(from, c)]).collect())
}
