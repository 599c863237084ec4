//! Concept schema, one-hot encoding, interventions and the dataset container.
//!
//! Every attribute owns a contiguous block of the encoded vector, one column
//! per level, in schema order. There is no dropped reference level and no
//! intercept column.
//!
//! Labels of hidden attributes stay in memory (the pairs file and the
//! synthetic oracle refer to them) but are only reachable through
//! [`Sample::oracle_labels`]; everything the explainers use goes through
//! [`Dataset::visible_labels`] and [`Dataset::label`], which refuse hidden
//! attributes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub type Labels = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct ConceptSchema {
    attributes: Vec<Attribute>,
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    attributes: Vec<Attribute>,
}

impl TryFrom<RawSchema> for ConceptSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        ConceptSchema::new(raw.attributes)
    }
}

impl From<ConceptSchema> for RawSchema {
    fn from(schema: ConceptSchema) -> Self {
        RawSchema {
            attributes: schema.attributes,
        }
    }
}

impl ConceptSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut offsets = Vec::with_capacity(attributes.len());
        let mut width = 0;
        for attr in &attributes {
            if !seen.insert(attr.name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate attribute `{}`",
                    attr.name
                )));
            }
            let distinct: BTreeSet<_> = attr.levels.iter().collect();
            if attr.levels.len() < 2 || distinct.len() != attr.levels.len() {
                return Err(Error::InvalidArgument(format!(
                    "attribute `{}` needs at least two distinct levels",
                    attr.name
                )));
            }
            offsets.push(width);
            width += attr.levels.len();
        }
        Ok(ConceptSchema {
            attributes,
            offsets,
        })
    }

    /// Builds a schema where every attribute shares the same level names.
    pub fn uniform(names: &[&str], levels: &[&str]) -> Result<Self> {
        ConceptSchema::new(
            names
                .iter()
                .map(|n| Attribute {
                    name: n.to_string(),
                    levels: levels.iter().map(|l| l.to_string()).collect(),
                })
                .collect(),
        )
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    /// Full encoded width k.
    pub fn width(&self) -> usize {
        self.attributes.iter().map(|a| a.levels.len()).sum()
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn level_index(&self, attribute: &str, level: &str) -> Result<usize> {
        let attr = &self.attributes[self.attribute_index(attribute)?];
        attr.levels
            .iter()
            .position(|l| l == level)
            .ok_or_else(|| Error::UnknownLevel {
                attribute: attribute.to_string(),
                level: level.to_string(),
            })
    }

    /// Column block of attribute `idx` in the complete encoding.
    pub fn block(&self, idx: usize) -> Range<usize> {
        let start = self.offsets[idx];
        start..start + self.attributes[idx].levels.len()
    }

    pub fn check_hidden(&self, hidden: &BTreeSet<String>) -> Result<()> {
        for name in hidden {
            self.attribute_index(name)?;
        }
        Ok(())
    }

    /// Attributes that survive the mask, with their block in the visible
    /// encoding.
    pub fn visible_blocks<'a>(
        &'a self,
        hidden: &'a BTreeSet<String>,
    ) -> impl Iterator<Item = (&'a Attribute, Range<usize>)> + 'a {
        let mut offset = 0;
        self.attributes
            .iter()
            .filter(move |a| !hidden.contains(&a.name))
            .map(move |a| {
                let range = offset..offset + a.levels.len();
                offset = range.end;
                (a, range)
            })
    }

    pub fn visible_width(&self, hidden: &BTreeSet<String>) -> usize {
        self.attributes
            .iter()
            .filter(|a| !hidden.contains(&a.name))
            .map(|a| a.levels.len())
            .sum()
    }

    fn visible_block(&self, hidden: &BTreeSet<String>, attribute: &str) -> Result<Range<usize>> {
        self.attribute_index(attribute)?;
        if hidden.contains(attribute) {
            return Err(Error::HiddenAttribute(attribute.to_string()));
        }
        Ok(self
            .visible_blocks(hidden)
            .find(|(a, _)| a.name == attribute)
            .map(|(_, r)| r)
            .expect("visible attribute has a block"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// One-hot encoding of the visible attributes, in schema order.
pub fn encode(schema: &ConceptSchema, labels: &Labels, hidden: &BTreeSet<String>) -> Result<Vec<f64>> {
    let mut out = vec![0.0; schema.visible_width(hidden)];
    for (attr, block) in schema.visible_blocks(hidden) {
        let level = labels.get(&attr.name).ok_or_else(|| Error::MissingLabel {
            sample: String::new(),
            attribute: attr.name.clone(),
        })?;
        out[block.start + schema.level_index(&attr.name, level)?] = 1.0;
    }
    for name in labels.keys() {
        schema.attribute_index(name)?;
    }
    Ok(out)
}

/// Re-encodes one visible attribute block of `vector` to `to_level`.
pub fn intervene(
    schema: &ConceptSchema,
    vector: &[f64],
    attribute: &str,
    to_level: &str,
    hidden: &BTreeSet<String>,
) -> Result<Vec<f64>> {
    let block = schema.visible_block(hidden, attribute)?;
    let level = schema.level_index(attribute, to_level)?;
    if vector.len() != schema.visible_width(hidden) {
        return Err(Error::dims(
            "intervene",
            format!(
                "vector length {} but visible width {}",
                vector.len(),
                schema.visible_width(hidden)
            ),
        ));
    }
    let mut out = vector.to_vec();
    out[block.clone()].iter_mut().for_each(|v| *v = 0.0);
    out[block.start + level] = 1.0;
    Ok(out)
}

/// Which representation the black-box outputs are held in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputSpace {
    Logit,
    Probability,
}

impl std::fmt::Display for OutputSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutputSpace::Logit => "logit",
            OutputSpace::Probability => "probability",
        })
    }
}

impl std::str::FromStr for OutputSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(OutputSpace::Logit),
            "probability" => Ok(OutputSpace::Probability),
            other => Err(Error::InvalidArgument(format!("unknown output space `{other}`"))),
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|v| v / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    #[serde(rename = "concepts")]
    labels: Labels,
    pub embedding: Vec<f64>,
    /// Black-box output; logits on disk, possibly softmaxed in memory.
    #[serde(rename = "logits")]
    pub output: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<usize>,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        labels: Labels,
        embedding: Vec<f64>,
        output: Vec<f64>,
        gold: Option<usize>,
    ) -> Self {
        Sample {
            id: id.into(),
            labels,
            embedding,
            output,
            gold,
        }
    }

    /// Every label, hidden attributes included. Reserved for ground-truth
    /// bookkeeping and serialization; explainers go through [`Dataset`].
    pub fn oracle_labels(&self) -> &Labels {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditPair {
    pub original_id: String,
    pub edited_id: String,
    pub attribute: String,
    #[serde(rename = "from")]
    pub from_level: String,
    #[serde(rename = "to")]
    pub to_level: String,
}

/// Immutable dataset; clones and masked views share sample storage.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<ConceptSchema>,
    samples: Arc<Vec<Sample>>,
    pairs: Arc<Vec<EditPair>>,
    index: Arc<HashMap<String, usize>>,
    hidden: BTreeSet<String>,
    space: OutputSpace,
}

impl Dataset {
    /// Validates and assembles a dataset holding logits, nothing hidden.
    pub fn new(schema: ConceptSchema, samples: Vec<Sample>, pairs: Vec<EditPair>) -> Result<Self> {
        let mut index = HashMap::with_capacity(samples.len());
        let dims = samples.first().map(|s| (s.embedding.len(), s.output.len()));
        for (i, s) in samples.iter().enumerate() {
            validate_sample(&schema, s, dims.expect("non-empty"))?;
            if index.insert(s.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        let ds = Dataset {
            schema: Arc::new(schema),
            samples: Arc::new(samples),
            pairs: Arc::new(Vec::new()),
            index: Arc::new(index),
            hidden: BTreeSet::new(),
            space: OutputSpace::Logit,
        };
        for p in &pairs {
            ds.validate_pair(p)?;
        }
        Ok(Dataset {
            pairs: Arc::new(pairs),
            ..ds
        })
    }

    /// Reads the schema / samples / pairs trio. `pairs_path` may be omitted.
    pub fn load(schema_path: &Path, samples_path: &Path, pairs_path: Option<&Path>) -> Result<Self> {
        let schema = ConceptSchema::load(schema_path)?;
        let samples: Vec<Sample> = read_jsonl(samples_path)?;
        let dims = samples.first().map(|s| (s.embedding.len(), s.output.len()));
        for (line, s) in samples.iter().enumerate() {
            validate_sample(&schema, s, dims.expect("non-empty")).map_err(|e| Error::Parse {
                path: samples_path.to_path_buf(),
                line: line + 1,
                message: e.to_string(),
            })?;
        }
        let pairs: Vec<EditPair> = match pairs_path {
            Some(p) => read_jsonl(p)?,
            None => Vec::new(),
        };
        Dataset::new(schema, samples, pairs)
    }

    pub fn write(&self, schema_path: &Path, samples_path: &Path, pairs_path: &Path) -> Result<()> {
        if self.space != OutputSpace::Logit {
            return Err(Error::SpaceMismatch(
                "only logit-space datasets can be written".into(),
            ));
        }
        let schema = serde_json::to_string_pretty(self.schema.as_ref()).expect("schema serializes");
        std::fs::write(schema_path, schema + "\n").map_err(|e| Error::io(schema_path, e))?;
        write_jsonl(samples_path, self.samples.iter())?;
        write_jsonl(pairs_path, self.pairs.iter())
    }

    fn validate_pair(&self, p: &EditPair) -> Result<()> {
        let bad = |reason: String| Error::InvalidPair {
            original: p.original_id.clone(),
            edited: p.edited_id.clone(),
            reason,
        };
        let orig = self.sample_by_id(&p.original_id)?;
        let edit = self.sample_by_id(&p.edited_id)?;
        self.schema.level_index(&p.attribute, &p.from_level)?;
        self.schema.level_index(&p.attribute, &p.to_level)?;
        if orig.labels.get(&p.attribute) != Some(&p.from_level) {
            return Err(bad(format!("original is not labeled {}={}", p.attribute, p.from_level)));
        }
        if edit.labels.get(&p.attribute) != Some(&p.to_level) {
            return Err(bad(format!("edited is not labeled {}={}", p.attribute, p.to_level)));
        }
        let others = |l: &Labels| -> Labels {
            l.iter()
                .filter(|(k, _)| **k != p.attribute)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        };
        if others(&orig.labels) != others(&edit.labels) {
            return Err(bad("labels of other attributes differ".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> &ConceptSchema {
        &self.schema
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn pairs(&self) -> &[EditPair] {
        &self.pairs
    }

    pub fn hidden(&self) -> &BTreeSet<String> {
        &self.hidden
    }

    pub fn space(&self) -> OutputSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn embedding_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.embedding.len())
    }

    pub fn output_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.output.len())
    }

    pub fn visible_width(&self) -> usize {
        self.schema.visible_width(&self.hidden)
    }

    pub fn is_visible(&self, attribute: &str) -> bool {
        !self.hidden.contains(attribute)
    }

    pub fn sample_by_id(&self, id: &str) -> Result<&Sample> {
        self.index
            .get(id)
            .map(|&i| &self.samples[i])
            .ok_or_else(|| Error::DanglingId(id.to_string()))
    }

    /// The same data with `hidden` as the masked attribute set.
    pub fn mask(&self, hidden: &BTreeSet<String>) -> Result<Self> {
        self.schema.check_hidden(hidden)?;
        Ok(Dataset {
            hidden: hidden.clone(),
            ..self.clone()
        })
    }

    /// Converts the held outputs into `space`. Probability to logit is not
    /// invertible and is refused.
    pub fn in_space(&self, space: OutputSpace) -> Result<Self> {
        match (self.space, space) {
            (a, b) if a == b => Ok(self.clone()),
            (OutputSpace::Logit, OutputSpace::Probability) => {
                let samples = self
                    .samples
                    .iter()
                    .map(|s| Sample {
                        output: softmax(&s.output),
                        ..s.clone()
                    })
                    .collect();
                Ok(Dataset {
                    samples: Arc::new(samples),
                    space,
                    ..self.clone()
                })
            }
            _ => Err(Error::SpaceMismatch(
                "cannot recover logits from probabilities".into(),
            )),
        }
    }

    /// Label of a visible attribute; hidden attributes are refused.
    pub fn label<'a>(&self, sample: &'a Sample, attribute: &str) -> Result<Option<&'a str>> {
        self.schema.attribute_index(attribute)?;
        if self.hidden.contains(attribute) {
            return Err(Error::HiddenAttribute(attribute.to_string()));
        }
        Ok(sample.labels.get(attribute).map(String::as_str))
    }

    pub fn visible_labels(&self, sample: &Sample) -> Labels {
        sample
            .labels
            .iter()
            .filter(|(k, _)| !self.hidden.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn encode_sample(&self, sample: &Sample) -> Result<Vec<f64>> {
        encode(&self.schema, &self.visible_labels(sample), &self.hidden).map_err(|e| match e {
            Error::MissingLabel { attribute, .. } => Error::MissingLabel {
                sample: sample.id.clone(),
                attribute,
            },
            other => other,
        })
    }

    pub fn intervene(&self, vector: &[f64], attribute: &str, to_level: &str) -> Result<Vec<f64>> {
        intervene(&self.schema, vector, attribute, to_level, &self.hidden)
    }

    /// n x k_vis observed-concept design matrix.
    pub fn concept_matrix(&self) -> Result<Matrix> {
        let k = self.visible_width();
        let mut m = Matrix::zeros(self.len(), k);
        for (i, s) in self.samples.iter().enumerate() {
            for (j, v) in self.encode_sample(s)?.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn embedding_matrix(&self) -> Matrix {
        rows_to_matrix(self.samples.iter().map(|s| s.embedding.as_slice()), self.embedding_dim())
    }

    pub fn output_matrix(&self) -> Matrix {
        rows_to_matrix(self.samples.iter().map(|s| s.output.as_slice()), self.output_dim())
    }

    /// One-hot gold labels over the output classes.
    pub fn gold_matrix(&self) -> Result<Matrix> {
        let q = self.output_dim();
        let mut m = Matrix::zeros(self.len(), q);
        for (i, s) in self.samples.iter().enumerate() {
            let g = s.gold.ok_or_else(|| {
                Error::InvalidArgument(format!("sample `{}` has no gold label", s.id))
            })?;
            m[(i, g)] = 1.0;
        }
        Ok(m)
    }
}

pub(crate) fn rows_to_matrix<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Matrix {
    let rows: Vec<&[f64]> = rows.collect();
    Matrix::from_fn(rows.len(), width, |i, j| rows[i][j])
}

fn validate_sample(schema: &ConceptSchema, s: &Sample, (d, q): (usize, usize)) -> Result<()> {
    for (attr, level) in &s.labels {
        schema.level_index(attr, level)?;
    }
    if s.embedding.len() != d {
        return Err(Error::RaggedLength {
            id: s.id.clone(),
            field: "embedding",
            expected: d,
            found: s.embedding.len(),
        });
    }
    if s.output.len() != q {
        return Err(Error::RaggedLength {
            id: s.id.clone(),
            field: "logits",
            expected: q,
            found: s.output.len(),
        });
    }
    if d == 0 || q == 0 {
        return Err(Error::InvalidArgument(format!(
            "sample `{}` has an empty embedding or output",
            s.id
        )));
    }
    if !s.embedding.iter().chain(&s.output).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("sample vectors"));
    }
    if let Some(g) = s.gold {
        if g >= q {
            return Err(Error::InvalidArgument(format!(
                "sample `{}` gold label {g} out of range for {q} classes",
                s.id
            )));
        }
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl Iterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).expect("serializable");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn labels(pairs: &[(&str, &str)]) -> Labels {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    const LEVELS: [&str; 3] = ["neg", "unk", "pos"];

    #[test]
    fn encode_examples() {
        let food = ConceptSchema::uniform(&["food"], &LEVELS).unwrap();
        assert_eq!(
            encode(&food, &labels(&[("food", "unk")]), &set(&[])).unwrap(),
            vec![0.0, 1.0, 0.0]
        );
        assert!(encode(&food, &labels(&[("food", "unk")]), &set(&["food"]))
            .unwrap()
            .is_empty());

        let two = ConceptSchema::uniform(&["food", "noise"], &LEVELS).unwrap();
        let l = labels(&[("food", "pos"), ("noise", "neg")]);
        assert_eq!(encode(&two, &l, &set(&["noise"])).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn encode_errors() {
        let two = ConceptSchema::uniform(&["food", "noise"], &LEVELS).unwrap();
        assert!(matches!(
            encode(&two, &labels(&[("food", "pos")]), &set(&[])),
            Err(Error::MissingLabel { .. })
        ));
        assert!(matches!(
            encode(&two, &labels(&[("food", "great"), ("noise", "neg")]), &set(&[])),
            Err(Error::UnknownLevel { .. })
        ));
        assert!(matches!(
            encode(&two, &labels(&[("food", "pos"), ("noise", "neg"), ("decor", "pos")]), &set(&[])),
            Err(Error::UnknownAttribute(_))
        ));
    }

    #[test]
    fn schema_validation() {
        assert!(ConceptSchema::uniform(&["a", "a"], &LEVELS).is_err());
        assert!(ConceptSchema::uniform(&["a"], &["x"]).is_err());
        assert!(ConceptSchema::uniform(&["a"], &["x", "x"]).is_err());
        let s = ConceptSchema::uniform(&["a", "b"], &LEVELS).unwrap();
        assert_eq!(s.width(), 6);
        assert_eq!(s.block(1), 3..6);
    }

    #[test]
    fn intervene_examples() {
        let food = ConceptSchema::uniform(&["food"], &LEVELS).unwrap();
        let v = vec![0.0, 1.0, 0.0];
        assert_eq!(
            intervene(&food, &v, "food", "pos", &set(&[])).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
        assert_eq!(intervene(&food, &v, "food", "unk", &set(&[])).unwrap(), v);
        assert!(matches!(
            intervene(&food, &[], "food", "pos", &set(&["food"])),
            Err(Error::HiddenAttribute(_))
        ));
        assert!(matches!(
            intervene(&food, &v, "decor", "pos", &set(&[])),
            Err(Error::UnknownAttribute(_))
        ));
    }

    #[test]
    fn mask_widths() {
        let four = ConceptSchema::uniform(&["ambiance", "food", "noise", "service"], &LEVELS).unwrap();
        let s = Sample::new(
            "a",
            labels(&[("ambiance", "neg"), ("food", "pos"), ("noise", "unk"), ("service", "neg")]),
            vec![0.0],
            vec![0.0],
            None,
        );
        let ds = Dataset::new(four, vec![s], vec![]).unwrap();
        assert_eq!(ds.mask(&set(&[])).unwrap().visible_width(), 12);
        assert_eq!(ds.mask(&set(&["food"])).unwrap().visible_width(), 9);
        assert_eq!(ds.mask(&set(&["food", "noise"])).unwrap().visible_width(), 6);
        assert!(matches!(ds.mask(&set(&["decor"])), Err(Error::UnknownAttribute(_))));
        // masking leaves the shared storage alone
        let masked = ds.mask(&set(&["food"])).unwrap();
        assert_eq!(masked.samples()[0], ds.samples()[0]);
        assert!(ds.hidden().is_empty());
    }

    #[test]
    fn hidden_labels_are_fenced() {
        let two = ConceptSchema::uniform(&["food", "noise"], &LEVELS).unwrap();
        let s = Sample::new(
            "a",
            labels(&[("food", "pos"), ("noise", "neg")]),
            vec![1.0],
            vec![0.0, 1.0],
            None,
        );
        let ds = Dataset::new(two, vec![s], vec![]).unwrap().mask(&set(&["noise"])).unwrap();
        let s = &ds.samples()[0];
        assert!(matches!(ds.label(s, "noise"), Err(Error::HiddenAttribute(_))));
        assert_eq!(ds.label(s, "food").unwrap(), Some("pos"));
        assert_eq!(ds.visible_labels(s), labels(&[("food", "pos")]));
        assert_eq!(ds.encode_sample(s).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn probability_space_conversion() {
        let one = ConceptSchema::uniform(&["food"], &LEVELS).unwrap();
        let s = Sample::new("a", labels(&[("food", "pos")]), vec![1.0], vec![0.0, 0.0], None);
        let ds = Dataset::new(one, vec![s], vec![]).unwrap();
        let p = ds.in_space(OutputSpace::Probability).unwrap();
        assert_eq!(p.samples()[0].output, vec![0.5, 0.5]);
        assert_eq!(ds.samples()[0].output, vec![0.0, 0.0]);
        assert!(p.in_space(OutputSpace::Logit).is_err());
    }

    fn arb_schema() -> impl Strategy<Value = (ConceptSchema, Vec<usize>)> {
        prop::collection::vec(2usize..5, 2..5).prop_flat_map(|sizes| {
            let attrs: Vec<Attribute> = sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| Attribute {
                    name: format!("a{i}"),
                    levels: (0..n).map(|l| format!("l{l}")).collect(),
                })
                .collect();
            let schema = ConceptSchema::new(attrs).unwrap();
            let picks = sizes.iter().map(|&n| 0..n).collect::<Vec<_>>();
            (Just(schema), picks)
        })
    }

    proptest! {
        #[test]
        fn interventions_commute_and_stay_one_hot(
            (schema, picks) in arb_schema(),
            t1 in 0usize..4, t2 in 0usize..4,
        ) {
            let names: Vec<String> = schema.attributes().iter().map(|a| a.name.clone()).collect();
            let l: Labels = schema
                .attributes()
                .iter()
                .zip(&picks)
                .map(|(a, &p)| (a.name.clone(), a.levels[p].clone()))
                .collect();
            let hidden = BTreeSet::new();
            let v = encode(&schema, &l, &hidden).unwrap();
            let (a, b) = (&schema.attributes()[0], &schema.attributes()[1]);
            let la = &a.levels[t1 % a.levels.len()];
            let lb = &b.levels[t2 % b.levels.len()];
            let ab = intervene(&schema, &intervene(&schema, &v, &names[0], la, &hidden).unwrap(), &names[1], lb, &hidden).unwrap();
            let ba = intervene(&schema, &intervene(&schema, &v, &names[1], lb, &hidden).unwrap(), &names[0], la, &hidden).unwrap();
            prop_assert_eq!(&ab, &ba);
            for (_, block) in schema.visible_blocks(&hidden) {
                let ones: f64 = ab[block].iter().sum();
                prop_assert_eq!(ones, 1.0);
            }
        }
    }
}
