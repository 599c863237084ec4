use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::{info, warn};
use mcce::concepts::{Dataset, EditPair, OutputSpace};
use mcce::evaluation::{icace_error, macro_f1, EvalReport, Metric, RunMetadata};
use mcce::explainers::{
    fit_mcce, fit_slearner, global_report, pair_seed, predict_labels, ApproxIndex, EffectEstimate, Method,
    MccModel, SLearnerModel, SLearnerOptions,
};
use mcce::synthetic::{generate, make_pairs, SynthConfig, SynthGroundTruth};
use serde::{Deserialize, Serialize};

use crate::args::{DataArgs, EvaluateArgs, ExplainArgs, FitArgs, PredictArgs, ReportArgs, SynthArgs};
use crate::error::{invalid, CliResult};
use crate::fsio::{read_json, write_atomic, write_json, write_jsonl};

pub const SCHEMA_FILE: &str = "schema.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Space each method's effects live in unless overridden.
pub fn native_space(method: Method) -> OutputSpace {
    match method {
        Method::Slearner => OutputSpace::Probability,
        Method::Mcce | Method::Approx | Method::Oracle => OutputSpace::Logit,
    }
}

pub fn resolve_space(method: Method, requested: Option<OutputSpace>) -> CliResult<OutputSpace> {
    match (method, requested) {
        (Method::Slearner, Some(OutputSpace::Logit)) => {
            invalid("slearner produces probability-space effects; --space logit is not available")
        }
        (_, Some(space)) => Ok(space),
        (m, None) => Ok(native_space(m)),
    }
}

pub fn hidden_set(names: &[String]) -> BTreeSet<String> {
    names.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

pub fn load_dataset(data: &DataArgs, hidden: &BTreeSet<String>, space: OutputSpace) -> CliResult<Dataset> {
    let ds = Dataset::load(&data.schema, &data.samples, data.pairs.as_deref())?;
    Ok(ds.mask(hidden)?.in_space(space)?)
}

/// On-disk model: exactly one of the two model bodies is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub method: Method,
    /// Fitted to gold labels rather than black-box outputs.
    #[serde(default)]
    pub predictor: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcce: Option<MccModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slearner: Option<SLearnerModel>,
}

impl ModelFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let model: ModelFile = read_json(path)?;
        let ok = match model.method {
            Method::Mcce => model.mcce.is_some() && model.slearner.is_none(),
            Method::Slearner => model.slearner.is_some() && model.mcce.is_none() && !model.predictor,
            _ => false,
        };
        if !ok {
            return invalid(format!(
                "{}: model file does not hold a single {} model",
                path.display(),
                model.method
            ));
        }
        Ok(model)
    }

    pub fn hidden(&self) -> &BTreeSet<String> {
        match (&self.mcce, &self.slearner) {
            (Some(m), _) => &m.hidden,
            (_, Some(s)) => &s.hidden,
            _ => unreachable!("validated on load"),
        }
    }

    pub fn space(&self) -> OutputSpace {
        match (&self.mcce, &self.slearner) {
            (Some(m), _) => m.space,
            _ => OutputSpace::Probability,
        }
    }
}

/// Default pseudo-concept count: the visible width, capped by what the
/// embedding matrix can supply.
pub fn default_j(dataset: &Dataset) -> usize {
    dataset
        .visible_width()
        .min(dataset.embedding_dim())
        .min(dataset.len())
        .max(1)
}

pub fn fit_model(dataset: &Dataset, method: Method, j: Option<usize>, ridge: f64, predictor: bool) -> CliResult<ModelFile> {
    if dataset.visible_width() == 0 {
        return invalid("every attribute is hidden; nothing to fit on");
    }
    match method {
        Method::Mcce => {
            let targets = if predictor {
                dataset.gold_matrix()?
            } else {
                dataset.output_matrix()
            };
            let model = fit_mcce(dataset, &targets, j.unwrap_or_else(|| default_j(dataset)), ridge)?;
            Ok(ModelFile {
                method,
                predictor,
                mcce: Some(model),
                slearner: None,
            })
        }
        Method::Slearner => {
            if predictor {
                return invalid("predictor mode is only available for mcce");
            }
            if dataset.space() != OutputSpace::Probability {
                return invalid("slearner is fitted to probability-space outputs");
            }
            let model = fit_slearner(dataset, &dataset.output_matrix(), SLearnerOptions::default())?;
            if !model.converged {
                warn!(
                    "slearner stopped after {} iterations without reaching the gradient tolerance",
                    model.iterations
                );
            }
            Ok(ModelFile {
                method,
                predictor: false,
                mcce: None,
                slearner: Some(model),
            })
        }
        other => invalid(format!("{other} has no fitted model")),
    }
}

pub enum Explainer<'a> {
    Mcce(&'a MccModel),
    Slearner(&'a SLearnerModel),
    Approx { seed: u64, index: ApproxIndex<'a> },
    Oracle(&'a SynthGroundTruth),
}

impl Explainer<'_> {
    pub fn method(&self) -> Method {
        match self {
            Explainer::Mcce(_) => Method::Mcce,
            Explainer::Slearner(_) => Method::Slearner,
            Explainer::Approx { .. } => Method::Approx,
            Explainer::Oracle(_) => Method::Oracle,
        }
    }

    fn estimate(&self, dataset: &Dataset, pair: &EditPair, index: usize) -> CliResult<EffectEstimate> {
        let sample = dataset.sample_by_id(&pair.original_id)?;
        let est = match self {
            Explainer::Mcce(m) => m.explain(dataset, sample, &pair.attribute, &pair.to_level)?,
            Explainer::Slearner(m) => m.explain(dataset, sample, &pair.attribute, &pair.to_level)?,
            Explainer::Approx { seed, index: lookup } => {
                lookup.explain(sample, &pair.attribute, &pair.to_level, pair_seed(*seed, index))?
            }
            Explainer::Oracle(truth) => {
                let t = truth.pair(pair)?;
                EffectEstimate {
                    sample_id: pair.original_id.clone(),
                    attribute: pair.attribute.clone(),
                    from_level: pair.from_level.clone(),
                    to_level: pair.to_level.clone(),
                    effect: match dataset.space() {
                        OutputSpace::Logit => t.icace_logit.clone(),
                        OutputSpace::Probability => t.icace_probability.clone(),
                    },
                    method: Method::Oracle,
                    space: dataset.space(),
                    fallback: false,
                }
            }
        };
        Ok(est)
    }
}

pub struct Explained {
    pub effects: Vec<EffectEstimate>,
    /// The pairs that were estimated, in file order.
    pub pairs: Vec<EditPair>,
    /// Pairs editing a hidden attribute.
    pub skipped: usize,
}

/// Pairs whose edited attribute is visible, plus the number left out.
pub fn visible_pairs(dataset: &Dataset) -> (Vec<(usize, EditPair)>, usize) {
    let all = dataset.pairs();
    let kept: Vec<(usize, EditPair)> = all
        .iter()
        .enumerate()
        .filter(|(_, p)| dataset.is_visible(&p.attribute))
        .map(|(i, p)| (i, p.clone()))
        .collect();
    let skipped = all.len() - kept.len();
    (kept, skipped)
}

/// One estimate per visible pair, in pair order. The approx seed of a pair
/// depends on its position in the full pair list, not on the mask.
pub fn explain_pairs(dataset: &Dataset, explainer: &Explainer<'_>) -> CliResult<Explained> {
    let (kept, skipped) = visible_pairs(dataset);
    let mut effects = Vec::with_capacity(kept.len());
    for (i, p) in &kept {
        let est = explainer.estimate(dataset, p, *i).map_err(|e| {
            e.context(format!(
                "pair {} -> {} ({}: {} -> {})",
                p.original_id, p.edited_id, p.attribute, p.from_level, p.to_level
            ))
        })?;
        effects.push(est);
    }
    Ok(Explained {
        effects,
        pairs: kept.into_iter().map(|(_, p)| p).collect(),
        skipped,
    })
}

pub fn report_skipped(skipped: usize) {
    if skipped > 0 {
        warn!("skipped {skipped} pairs that edit a hidden attribute");
    }
}

fn mask_string(hidden: &BTreeSet<String>) -> String {
    hidden.iter().cloned().collect::<Vec<_>>().join(",")
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let mut config: SynthConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if config.n == 0 {
        return invalid("synthetic config needs n > 0");
    }
    let (dataset, mut truth) = generate(&config)?;
    let dataset = make_pairs(&dataset, &mut truth, &config, config.edits_per_sample)?;
    write_dataset(&dataset, &args.out)?;
    write_json(&args.out.join(GROUND_TRUTH_FILE), &truth)?;
    info!(
        "wrote {} samples and {} pairs to {}",
        dataset.len(),
        dataset.pairs().len(),
        args.out.display()
    );
    Ok(())
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> CliResult<()> {
    write_json(&dir.join(SCHEMA_FILE), dataset.schema())?;
    write_jsonl(&dir.join(SAMPLES_FILE), dataset.samples())?;
    write_jsonl(&dir.join(PAIRS_FILE), dataset.pairs())
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let method = args.method;
    if !matches!(method, Method::Mcce | Method::Slearner) {
        return invalid(format!("{method} has no fitted model; use `explain --method {method}`"));
    }
    if args.predictor && method != Method::Mcce {
        return invalid("predictor mode is only available for mcce");
    }
    if args.j == Some(0) {
        return invalid("--j must be at least 1");
    }
    if !(args.ridge >= 0.0 && args.ridge.is_finite()) {
        return invalid("--ridge must be finite and nonnegative");
    }
    let space = resolve_space(method, args.data.space)?;
    let hidden = hidden_set(&args.data.hidden);
    let dataset = load_dataset(&args.data, &hidden, space)?;
    let model = fit_model(&dataset, method, args.j, args.ridge, args.predictor)?;
    if let Some(m) = &model.mcce {
        let d = &m.diagnostics;
        println!("visible_width {}", m.visible_width());
        println!("j {}", m.j);
        println!("orthogonality_max {:e}", d.orthogonality);
        println!("residual_sos {:e}", d.residual_sos);
        println!("rank_observed {}", d.rank_observed);
        println!("rank_pseudo {}", d.rank_pseudo);
    }
    if let Some(s) = &model.slearner {
        println!("visible_width {}", s.weights.nrows());
        println!("iterations {}", s.iterations);
        println!("final_loss {:e}", s.final_loss);
        println!("converged {}", s.converged);
    }
    write_json(&args.out, &model)
}

pub fn cmd_explain(args: &ExplainArgs) -> CliResult<()> {
    let model = args.model.as_deref().map(ModelFile::load).transpose()?;
    let method = match (args.method, &model) {
        (Some(m), Some(file)) if m != file.method => {
            return invalid(format!("--method {m} does not match the {} model", file.method));
        }
        (Some(m), _) => m,
        (None, Some(file)) => file.method,
        (None, None) => return invalid("explain needs --model or --method"),
    };
    let (hidden, space) = match method {
        Method::Mcce | Method::Slearner => {
            let file = match &model {
                Some(f) => f,
                None => return invalid(format!("--method {method} needs --model")),
            };
            if file.predictor {
                return invalid("predictor-mode models do not explain black-box outputs");
            }
            let requested = hidden_set(&args.data.hidden);
            if !args.data.hidden.is_empty() && &requested != file.hidden() {
                return invalid(format!(
                    "--hidden {} differs from the model's mask {}",
                    mask_string(&requested),
                    mask_string(file.hidden())
                ));
            }
            if let Some(s) = args.data.space {
                if s != file.space() {
                    return invalid(format!("--space {s} differs from the model's space {}", file.space()));
                }
            }
            (file.hidden().clone(), file.space())
        }
        Method::Approx => {
            if args.seed.is_none() {
                return invalid("the approx method needs --seed");
            }
            (hidden_set(&args.data.hidden), resolve_space(method, args.data.space)?)
        }
        Method::Oracle => {
            if args.ground_truth.is_none() {
                return invalid("the oracle method needs --ground-truth");
            }
            (hidden_set(&args.data.hidden), resolve_space(method, args.data.space)?)
        }
    };
    if args.data.pairs.is_none() {
        return invalid("explain needs --pairs");
    }
    let truth: Option<SynthGroundTruth> = args.ground_truth.as_deref().map(read_json).transpose()?;
    let dataset = load_dataset(&args.data, &hidden, space)?;
    let explainer = match method {
        Method::Mcce => Explainer::Mcce(model.as_ref().and_then(|m| m.mcce.as_ref()).expect("checked")),
        Method::Slearner => Explainer::Slearner(model.as_ref().and_then(|m| m.slearner.as_ref()).expect("checked")),
        Method::Approx => Explainer::Approx {
            seed: args.seed.expect("checked"),
            index: ApproxIndex::new(&dataset)?,
        },
        Method::Oracle => Explainer::Oracle(truth.as_ref().expect("checked")),
    };
    let out = explain_pairs(&dataset, &explainer)?;
    report_skipped(out.skipped);
    let fallbacks = out.effects.iter().filter(|e| e.fallback).count();
    if fallbacks > 0 {
        info!("{fallbacks} approximate counterfactuals fell back to the nearest labels");
    }
    write_jsonl(&args.out, &out.effects)
}

/// Keeps the first occurrence of each value, in order.
pub fn unique<T: Copy + Ord>(values: &[T]) -> Vec<T> {
    let mut seen = BTreeSet::new();
    values.iter().copied().filter(|v| seen.insert(*v)).collect()
}

pub fn report_file_stem(metric: Metric) -> String {
    format!("icace_error_{metric}")
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    if args.data.pairs.is_none() {
        return invalid("evaluate needs --pairs");
    }
    if args.metric.is_empty() {
        return invalid("at least one --metric is required");
    }
    let effects: Vec<EffectEstimate> = mcce::concepts::read_jsonl(&args.effects)?;
    let methods: BTreeSet<Method> = effects.iter().map(|e| e.method).collect();
    if methods.len() > 1 {
        return invalid("effects file mixes several methods");
    }
    let effect_space = effects.first().map(|e| e.space);
    let space = args.data.space.or(effect_space).unwrap_or(OutputSpace::Logit);
    let hidden = hidden_set(&args.data.hidden);
    let dataset = load_dataset(&args.data, &hidden, space)?;
    let (kept, skipped) = visible_pairs(&dataset);
    report_skipped(skipped);
    let pairs: Vec<EditPair> = kept.into_iter().map(|(_, p)| p).collect();

    let mut config = BTreeMap::new();
    config.insert("pairs_skipped".to_string(), skipped.to_string());
    let metadata = RunMetadata {
        method: methods.into_iter().next(),
        mask: hidden.iter().cloned().collect(),
        seed: args.seed,
        space: Some(space),
        config,
    };
    for metric in unique(&args.metric) {
        let mut report = icace_error(&effects, &pairs, &dataset, metric)?;
        report.metadata = metadata.clone();
        write_report(&report, &args.out)?;
        println!("{metric} macro_mean {} macro_std {}", report.macro_mean, report.macro_std);
    }
    Ok(())
}

pub fn write_report(report: &EvalReport, dir: &Path) -> CliResult<()> {
    let stem = report_file_stem(report.metric);
    write_atomic(&dir.join(format!("{stem}.csv")), report.to_csv().as_bytes())?;
    write_json(&dir.join(format!("{stem}.json")), report)
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let model = ModelFile::load(&args.model)?;
    let Some(m) = &model.mcce else {
        return invalid(format!("report needs an mcce model, got {}", model.method));
    };
    let report = global_report(m, args.baseline_class)?;
    write_atomic(&args.out, report.to_csv().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<usize>,
}

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const SCORE_FILE: &str = "score.txt";

pub fn cmd_predict(args: &PredictArgs) -> CliResult<()> {
    let model = ModelFile::load(&args.model)?;
    let Some(m) = &model.mcce else {
        return invalid(format!("predict needs an mcce model, got {}", model.method));
    };
    let dataset = Dataset::load(&args.schema, &args.samples, None)?
        .mask(&m.hidden)?
        .in_space(m.space)?;
    if dataset.is_empty() {
        return invalid("cannot predict on an empty dataset");
    }
    let predicted = predict_labels(m, &dataset)?;
    let rows: Vec<Prediction> = dataset
        .samples()
        .iter()
        .zip(&predicted)
        .map(|(s, &p)| Prediction {
            id: s.id.clone(),
            predicted: p,
            gold: s.gold,
        })
        .collect();
    write_jsonl(&args.out.join(PREDICTIONS_FILE), &rows)?;

    let score_path = args.out.join(SCORE_FILE);
    let gold: Option<Vec<usize>> = rows.iter().map(|r| r.gold).collect();
    match gold {
        Some(gold) => {
            let f1 = macro_f1(&predicted, &gold, m.output_dim())?;
            println!("macro_f1 {f1}");
            write_atomic(&score_path, format!("macro_f1 {f1}\n").as_bytes())?;
        }
        None => {
            warn!("some samples have no gold label; macro-F1 omitted");
            if score_path.exists() {
                std::fs::remove_file(&score_path).map_err(|e| mcce::Error::io(&score_path, e))?;
            }
        }
    }
    Ok(())
}
