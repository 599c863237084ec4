//! Grid driver: every method under every one- and two-attribute mask, for
//! one or more seeds, summarized as mean and std across masks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use log::info;
use mcce::concepts::{ConceptSchema, Dataset, OutputSpace};
use mcce::evaluation::{icace_error, mean_std, EvalReport, Metric, RunMetadata};
use mcce::explainers::{ApproxIndex, Method};
use mcce::synthetic::{generate, make_pairs, SynthConfig, SynthGroundTruth};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::ExperimentArgs;
use crate::commands::{explain_pairs, fit_model, resolve_space, unique, write_report, Explainer};
use crate::error::{invalid, CliError, CliResult};
use crate::fsio::{read_json, write_atomic, write_json};

/// All single-attribute masks followed by all pairs, in schema order.
/// Masks that would hide every attribute are left out.
pub fn masks(schema: &ConceptSchema) -> Vec<BTreeSet<String>> {
    let names: Vec<String> = schema.attributes().iter().map(|a| a.name.clone()).collect();
    let n = names.len();
    let mut out: Vec<BTreeSet<String>> = Vec::new();
    if n > 1 {
        out.extend(names.iter().map(|a| [a.clone()].into_iter().collect()));
    }
    if n > 2 {
        for i in 0..n {
            for j in i + 1..n {
                out.push([names[i].clone(), names[j].clone()].into_iter().collect());
            }
        }
    }
    out
}

pub fn mask_label(mask: &BTreeSet<String>) -> String {
    mask.iter().cloned().collect::<Vec<_>>().join("+")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub method: Method,
    pub seed: u64,
    pub mask: Vec<String>,
    pub space: OutputSpace,
    pub metric: Metric,
    pub macro_mean: f64,
    pub macro_std: f64,
    pub pairs_evaluated: usize,
    pub pairs_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub method: Method,
    pub space: OutputSpace,
    pub metric: Metric,
    pub seed: u64,
    /// Mean and population std of the run macro-means across masks.
    pub mean: f64,
    pub std: f64,
    pub masks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub space: OutputSpace,
    pub metric: Metric,
    /// Mean and population std of the per-seed means across seeds.
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: BTreeMap<String, String>,
    pub runs: Vec<RunRow>,
    pub per_seed: Vec<SeedSummary>,
    pub across_seeds: Vec<MethodSummary>,
}

impl ExperimentSummary {
    pub fn across(&self, method: Method, metric: Metric) -> Option<&MethodSummary> {
        self.across_seeds.iter().find(|s| s.method == method && s.metric == metric)
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from("method,seed,mask,space,metric,macro_mean,macro_std,pairs_evaluated,pairs_skipped\n");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.method,
                r.seed,
                r.mask.join("+"),
                r.space,
                r.metric,
                r.macro_mean,
                r.macro_std,
                r.pairs_evaluated,
                r.pairs_skipped
            );
        }
        out
    }

    pub fn per_seed_csv(&self) -> String {
        let mut out = String::from("method,space,metric,seed,mean,std,masks\n");
        for r in &self.per_seed {
            let _ = writeln!(out, "{},{},{},{},{},{},{}", r.method, r.space, r.metric, r.seed, r.mean, r.std, r.masks);
        }
        out
    }

    pub fn across_seeds_csv(&self) -> String {
        let mut out = String::from("method,space,metric,mean,std,seeds\n");
        for r in &self.across_seeds {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.method, r.space, r.metric, r.mean, r.std, r.seeds);
        }
        out
    }

    /// Method x metric table of `mean ± std` across masks, both averaged
    /// over seeds.
    pub fn table(&self) -> String {
        let metrics: Vec<Metric> = unique(&self.across_seeds.iter().map(|s| s.metric).collect::<Vec<_>>());
        let methods: Vec<Method> = unique(&self.across_seeds.iter().map(|s| s.method).collect::<Vec<_>>());
        let mut out = format!("{:<10} {:<12}", "method", "space");
        for m in &metrics {
            let _ = write!(out, " {:>22}", m.as_str());
        }
        out.push('\n');
        for method in methods {
            let space = self
                .across_seeds
                .iter()
                .find(|s| s.method == method)
                .map(|s| s.space.to_string())
                .unwrap_or_default();
            let _ = write!(out, "{:<10} {:<12}", method.as_str(), space);
            for metric in &metrics {
                let cells: Vec<&SeedSummary> = self
                    .per_seed
                    .iter()
                    .filter(|s| s.method == method && s.metric == *metric)
                    .collect();
                let mean = mean_std(&cells.iter().map(|c| c.mean).collect::<Vec<_>>()).0;
                let std = mean_std(&cells.iter().map(|c| c.std).collect::<Vec<_>>()).0;
                let _ = write!(out, " {:>22}", format!("{mean:.4} ± {std:.4}"));
            }
            out.push('\n');
        }
        out
    }
}

struct Child {
    method: Method,
    seed_index: usize,
    mask: BTreeSet<String>,
}

struct ChildOutput {
    rows: Vec<RunRow>,
    reports: Vec<EvalReport>,
}

struct SeedData {
    seed: u64,
    dataset: Dataset,
    truth: Option<SynthGroundTruth>,
}

fn validate(args: &ExperimentArgs) -> CliResult<()> {
    if args.config.is_none() && args.schema.is_none() {
        return invalid("experiment needs --config or --schema/--samples/--pairs");
    }
    if args.methods.is_empty() {
        return invalid("--methods is empty");
    }
    if args.metric.is_empty() {
        return invalid("at least one --metric is required");
    }
    for &m in &args.methods {
        resolve_space(m, args.space)?;
        if m == Method::Oracle && args.config.is_none() {
            return invalid("the oracle method needs a generator --config");
        }
    }
    if args.j == Some(0) {
        return invalid("--j must be at least 1");
    }
    if !(args.ridge >= 0.0 && args.ridge.is_finite()) {
        return invalid("--ridge must be finite and nonnegative");
    }
    if args.jobs == Some(0) {
        return invalid("--jobs must be at least 1");
    }
    Ok(())
}

fn load_seeds(args: &ExperimentArgs) -> CliResult<Vec<SeedData>> {
    if let Some(path) = &args.config {
        let config: SynthConfig = read_json(path)?;
        if config.n == 0 {
            return invalid("synthetic config needs n > 0");
        }
        let seeds = if args.seed.is_empty() { vec![config.seed] } else { unique(&args.seed) };
        seeds
            .into_iter()
            .map(|seed| {
                let config = SynthConfig {
                    seed,
                    // masks are applied per run
                    hidden: Vec::new(),
                    ..config.clone()
                };
                let (dataset, mut truth) = generate(&config)?;
                let dataset = make_pairs(&dataset, &mut truth, &config, config.edits_per_sample)?;
                Ok(SeedData {
                    seed,
                    dataset,
                    truth: Some(truth),
                })
            })
            .collect()
    } else {
        let schema = args.schema.as_deref().expect("validated");
        let samples = args.samples.as_deref().expect("required with --schema");
        let dataset = Dataset::load(schema, samples, args.pairs.as_deref())?;
        let seeds = if args.seed.is_empty() { vec![0] } else { unique(&args.seed) };
        Ok(seeds
            .into_iter()
            .map(|seed| SeedData {
                seed,
                dataset: dataset.clone(),
                truth: None,
            })
            .collect())
    }
}

fn run_child(args: &ExperimentArgs, data: &SeedData, child: &Child, metrics: &[Metric]) -> CliResult<ChildOutput> {
    let space = resolve_space(child.method, args.space)?;
    let dataset = data.dataset.mask(&child.mask)?.in_space(space)?;
    let model = match child.method {
        Method::Mcce | Method::Slearner => Some(fit_model(&dataset, child.method, args.j, args.ridge, false)?),
        _ => None,
    };
    let explainer = match child.method {
        Method::Mcce => Explainer::Mcce(model.as_ref().and_then(|m| m.mcce.as_ref()).expect("fitted")),
        Method::Slearner => Explainer::Slearner(model.as_ref().and_then(|m| m.slearner.as_ref()).expect("fitted")),
        Method::Approx => Explainer::Approx {
            seed: data.seed,
            index: ApproxIndex::new(&dataset)?,
        },
        Method::Oracle => Explainer::Oracle(data.truth.as_ref().expect("validated")),
    };
    let explained = explain_pairs(&dataset, &explainer)?;

    let mut config = BTreeMap::new();
    if let Some(m) = model.as_ref().and_then(|m| m.mcce.as_ref()) {
        config.insert("j".to_string(), m.j.to_string());
        config.insert("ridge".to_string(), m.ridge.to_string());
    }
    config.insert("pairs_skipped".to_string(), explained.skipped.to_string());
    let metadata = RunMetadata {
        method: Some(child.method),
        mask: child.mask.iter().cloned().collect(),
        seed: Some(data.seed),
        space: Some(space),
        config,
    };

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &metric in metrics {
        let mut report = icace_error(&explained.effects, &explained.pairs, &dataset, metric)?;
        report.metadata = metadata.clone();
        rows.push(RunRow {
            method: child.method,
            seed: data.seed,
            mask: child.mask.iter().cloned().collect(),
            space,
            metric,
            macro_mean: report.macro_mean,
            macro_std: report.macro_std,
            pairs_evaluated: report.pairs_evaluated,
            pairs_skipped: explained.skipped,
        });
        reports.push(report);
    }
    Ok(ChildOutput { rows, reports })
}

/// Runs the grid in memory. Per-run reports are written under `out/runs`
/// when `out` is given.
pub fn run_experiment(args: &ExperimentArgs, out: Option<&Path>) -> CliResult<ExperimentSummary> {
    validate(args)?;
    let methods = unique(&args.methods);
    let metrics = unique(&args.metric);
    let seeds = load_seeds(args)?;

    let mut children = Vec::new();
    for (seed_index, data) in seeds.iter().enumerate() {
        for &method in &methods {
            for mask in masks(data.dataset.schema()) {
                children.push(Child {
                    method,
                    seed_index,
                    mask,
                });
            }
        }
    }
    info!("running {} child runs", children.len());

    let run_all = || -> Vec<CliResult<ChildOutput>> {
        children
            .par_iter()
            .map(|c| run_child(args, &seeds[c.seed_index], c, &metrics))
            .collect()
    };
    let results = match args.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Validation(format!("cannot start {n} worker threads: {e}")))?
            .install(run_all),
        None => run_all(),
    };

    let mut runs = Vec::new();
    for (child, result) in children.iter().zip(results) {
        let seed = seeds[child.seed_index].seed;
        let output = result.map_err(|e| {
            e.context(format!(
                "run failed for method {}, mask [{}], seed {seed}",
                child.method,
                mask_label(&child.mask)
            ))
        })?;
        if let Some(dir) = out {
            let run_dir = dir
                .join("runs")
                .join(child.method.as_str())
                .join(format!("seed_{seed}"))
                .join(mask_label(&child.mask));
            for report in &output.reports {
                write_report(report, &run_dir)?;
            }
        }
        runs.extend(output.rows);
    }

    let mut per_seed = Vec::new();
    let mut across_seeds = Vec::new();
    for &method in &methods {
        let space = resolve_space(method, args.space)?;
        for &metric in &metrics {
            let mut seed_means = Vec::new();
            for data in &seeds {
                let values: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.method == method && r.metric == metric && r.seed == data.seed)
                    .map(|r| r.macro_mean)
                    .collect();
                let (mean, std) = mean_std(&values);
                seed_means.push(mean);
                per_seed.push(SeedSummary {
                    method,
                    space,
                    metric,
                    seed: data.seed,
                    mean,
                    std,
                    masks: values.len(),
                });
            }
            let (mean, std) = mean_std(&seed_means);
            across_seeds.push(MethodSummary {
                method,
                space,
                metric,
                mean,
                std,
                seeds: seed_means.len(),
            });
        }
    }

    let mut config = BTreeMap::new();
    config.insert("methods".to_string(), methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","));
    config.insert("metrics".to_string(), metrics.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","));
    config.insert(
        "seeds".to_string(),
        seeds.iter().map(|s| s.seed.to_string()).collect::<Vec<_>>().join(","),
    );
    config.insert("j".to_string(), args.j.map_or("visible_width".to_string(), |j| j.to_string()));
    config.insert("ridge".to_string(), args.ridge.to_string());
    if let Some(space) = args.space {
        config.insert("space".to_string(), space.to_string());
    }
    Ok(ExperimentSummary {
        config,
        runs,
        per_seed,
        across_seeds,
    })
}

pub fn cmd_experiment(args: &ExperimentArgs) -> CliResult<()> {
    let summary = run_experiment(args, Some(&args.out))?;
    write_atomic(&args.out.join("runs.csv"), summary.runs_csv().as_bytes())?;
    write_atomic(&args.out.join("summary.csv"), summary.per_seed_csv().as_bytes())?;
    write_atomic(&args.out.join("summary_seeds.csv"), summary.across_seeds_csv().as_bytes())?;
    write_json(&args.out.join("summary.json"), &summary)?;
    print!("{}", summary.table());
    Ok(())
}
