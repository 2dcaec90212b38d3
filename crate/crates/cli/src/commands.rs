//! Subcommand implementations. Each writes its artifacts under `out_dir`
//! and returns a summary of what it produced.

use std::path::{Path, PathBuf};

use gcnx_core::checkpoint::Checkpoint;
use gcnx_core::datasets::{load_csv, split, synth_motif_set, LabeledSet, SplitSpec};
use gcnx_core::explainers::{explain, normalize_pair, Explainer, Method};
use gcnx_core::graph::AttributedGraph;
use gcnx_core::metrics::{metric_suite, MetricReport, Thresholds};
use gcnx_core::miner::{mine, MiningConfig, MiningReport, MiningSample};
use gcnx_core::model::{forward, ModelParams};
use gcnx_core::smiles::{featurize, FeaturizationScheme};
use gcnx_core::train::{evaluate, train, Evaluation, TrainConfig};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{DataArgs, ExplainArgs, MetricsArgs, MineArgs, Part, TrainArgs};
use crate::error::{CliError, CliResult};
use crate::provenance::{file_digest, read, write, RunStamp};
use crate::render;

fn parse_list<T, F: Fn(&str) -> Option<T>>(text: &str, what: &str, parse: F) -> CliResult<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| CliError::Usage(format!("bad {what} entry '{s}' in '{text}'"))))
        .collect()
}

fn split_spec(d: &DataArgs) -> CliResult<SplitSpec> {
    let ratios = parse_list(&d.split, "--split", |s| s.parse::<f64>().ok())?;
    let ratios: [f64; 3] = ratios
        .try_into()
        .map_err(|_| CliError::Usage(format!("--split needs three fractions, got '{}'", d.split)))?;
    let spec = SplitSpec {
        ratios,
        seed: d.seed,
        stratified: d.stratified,
    };
    spec.validate()?;
    Ok(spec)
}

fn load_set(d: &DataArgs) -> CliResult<LabeledSet> {
    if let Some(rest) = d.data.strip_prefix("synth:") {
        let (motif, n) = rest
            .rsplit_once(':')
            .ok_or_else(|| CliError::Usage(format!("expected synth:<motif>:<n>, got '{}'", d.data)))?;
        let n: usize = n
            .parse()
            .map_err(|_| CliError::Usage(format!("bad molecule count in '{}'", d.data)))?;
        return synth_motif_set(n, motif, d.seed).map_err(|e| CliError::Usage(e.to_string()));
    }
    let path = Path::new(&d.data);
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    let set = load_csv(path, &d.smiles_column, &d.task_column, d.id_column.as_deref())?;
    if set.skipped > 0 {
        log::warn!("{}: {} rows with unparseable SMILES skipped", d.data, set.skipped);
    }
    Ok(set)
}

fn select(set: &LabeledSet, d: &DataArgs, part: Part) -> CliResult<LabeledSet> {
    let index = match part {
        Part::All => return Ok(set.clone()),
        Part::Train => 0,
        Part::Validation => 1,
        Part::Test => 2,
    };
    let parts = split(set, &split_spec(d)?)?;
    Ok(parts.into_iter().nth(index).expect("three parts"))
}

fn data_facts(set: &LabeledSet) -> Value {
    let [neg, pos] = set.class_counts();
    json!({
        "source": set.provenance,
        "molecules": set.len(),
        "positives": pos,
        "negatives": neg,
        "skipped_rows": set.skipped,
        "blank_labels": set.dropped_blank,
    })
}

const SPLIT_NOTE: &str = "random split (seeded); scaffold split not provided";

// ---------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub best_epoch: usize,
    pub test: Option<Evaluation>,
    pub stamp: RunStamp,
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<TrainSummary> {
    let layer_sizes = parse_list(&a.layers, "--layers", |s| s.parse::<usize>().ok())?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        layer_sizes,
        seed: a.data.seed,
        class_weighting: !a.unweighted,
        batch_size: a.batch_size,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let spec = split_spec(&a.data)?;
    let stamp = RunStamp::new("train", a, json!({}), a.data.seed)?;

    let set = load_set(&a.data)?;
    let [tr, va, te] = split(&set, &spec)?;
    let validation = va.examples();
    let outcome = train(
        &tr.examples(),
        (!validation.is_empty()).then_some(validation.as_slice()),
        &cfg,
    )?;
    let test = if te.is_empty() {
        None
    } else {
        Some(evaluate(&outcome.params, &te.examples())?)
    };

    let mut checkpoint = Checkpoint::new(&outcome.params, FeaturizationScheme::default(), cfg);
    let p = &mut checkpoint.provenance;
    p.insert("tool_version".into(), json!(stamp.tool_version));
    p.insert("config_hash".into(), json!(stamp.config_hash));
    p.insert("config".into(), stamp.config.clone());
    p.insert("data".into(), data_facts(&set));
    p.insert("split".into(), json!({ "note": SPLIT_NOTE, "sizes": [tr.len(), va.len(), te.len()] }));
    p.insert("best_epoch".into(), json!(outcome.best_epoch));
    p.insert("test".into(), serde_json::to_value(&test)?);
    let checkpoint_path = a.checkpoint.clone().unwrap_or_else(|| a.data.out_dir.join("checkpoint.json"));
    write(&checkpoint_path, checkpoint.to_json()?)?;

    let mut log = String::new();
    let mut line = |v: Value| -> CliResult<()> {
        log.push_str(&serde_json::to_string(&v)?);
        log.push('\n');
        Ok(())
    };
    line(json!({ "kind": "header", "stamp": &stamp, "data": data_facts(&set), "split": SPLIT_NOTE }))?;
    for epoch in &outcome.log {
        let mut v = serde_json::to_value(epoch)?;
        v["kind"] = json!("epoch");
        line(v)?;
    }
    line(json!({
        "kind": "result",
        "best_epoch": outcome.best_epoch,
        "test_molecules": te.len(),
        "test_accuracy": test.as_ref().map(|t| t.accuracy),
        "test_roc_auc": test.as_ref().and_then(|t| t.roc_auc),
        "test_pr_auc": test.as_ref().and_then(|t| t.pr_auc),
    }))?;
    let log_path = a.data.out_dir.join("train_log.jsonl");
    write(&log_path, log)?;

    Ok(TrainSummary {
        checkpoint: checkpoint_path,
        log: log_path,
        best_epoch: outcome.best_epoch,
        test,
        stamp,
    })
}

// ------------------------------------------------------ shared model setup

struct Loaded {
    params: ModelParams,
    scheme: FeaturizationScheme,
    digest: String,
}

fn load_model(path: &Path) -> CliResult<Loaded> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Usage(format!("{} is not UTF-8", path.display())))?;
    let checkpoint = Checkpoint::from_json(&text)?;
    Ok(Loaded {
        params: checkpoint.params()?,
        scheme: checkpoint.featurization.clone(),
        digest: file_digest(path)?,
    })
}

fn graphs(set: &LabeledSet, scheme: &FeaturizationScheme) -> Vec<AttributedGraph> {
    set.entries.par_iter().map(|e| featurize(&e.molecule, scheme)).collect()
}

fn parse_methods(text: &str, params: &ModelParams) -> CliResult<Vec<Method>> {
    let methods = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err(CliError::Usage("no explanation methods given".into()));
    }
    for m in &methods {
        if let Method::GradCam { layer: Some(l) } = m {
            if *l == 0 || *l > params.n_layers() {
                return Err(CliError::Usage(format!("{m}: the model has layers 1..={}", params.n_layers())));
            }
        }
    }
    Ok(methods)
}

fn unit_interval(name: &str, v: f64) -> CliResult<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{name} must lie in [0, 1], got {v}")))
    }
}

// -------------------------------------------------------------- explain

#[derive(Serialize)]
struct HeatmapRecord<'a> {
    molecule_id: &'a str,
    smiles: &'a str,
    method: String,
    class: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    layer: Option<usize>,
    values: &'a [f64],
    normalized: bool,
}

#[derive(Debug, Clone)]
pub struct ExplainSummary {
    pub heatmaps: PathBuf,
    pub records: usize,
    pub renderings: Vec<PathBuf>,
    pub stamp: RunStamp,
}

fn file_stem(index: usize, id: &str, method: &Method) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect()
    };
    format!("{index:05}_{}_{}", clean(id), clean(&method.to_string()))
}

pub fn cmd_explain(a: &ExplainArgs) -> CliResult<ExplainSummary> {
    let model = load_model(&a.checkpoint)?;
    let methods = parse_methods(&a.methods, &model.params)?;
    let stamp = RunStamp::new("explain", a, json!({ "checkpoint_sha256": model.digest }), a.data.seed)?;
    let set = select(&load_set(&a.data)?, &a.data, a.part)?;
    let graphs = graphs(&set, &model.scheme);
    let n_layers = model.params.n_layers();

    type PerMolecule = Vec<(Method, [Vec<f64>; 2], [bool; 2])>;
    let maps: Vec<PerMolecule> = graphs
        .par_iter()
        .map(|g| {
            let trace = forward(g, &model.params)?;
            methods
                .iter()
                .map(|&m| {
                    let h0 = explain(m, &trace, g, &model.params, 0)?;
                    let h1 = explain(m, &trace, g, &model.params, 1)?;
                    let (h0, h1) = normalize_pair(&h0, &h1);
                    Ok((m, [h0.values, h1.values], [h0.normalized, h1.normalized]))
                })
                .collect::<gcnx_core::Result<PerMolecule>>()
        })
        .collect::<gcnx_core::Result<_>>()?;

    let mut out = serde_json::to_string(&json!({ "kind": "header", "stamp": &stamp, "data": data_facts(&set) }))?;
    out.push('\n');
    let mut records = 0;
    for (entry, per_method) in set.entries.iter().zip(&maps) {
        for (method, values, normalized) in per_method {
            let layer = match method {
                Method::GradCam { layer } => Some(layer.unwrap_or(n_layers)),
                _ => None,
            };
            for class in 0..2 {
                let record = HeatmapRecord {
                    molecule_id: &entry.id,
                    smiles: &entry.molecule.source,
                    method: method.to_string(),
                    class,
                    layer,
                    values: &values[class],
                    normalized: normalized[class],
                };
                out.push_str(&serde_json::to_string(&record)?);
                out.push('\n');
                records += 1;
            }
        }
    }
    let heatmaps = a.data.out_dir.join("heatmaps.jsonl");
    write(&heatmaps, out)?;

    let mut renderings = Vec::new();
    if a.render {
        let dir = a.data.out_dir.join("render");
        for (index, (entry, per_method)) in set.entries.iter().zip(&maps).enumerate() {
            for (method, values, _) in per_method {
                let stem = file_stem(index, &entry.id, method);
                let title = format!("{} {}", entry.id, method);
                let panels = [values[0].as_slice(), values[1].as_slice()];
                let svg_path = dir.join(format!("{stem}.svg"));
                write(&svg_path, render::svg(&entry.molecule, &title, panels, a.data.seed ^ index as u64))?;
                write(&dir.join(format!("{stem}.dot")), render::dot(&entry.molecule, &title, panels))?;
                renderings.push(svg_path);
            }
        }
    }
    Ok(ExplainSummary {
        heatmaps,
        records,
        renderings,
        stamp,
    })
}

// -------------------------------------------------------------- metrics

#[derive(Debug, Clone)]
pub struct MetricsSummary {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub reports: Vec<MetricReport>,
    pub stamp: RunStamp,
}

pub fn cmd_metrics(a: &MetricsArgs) -> CliResult<MetricsSummary> {
    let model = load_model(&a.checkpoint)?;
    let methods = parse_methods(&a.methods, &model.params)?;
    let explainers: Vec<&dyn Explainer> = methods.iter().map(|m| m as &dyn Explainer).collect();
    metrics_with(a, &explainers)
}

/// Like [`cmd_metrics`] but scoring caller-supplied explainers instead of `--methods`.
pub fn metrics_with(a: &MetricsArgs, explainers: &[&dyn Explainer]) -> CliResult<MetricsSummary> {
    unit_interval("--fidelity-threshold", a.fidelity_threshold)?;
    unit_interval("--binarize-threshold", a.binarize_threshold)?;
    let model = load_model(&a.checkpoint)?;
    let labels: Vec<String> = explainers.iter().map(|e| e.label()).collect();
    let stamp = RunStamp::new(
        "metrics",
        a,
        json!({ "checkpoint_sha256": model.digest, "explainers": labels }),
        a.data.seed,
    )?;
    let full = load_set(&a.data)?;
    let set = select(&full, &a.data, a.part)?;
    let graphs = graphs(&set, &model.scheme);
    let data: Vec<(&AttributedGraph, usize)> = graphs.iter().zip(&set.entries).map(|(g, e)| (g, e.label)).collect();
    let thresholds = Thresholds {
        fidelity: a.fidelity_threshold,
        binarize: a.binarize_threshold,
    };
    let reports = metric_suite(&model.params, &data, explainers, thresholds)?;

    let mut csv = stamp.comment_lines()?;
    csv.push_str(&format!("# split={SPLIT_NOTE}; part={}\n", a.part.as_str()));
    csv.push_str(&format!(
        "# molecules={}; skipped_rows={}; blank_labels={}\n",
        set.len(),
        full.skipped,
        full.dropped_blank
    ));
    csv.push_str("method,fidelity,contrastivity,contrastivity_std,sparsity,sparsity_std,n_molecules,n_degenerate\n");
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.method,
            r.fidelity,
            r.contrastivity_mean,
            r.contrastivity_std,
            r.sparsity_mean,
            r.sparsity_std,
            r.n_molecules,
            r.n_degenerate
        ));
    }
    let csv_path = a.data.out_dir.join("metrics.csv");
    write(&csv_path, csv)?;
    let json_path = a.data.out_dir.join("metrics.json");
    let doc = json!({
        "stamp": &stamp,
        "split": SPLIT_NOTE,
        "part": a.part,
        "data": data_facts(&full),
        "evaluated_molecules": set.len(),
        "methods": &reports,
    });
    write(&json_path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(MetricsSummary {
        csv: csv_path,
        json: json_path,
        reports,
        stamp,
    })
}

// ----------------------------------------------------------------- mine

#[derive(Debug, Clone)]
pub struct MineSummary {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub report: MiningReport,
    pub stamp: RunStamp,
}

pub fn cmd_mine(a: &MineArgs) -> CliResult<MineSummary> {
    unit_interval("--tau", a.tau)?;
    let model = load_model(&a.checkpoint)?;
    let method = match parse_methods(&a.method, &model.params)?.as_slice() {
        [m] => *m,
        _ => return Err(CliError::Usage("--method takes exactly one method".into())),
    };
    let stamp = RunStamp::new("mine", a, json!({ "checkpoint_sha256": model.digest }), a.data.seed)?;
    let full = load_set(&a.data)?;
    let set = select(&full, &a.data, a.part)?;
    let graphs = graphs(&set, &model.scheme);

    let explained: Vec<(usize, Vec<f64>)> = graphs
        .par_iter()
        .map(|g| {
            let trace = forward(g, &model.params)?;
            let h0 = explain(method, &trace, g, &model.params, 0)?;
            let h1 = explain(method, &trace, g, &model.params, 1)?;
            Ok((trace.predicted_class(), normalize_pair(&h0, &h1).1.values))
        })
        .collect::<gcnx_core::Result<_>>()?;
    let samples: Vec<MiningSample> = set
        .entries
        .iter()
        .zip(&explained)
        .map(|(e, (predicted, heat))| MiningSample {
            molecule: &e.molecule,
            label: e.label,
            predicted: *predicted,
            heatmap: heat,
        })
        .collect();
    let cfg = MiningConfig {
        tau: a.tau,
        min_occurrence: a.min_occurrence,
        top_k: a.top_k,
        true_positives_only: !a.all_predictions,
    };
    let report = mine(&samples, &cfg)?;

    let mut csv = stamp.comment_lines()?;
    csv.push_str(&format!(
        "# method={method}; qualifying_molecules={}; candidates={}; skipped_rows={}\n",
        report.n_qualifying_molecules, report.n_candidates, full.skipped
    ));
    csv.push_str("rank,key,rendering,node_count,n_e,n_p,n_n,r_e,r_p\n");
    for (rank, r) in report.records.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            rank + 1,
            r.subgraph.key_hex(),
            r.subgraph.rendering,
            r.subgraph.node_count,
            r.n_explained,
            r.n_pos,
            r.n_neg,
            r.r_e,
            r.r_p
        ));
    }
    csv.push_str(&format!("# average_r_p={}\n", report.average_r_p));
    let csv_path = a.data.out_dir.join("mining.csv");
    write(&csv_path, csv)?;
    let json_path = a.data.out_dir.join("mining.json");
    let doc = json!({ "stamp": &stamp, "method": method.to_string(), "data": data_facts(&full), "report": &report });
    write(&json_path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(MineSummary {
        csv: csv_path,
        json: json_path,
        report,
        stamp,
    })
}
