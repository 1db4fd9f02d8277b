use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::io::{content_hash, parse_adjacency, parse_counts, parse_series, phase_columns, read_input, CsvTable};
use super::{Command, Output, ReportFormat, RunConfig, AVERAGE_METHOD, THREADS_ENV};
use crate::detection::{alarms_from, average_baseline, filter_panel, lead_time_report, AlarmRecord};
use crate::error::{FluError, Result};
use crate::forecast::{compute_dic, evaluate, fit_ar, forecast_ar, rolling_forecast, Evaluation, ForecastRecord};
use crate::model::{compute_growth, ModelVariant, ObservationPanel, PhaseScheme, RegionGraph, GROWTH_FLOOR};
use crate::sampler::{chain_diagnostics, run_chain, PhaseMarginals, Sampler};
use crate::synthetic::{generate_panel, ScenarioSpec};

const PROBABILITY_HEADER: [&str; 8] = ["region", "date", "p_ne", "p_re", "p_se", "p_de", "p_epidemic", "map_phase"];

/// Input files read by a command, hashed as they are loaded.
#[derive(Default)]
struct Inputs {
    hashes: BTreeMap<&'static str, String>,
}

impl Inputs {
    fn load(&mut self, role: &'static str, path: Option<&PathBuf>) -> Result<Vec<u8>> {
        let path = path.ok_or_else(|| FluError::Config(format!("--{role} is required")))?;
        let bytes = read_input(path)?;
        self.hashes.insert(role, content_hash(&bytes));
        Ok(bytes)
    }

    fn panel(&mut self, role: &'static str, path: Option<&PathBuf>) -> Result<ObservationPanel> {
        parse_counts(&self.load(role, path)?).map_err(|e| in_file(role, path, e))
    }

    /// The border graph; only spatial variants insist on an adjacency file.
    fn graph(&mut self, config: &RunConfig, panel: &ObservationPanel, spatial: bool) -> Result<RegionGraph> {
        match &config.adjacency {
            Some(path) => {
                parse_adjacency(&self.load("adjacency", Some(path))?, panel).map_err(|e| in_file("adjacency", Some(path), e))
            }
            None if spatial => Err(FluError::Config("--adjacency is required for spatial variants".into())),
            None => Ok(RegionGraph::edgeless(panel.n_regions())),
        }
    }
}

/// Prefix parse errors with the file they came from.
fn in_file(role: &str, path: Option<&PathBuf>, err: FluError) -> FluError {
    let name = path.map_or_else(|| role.to_string(), |p| p.display().to_string());
    match err {
        FluError::Parse { line, message } => FluError::Parse { line, message: format!("{name}: {message}") },
        FluError::InvalidInput(m) => FluError::InvalidInput(format!("{name}: {m}")),
        other => other,
    }
}

fn report(command: Command, config: &RunConfig, seed: u64, variant: &str, inputs: &Inputs, result: Value) -> Result<Output> {
    let body = json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "variant": variant,
        "config": config.echo(),
        "inputs": inputs.hashes,
        "result": result,
    });
    let mut bytes = match config.report_format {
        ReportFormat::Pretty => serde_json::to_vec_pretty(&body),
        ReportFormat::Compact => serde_json::to_vec(&body),
    }
    .map_err(|e| FluError::InvalidState(format!("report serialisation: {e}")))?;
    bytes.push(b'\n');
    Ok(Output { name: "report.json", bytes })
}

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| FluError::InvalidState(format!("report serialisation: {e}")))
}

fn require_model(config: &RunConfig, command: Command) -> Result<ModelVariant> {
    config.model_variant()?.ok_or_else(|| {
        FluError::Config(format!("variant `{AVERAGE_METHOD}` only applies to detect, not {}", command.name()))
    })
}

pub(crate) fn execute(command: Command, config: &RunConfig) -> Result<Vec<Output>> {
    match command {
        Command::Fit => fit(config),
        Command::Detect => detect(config),
        Command::Forecast => forecast(config),
        Command::Simulate => simulate(config),
        Command::Evaluate => evaluate_files(config),
        Command::Dic => dic(config),
    }
}

fn marginal_rows(table: &mut CsvTable, panel: &ObservationPanel, m: &PhaseMarginals, scheme: PhaseScheme) {
    for i in 0..m.n_regions {
        for t in 0..m.n_steps {
            let p = m.get(i, t);
            let [ne, re, se, de] = phase_columns(scheme, p);
            let date = panel.dates()[t + 1].to_string();
            let epidemic = super::io::fmt_prob((1.0 - p[0]).clamp(0.0, 1.0));
            let map = scheme.name(m.map_phase(i, t));
            table.row([panel.region_ids()[i].as_str(), &date, &ne, &re, &se, &de, &epidemic, map]);
        }
    }
}

fn fit(config: &RunConfig) -> Result<Vec<Output>> {
    let variant = require_model(config, Command::Fit)?;
    let mut inputs = Inputs::default();
    let panel = inputs.panel("counts", config.counts.as_ref())?;
    let graph = inputs.graph(config, &panel, variant.spatial)?;
    let (trace, summary) = run_chain(&panel, &graph, &config.hyper, &variant, &config.chain)?;
    let diagnostics = chain_diagnostics(&trace)?;
    let mut phases = CsvTable::new(&PROBABILITY_HEADER);
    marginal_rows(&mut phases, &panel, &trace.phase_marginals, trace.variant.scheme);
    let mut summary = to_value(&summary)?;
    if let Value::Object(map) = &mut summary {
        map.remove("phase_marginals");
    }
    let result = json!({
        "regions": panel.region_ids(),
        "first_date": panel.dates()[0],
        "days": panel.n_days(),
        "edges": graph.n_edges(),
        "fitted_variant": trace.variant.name(),
        "summary": summary,
        "diagnostics": diagnostics,
    });
    Ok(vec![
        report(Command::Fit, config, config.chain.seed, variant.name(), &inputs, result)?,
        Output { name: "phases.csv", bytes: phases.finish() },
    ])
}

fn detect(config: &RunConfig) -> Result<Vec<Output>> {
    let mut inputs = Inputs::default();
    let panel = inputs.panel("counts", config.counts.as_ref())?;
    let window = config.detection.peak_window;
    let reference = match &config.reference {
        Some(p) => Some(inputs.panel("reference", Some(p))?),
        None => None,
    };
    let baseline = reference.as_ref().map(|r| average_baseline(&panel, r, window)).transpose()?;
    let Some(variant) = config.model_variant()? else {
        let alarms = baseline
            .ok_or_else(|| FluError::Config(format!("variant `{AVERAGE_METHOD}` needs --reference")))?;
        let leads = lead_time_report(&[(AVERAGE_METHOD.to_string(), alarms.clone())])?;
        let result = json!({ "alarms": alarms, "lead_times": leads });
        return Ok(vec![report(Command::Detect, config, config.chain.seed, AVERAGE_METHOD, &inputs, result)?]);
    };
    let graph = inputs.graph(config, &panel, variant.spatial)?;
    let filter = config.filter();
    let output = filter_panel(&panel, &graph, &config.hyper, &variant, &filter)?;
    let alarms = alarms_from(&output, &panel, filter.threshold, window)?;
    let mut methods: Vec<(String, Vec<AlarmRecord>)> = vec![(variant.name().to_string(), alarms.clone())];
    if let Some(b) = &baseline {
        methods.push((AVERAGE_METHOD.to_string(), b.clone()));
    }
    let leads = lead_time_report(&methods)?;

    let scheme = variant.scheme;
    let mut table = CsvTable::new(&PROBABILITY_HEADER);
    for (i, region) in panel.region_ids().iter().enumerate() {
        for d in &output.days {
            let p = &d.probs[i];
            let [ne, re, se, de] = phase_columns(scheme, p);
            let date = d.date.to_string();
            let epidemic = super::io::fmt_prob(d.epidemic[i]);
            table.row([region.as_str(), &date, &ne, &re, &se, &de, &epidemic, scheme.name(d.map_phase[i])]);
        }
    }
    let result = json!({
        "threshold": filter.threshold,
        "alarms": alarms,
        "baseline_alarms": baseline,
        "lead_times": leads,
    });
    Ok(vec![
        report(Command::Detect, config, config.chain.seed, variant.name(), &inputs, result)?,
        Output { name: "probabilities.csv", bytes: table.finish() },
    ])
}

/// Metrics where defined; a constant series yields `null` and a note.
fn metric_value(predicted: &[f64], actual: &[f64]) -> Result<Value> {
    match evaluate(predicted, actual) {
        Ok(e) => to_value(&e),
        Err(FluError::Undefined(why)) => Ok(json!({ "undefined": why })),
        Err(e) => Err(e),
    }
}

fn mean_correlation(evals: &[Option<Evaluation>]) -> Option<f64> {
    let rs: Vec<f64> = evals.iter().flatten().map(|e| e.correlation).collect();
    (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64)
}

/// AR one-step prediction from the counts up to `origin`; `None` when the
/// window cannot support a fit.
fn ar_prediction(counts: &[u64], origin: usize, order: usize) -> Result<Option<f64>> {
    let series: Vec<f64> = counts[..=origin].iter().map(|&c| c as f64).collect();
    match fit_ar(&series, order, 0..series.len()) {
        Ok(model) => forecast_ar(&model, &series).map(Some),
        Err(FluError::DegenerateFit(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn forecast(config: &RunConfig) -> Result<Vec<Output>> {
    let variant = require_model(config, Command::Forecast)?;
    let mut inputs = Inputs::default();
    let panel = inputs.panel("counts", config.counts.as_ref())?;
    let graph = inputs.graph(config, &panel, variant.spatial)?;
    let n = panel.n_days();
    let order = config.forecast.ar_order;
    let first = config.forecast.first_origin.unwrap_or_else(|| (n / 2).max(14));
    if first <= order + 1 || first >= n {
        return Err(FluError::Config(format!(
            "first forecast origin {first} must lie in {}..{n} for an order-{order} baseline",
            order + 2
        )));
    }
    let origins = rolling_forecast(&panel, &graph, &config.hyper, &variant, &config.filter(), first)?;

    let mut table = CsvTable::new(&[
        "region", "date", "predicted", "ar_predicted", "actual", "expected_growth", "p_ne", "p_re", "p_se", "p_de",
    ]);
    let mut per_region = BTreeMap::new();
    let (mut model_evals, mut ar_evals) = (Vec::new(), Vec::new());
    for (i, region) in panel.region_ids().iter().enumerate() {
        let rows: Vec<(&ForecastRecord, Option<f64>)> = origins
            .iter()
            .map(|recs| {
                let r = &recs[i];
                Ok((r, ar_prediction(panel.series(i), r.day - 1, order)?))
            })
            .collect::<Result<_>>()?;
        let (mut model, mut ar, mut actual) = (Vec::new(), Vec::new(), Vec::new());
        for (r, a) in &rows {
            let [ne, re, se, de] = phase_columns(variant.scheme, &r.probs);
            table.row([
                region.clone(),
                r.date.to_string(),
                format!("{:.3}", r.predicted),
                a.map_or_else(String::new, |v| format!("{v:.3}")),
                r.actual.map_or_else(String::new, |v| v.to_string()),
                format!("{:.6}", r.expected_growth),
                ne,
                re,
                se,
                de,
            ]);
            if let (Some(y), Some(a)) = (r.actual, a) {
                model.push(r.predicted);
                ar.push(*a);
                actual.push(y as f64);
            }
        }
        let (m, a) = if actual.is_empty() {
            (json!({ "undefined": "no realised counts" }), json!({ "undefined": "no realised counts" }))
        } else {
            (metric_value(&model, &actual)?, metric_value(&ar, &actual)?)
        };
        model_evals.push(evaluate(&model, &actual).ok());
        ar_evals.push(evaluate(&ar, &actual).ok());
        per_region.insert(region.clone(), json!({ "model": m, "ar": a, "points": actual.len() }));
    }
    let result = json!({
        "first_origin": first,
        "ar_order": order,
        "metrics": per_region,
        "mean_correlation": { "model": mean_correlation(&model_evals), "ar": mean_correlation(&ar_evals) },
    });
    Ok(vec![
        report(Command::Forecast, config, config.chain.seed, variant.name(), &inputs, result)?,
        Output { name: "forecasts.csv", bytes: table.finish() },
    ])
}

/// Zero-padded ids so that sorting by id keeps region order.
fn region_id(i: usize, n: usize) -> String {
    let width = (n.max(2) - 1).to_string().len();
    format!("R{i:0width$}")
}

fn simulate(config: &RunConfig) -> Result<Vec<Output>> {
    let spec = config.scenario.clone().unwrap_or_else(|| ScenarioSpec::reference(config.chain.seed));
    let sim = generate_panel(&spec)?;
    let n = spec.n_regions;
    let ids: Vec<String> = (0..n).map(|i| region_id(i, n)).collect();
    let panel = &sim.panel;

    let mut counts = CsvTable::new(&["region", "date", "count"]);
    for (i, id) in ids.iter().enumerate() {
        for (d, date) in panel.dates().iter().enumerate() {
            counts.row([id.clone(), date.to_string(), panel.count(i, d).to_string()]);
        }
    }
    let mut adjacency = CsvTable::new(&["region_a", "region_b"]);
    for (a, b) in sim.graph.edges() {
        adjacency.row([&ids[a], &ids[b]]);
    }
    let mut truth = CsvTable::new(&["region", "date", "phase", "growth"]);
    for (i, id) in ids.iter().enumerate() {
        for t in 0..sim.true_phases.n_steps() {
            truth.row([
                id.clone(),
                panel.dates()[t + 1].to_string(),
                spec.variant.scheme.name(sim.true_phases.get(i, t)).to_string(),
                format!("{:.9}", sim.growth.get(i, t)),
            ]);
        }
    }
    let (counts, adjacency, truth) = (counts.finish(), adjacency.finish(), truth.finish());
    let result = json!({
        "scenario": spec,
        "outputs": {
            "counts.csv": content_hash(&counts),
            "adjacency.csv": content_hash(&adjacency),
            "truth.csv": content_hash(&truth),
        },
    });
    Ok(vec![
        report(Command::Simulate, config, spec.seed, spec.variant.name(), &Inputs::default(), result)?,
        Output { name: "counts.csv", bytes: counts },
        Output { name: "adjacency.csv", bytes: adjacency },
        Output { name: "truth.csv", bytes: truth },
    ])
}

fn evaluate_files(config: &RunConfig) -> Result<Vec<Output>> {
    let mut inputs = Inputs::default();
    let predicted = parse_series(&inputs.load("predicted", config.predicted.as_ref())?)
        .map_err(|e| in_file("predicted", config.predicted.as_ref(), e))?;
    let actual = parse_series(&inputs.load("actual", config.actual.as_ref())?)
        .map_err(|e| in_file("actual", config.actual.as_ref(), e))?;
    let unmatched = predicted.keys().filter(|k| !actual.contains_key(*k)).count()
        + actual.keys().filter(|k| !predicted.contains_key(*k)).count();
    if unmatched > 0 {
        return Err(FluError::invalid(format!("{unmatched} (region, date) keys appear in only one of the two files")));
    }
    let mut by_region: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((region, date), p) in &predicted {
        let e = by_region.entry(region.as_str()).or_default();
        e.0.push(*p);
        e.1.push(actual[&(region.clone(), *date)]);
    }
    let mut regions = BTreeMap::new();
    for (region, (p, a)) in &by_region {
        regions.insert(*region, metric_value(p, a)?);
    }
    let (all_p, all_a): (Vec<f64>, Vec<f64>) = predicted.iter().map(|(k, p)| (*p, actual[k])).unzip();
    let result = json!({ "points": all_p.len(), "overall": metric_value(&all_p, &all_a)?, "regions": regions });
    let variant = config.model_variant()?.map_or(AVERAGE_METHOD, |v| v.name());
    Ok(vec![report(Command::Evaluate, config, config.chain.seed, variant, &inputs, result)?])
}

/// Worker threads for independent chains, capped by the environment.
fn thread_cap(jobs: usize) -> Result<usize> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| FluError::Config(format!("{THREADS_ENV}={v} is not a positive integer")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Ok(cap.min(jobs).max(1))
}

fn dic(config: &RunConfig) -> Result<Vec<Output>> {
    let variants = config.dic_model_variants()?;
    let mut inputs = Inputs::default();
    let panel = inputs.panel("counts", config.counts.as_ref())?;
    let graph = inputs.graph(config, &panel, variants.iter().any(|v| v.spatial))?;
    let growth = compute_growth(&panel, GROWTH_FLOOR)?;
    config.chain.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap(variants.len())?)
        .build()
        .map_err(|e| FluError::InvalidState(format!("thread pool: {e}")))?;
    let reports: Vec<_> = pool.install(|| {
        variants
            .par_iter()
            .map(|v| {
                let trace = Sampler::new(&growth, &graph, &config.hyper, v, &config.chain)?.run()?;
                compute_dic(&trace, &growth, &graph, v)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows: Vec<Value> = variants
        .iter()
        .zip(&reports)
        .map(|(v, r)| {
            json!({ "variant": v.name(), "dic": r.dic, "mean_deviance": r.mean_deviance,
                    "deviance_at_mean": r.deviance_at_mean, "p_d": r.p_d })
        })
        .collect();
    let best = variants
        .iter()
        .zip(&reports)
        .min_by(|a, b| a.1.dic.total_cmp(&b.1.dic))
        .map(|(v, _)| v.name());
    let result = json!({ "variants": rows, "lowest_dic": best });
    let names = config.dic_variants.join(",");
    Ok(vec![report(Command::Dic, config, config.chain.seed, &names, &inputs, result)?])
}
