//! Experiment orchestration: run every configured method over the M grid,
//! evaluate on warm and cold users, and emit deterministic reports.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{EmbeddingMatrix, Method, SelectionResult};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::hull::select_hull;
use crate::ipgraph::{
    build_approx_ip_graph, build_exact_ip_graph, select_ipgs, select_max_in_degree, GraphMode,
    IpgsSearch, ProximityGraph,
};
use crate::metrics::{map_at_m, mean_ndcg_at_m, mean_precision_at_m};
use crate::oracle::{exhaustive_optimal, fav_loss_with, user_best, UserBest};
use crate::selectors::{select_max_norm, select_submodular_greedy, select_user_expectation};

pub const REPORT_SCHEMA: &str = "coldstart-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    Warm,
    Cold,
}

impl Population {
    pub fn tag(&self) -> &'static str {
        match self {
            Population::Warm => "warm",
            Population::Cold => "cold",
        }
    }
}

/// One report row: a (method, M, population) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: Method,
    pub m: usize,
    pub population: Population,
    pub fav_loss: Option<f64>,
    pub fav_loss_per_user: Option<f64>,
    pub precision: Option<f64>,
    pub map: Option<f64>,
    pub ndcg: Option<f64>,
    /// Selection wall time, seconds (monotonic clock).
    pub wall_time_s: f64,
    /// Build time of shared structures attributed to this method (graph
    /// construction for the graph-based methods).
    pub shared_time_s: f64,
    pub error: Option<String>,
}

/// Full evaluation report with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    /// (input name, sha256) pairs.
    pub inputs: Vec<(String, String)>,
    pub rows: Vec<EvalRow>,
}

/// Embeddings an experiment runs on, plus their content digests.
#[derive(Debug, Clone)]
pub struct ExperimentInputs {
    pub items: EmbeddingMatrix,
    pub warm_users: EmbeddingMatrix,
    pub cold_users: Option<EmbeddingMatrix>,
    pub digests: Vec<(String, String)>,
}

/// Everything a single method invocation needs besides the problem itself.
#[derive(Debug, Clone, Copy)]
pub struct MethodContext<'a> {
    pub graph: Option<&'a ProximityGraph>,
    pub ef_search: usize,
    pub hull_directions: usize,
    pub seed: u64,
    pub subset_budget: u128,
}

/// Dispatches one method. Graph methods require `ctx.graph`.
pub fn select_with_method(
    method: Method,
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
    m: usize,
    ctx: MethodContext<'_>,
) -> Result<SelectionResult> {
    match method {
        Method::MaxNorm => select_max_norm(items, m),
        Method::UserExpectation => select_user_expectation(users, items, m),
        Method::Greedy => select_submodular_greedy(users, items, m, false),
        Method::GreedyLazy => select_submodular_greedy(users, items, m, true),
        Method::Hull => select_hull(users, items, m, ctx.hull_directions, ctx.seed),
        Method::IpgsExact => select_ipgs(users, items, m, IpgsSearch::Exact),
        Method::Ipgs => {
            let graph = ctx
                .graph
                .ok_or_else(|| Error::invalid("ipgs requires a proximity graph"))?;
            select_ipgs(
                users,
                items,
                m,
                IpgsSearch::Graph {
                    graph,
                    ef: ctx.ef_search,
                },
            )
        }
        Method::MaxInDegree => {
            let graph = ctx
                .graph
                .ok_or_else(|| Error::invalid("max-in-degree requires a proximity graph"))?;
            select_max_in_degree(items, m, graph)
        }
        Method::Exhaustive => {
            let (subset, _) = exhaustive_optimal(users, items, m, ctx.subset_budget)?;
            let best = user_best(users, items);
            let coverage = best.total - fav_loss_with(&best, users, items, &subset);
            let scores = vec![coverage; subset.len()];
            SelectionResult::new(Method::Exhaustive, subset, scores, items)
        }
    }
}

/// Builds the proximity graph named by the config.
pub fn build_graph_for_config(
    items: &EmbeddingMatrix,
    config: &ExperimentConfig,
) -> Result<ProximityGraph> {
    match config.graph.mode {
        GraphMode::Exact => build_exact_ip_graph(items, config.graph.k),
        GraphMode::Approximate => {
            build_approx_ip_graph(items, config.graph.k, config.graph.ef_construction)
        }
    }
}

struct SelectionOutcome {
    method: Method,
    m: usize,
    result: Result<SelectionResult>,
    wall_time_s: f64,
    shared_time_s: f64,
}

/// Runs every configured method over the M grid: selects on warm users, then
/// evaluates the favorite-item loss on warm and cold populations and the
/// ranking metrics on the cold one. Selections run sequentially by default;
/// `parallel_methods` runs them concurrently without changing any value.
pub fn run_experiment(config: &ExperimentConfig, inputs: &ExperimentInputs) -> Result<EvalReport> {
    config.validate()?;
    let items = &inputs.items;
    let warm = &inputs.warm_users;
    if let Some(&m) = config.m_grid.iter().find(|&&m| m > items.count()) {
        return Err(Error::invalid(format!(
            "m_grid value {m} exceeds item count {}",
            items.count()
        )));
    }
    if warm.dim() != items.dim() {
        return Err(Error::DimensionMismatch {
            expected: items.dim(),
            got: warm.dim(),
        });
    }

    let needs_graph = config
        .methods
        .iter()
        .any(|m| matches!(m, Method::Ipgs | Method::MaxInDegree));
    let graph_start = Instant::now();
    let graph = if needs_graph {
        Some(build_graph_for_config(items, config)?)
    } else {
        None
    };
    let graph_time = graph_start.elapsed().as_secs_f64();

    let ctx = MethodContext {
        graph: graph.as_ref(),
        ef_search: config.graph.ef_search,
        hull_directions: config.hull.num_directions,
        seed: config.seed,
        subset_budget: config.subset_budget,
    };

    let jobs: Vec<(usize, Method)> = config
        .m_grid
        .iter()
        .flat_map(|&m| config.methods.iter().map(move |&method| (m, method)))
        .collect();

    let run_one = |&(m, method): &(usize, Method)| -> SelectionOutcome {
        let started = Instant::now();
        let result = select_with_method(method, warm, items, m, ctx);
        let wall_time_s = started.elapsed().as_secs_f64();
        let shared_time_s = if matches!(method, Method::Ipgs | Method::MaxInDegree) {
            graph_time
        } else {
            0.0
        };
        SelectionOutcome {
            method,
            m,
            result,
            wall_time_s,
            shared_time_s,
        }
    };
    let outcomes: Vec<SelectionOutcome> = if config.parallel_methods {
        jobs.par_iter().map(run_one).collect()
    } else {
        jobs.iter().map(run_one).collect()
    };

    let warm_best = user_best(warm, items);
    let cold_best: Option<(&EmbeddingMatrix, UserBest)> = inputs
        .cold_users
        .as_ref()
        .map(|cold| (cold, user_best(cold, items)));

    let mut rows = Vec::with_capacity(outcomes.len() * 2);
    for outcome in &outcomes {
        match &outcome.result {
            Ok(sel) => {
                let loss = fav_loss_with(&warm_best, warm, items, sel.ranked());
                rows.push(EvalRow {
                    method: outcome.method,
                    m: outcome.m,
                    population: Population::Warm,
                    fav_loss: Some(loss),
                    fav_loss_per_user: Some(loss / warm.count() as f64),
                    precision: None,
                    map: None,
                    ndcg: None,
                    wall_time_s: outcome.wall_time_s,
                    shared_time_s: outcome.shared_time_s,
                    error: None,
                });
                if let Some((cold, cold_best)) = &cold_best {
                    let row = cold_row(outcome, sel, cold, cold_best, items);
                    rows.push(row);
                }
            }
            Err(e) => {
                log::warn!(
                    "method {} at m = {} failed: {e}",
                    outcome.method,
                    outcome.m
                );
                rows.push(error_row(outcome, Population::Warm, e));
                if cold_best.is_some() {
                    rows.push(error_row(outcome, Population::Cold, e));
                }
            }
        }
    }

    Ok(EvalReport {
        schema: REPORT_SCHEMA.to_string(),
        config_hash: config.config_hash(),
        seed: config.seed,
        inputs: inputs.digests.clone(),
        rows,
    })
}

fn cold_row(
    outcome: &SelectionOutcome,
    sel: &SelectionResult,
    cold: &EmbeddingMatrix,
    cold_best: &UserBest,
    items: &EmbeddingMatrix,
) -> EvalRow {
    let loss = fav_loss_with(cold_best, cold, items, sel.ranked());
    let metrics = (|| -> Result<(f64, f64, f64)> {
        Ok((
            mean_precision_at_m(cold, items, sel, outcome.m)?,
            map_at_m(cold, items, sel, outcome.m)?,
            mean_ndcg_at_m(cold, items, sel, outcome.m)?,
        ))
    })();
    match metrics {
        Ok((precision, map, ndcg)) => EvalRow {
            method: outcome.method,
            m: outcome.m,
            population: Population::Cold,
            fav_loss: Some(loss),
            fav_loss_per_user: Some(loss / cold.count() as f64),
            precision: Some(precision),
            map: Some(map),
            ndcg: Some(ndcg),
            wall_time_s: outcome.wall_time_s,
            shared_time_s: outcome.shared_time_s,
            error: None,
        },
        Err(e) => EvalRow {
            method: outcome.method,
            m: outcome.m,
            population: Population::Cold,
            fav_loss: Some(loss),
            fav_loss_per_user: Some(loss / cold.count() as f64),
            precision: None,
            map: None,
            ndcg: None,
            wall_time_s: outcome.wall_time_s,
            shared_time_s: outcome.shared_time_s,
            error: Some(e.to_string()),
        },
    }
}

fn error_row(outcome: &SelectionOutcome, population: Population, e: &Error) -> EvalRow {
    EvalRow {
        method: outcome.method,
        m: outcome.m,
        population,
        fav_loss: None,
        fav_loss_per_user: None,
        precision: None,
        map: None,
        ndcg: None,
        wall_time_s: outcome.wall_time_s,
        shared_time_s: outcome.shared_time_s,
        error: Some(e.to_string()),
    }
}

/// Report emission options. Timings are excluded by default so that repeated
/// runs with one seed emit byte-identical files; `include_timings` adds the
/// wall-time columns for performance work.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmitOptions {
    pub include_timings: bool,
}

/// Formats a real with 6 significant digits, C `%g` style.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}"); // d.ddddde<exp>
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        let trimmed = fixed.trim_end_matches('0').trim_end_matches('.');
        trimmed.to_string()
    } else {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{exp}")
    }
}

fn opt_sig6(x: Option<f64>) -> String {
    x.map(fmt_sig6).unwrap_or_default()
}

/// Writes the CSV form: one header row (the schema, hash and seed ride along
/// as constant columns), then one row per (method, M, population).
pub fn emit_report_csv<W: Write>(
    report: &EvalReport,
    options: EmitOptions,
    mut out: W,
) -> std::io::Result<()> {
    let mut header = vec![
        "schema",
        "config_hash",
        "seed",
        "method",
        "m",
        "population",
        "fav_loss",
        "fav_loss_per_user",
        "precision",
        "map",
        "ndcg",
    ];
    if options.include_timings {
        header.push("wall_time_s");
        header.push("shared_time_s");
    }
    header.push("error");
    writeln!(out, "{}", header.join(","))?;
    for row in &report.rows {
        let mut fields = vec![
            report.schema.clone(),
            report.config_hash.clone(),
            report.seed.to_string(),
            row.method.tag().to_string(),
            row.m.to_string(),
            row.population.tag().to_string(),
            opt_sig6(row.fav_loss),
            opt_sig6(row.fav_loss_per_user),
            opt_sig6(row.precision),
            opt_sig6(row.map),
            opt_sig6(row.ndcg),
        ];
        if options.include_timings {
            fields.push(fmt_sig6(row.wall_time_s));
            fields.push(fmt_sig6(row.shared_time_s));
        }
        fields.push(row.error.clone().unwrap_or_default().replace(',', ";"));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    schema: String,
    config_hash: String,
    seed: u64,
    inputs: Vec<InputDoc>,
    rows: Vec<RowDoc>,
}

#[derive(Serialize, Deserialize)]
struct InputDoc {
    name: String,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
struct RowDoc {
    method: Method,
    m: usize,
    population: Population,
    fav_loss: Option<f64>,
    fav_loss_per_user: Option<f64>,
    precision: Option<f64>,
    map: Option<f64>,
    ndcg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    wall_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    shared_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    error: Option<String>,
}

/// Writes the schema-versioned JSON form. Carries the full provenance
/// (including input digests); timings only with `include_timings`.
pub fn emit_report_json<W: Write>(
    report: &EvalReport,
    options: EmitOptions,
    out: W,
) -> std::io::Result<()> {
    let doc = ReportDoc {
        schema: report.schema.clone(),
        config_hash: report.config_hash.clone(),
        seed: report.seed,
        inputs: report
            .inputs
            .iter()
            .map(|(name, sha256)| InputDoc {
                name: name.clone(),
                sha256: sha256.clone(),
            })
            .collect(),
        rows: report
            .rows
            .iter()
            .map(|r| RowDoc {
                method: r.method,
                m: r.m,
                population: r.population,
                fav_loss: r.fav_loss,
                fav_loss_per_user: r.fav_loss_per_user,
                precision: r.precision,
                map: r.map,
                ndcg: r.ndcg,
                wall_time_s: options.include_timings.then_some(r.wall_time_s),
                shared_time_s: options.include_timings.then_some(r.shared_time_s),
                error: r.error.clone(),
            })
            .collect(),
    };
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)
}

/// Parses a JSON report back; timing fields default to 0 when absent.
pub fn parse_report_json(bytes: &[u8]) -> Result<EvalReport> {
    let doc: ReportDoc = serde_json::from_slice(bytes)
        .map_err(|e| Error::invalid(format!("bad report JSON: {e}")))?;
    if doc.schema != REPORT_SCHEMA {
        return Err(Error::invalid(format!(
            "unsupported report schema {:?}",
            doc.schema
        )));
    }
    Ok(EvalReport {
        schema: doc.schema,
        config_hash: doc.config_hash,
        seed: doc.seed,
        inputs: doc.inputs.into_iter().map(|i| (i.name, i.sha256)).collect(),
        rows: doc
            .rows
            .into_iter()
            .map(|r| EvalRow {
                method: r.method,
                m: r.m,
                population: r.population,
                fav_loss: r.fav_loss,
                fav_loss_per_user: r.fav_loss_per_user,
                precision: r.precision,
                map: r.map,
                ndcg: r.ndcg,
                wall_time_s: r.wall_time_s.unwrap_or(0.0),
                shared_time_s: r.shared_time_s.unwrap_or(0.0),
                error: r.error,
            })
            .collect(),
    })
}

/// Writes a report to a file, dispatching on the extension (`.json` or CSV
/// otherwise).
pub fn write_report(report: &EvalReport, options: EmitOptions, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let is_json = path.extension().map(|e| e == "json").unwrap_or(false);
    if is_json {
        emit_report_json(report, options, &mut w).map_err(|e| Error::io(path, e))?;
    } else {
        emit_report_csv(report, options, &mut w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
