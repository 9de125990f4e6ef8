//! Running a suite of queries in several configurations.
//!
//! Every query runs unoptimized and optimized; queries containing a
//! semantic join additionally run with both nested-loop and smart-batched
//! joins. Failures become report rows and never abort the suite.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};

use hra_core::backend::{LlmBackend, MockBackend};
use hra_core::catalog::{load_catalog, load_csv, LoadedCatalog};
use hra_core::exec::JoinStrategy;
use hra_core::optimizer::{OptimizerOptions, Statistics};
use hra_core::plan::{Operator, QueryPlan};
use hra_core::relation::Relation;

use crate::commands::{estimate, execute_plan, generate_plan, optimize_plan, parse_query, GenerateSettings};
use crate::config::{read, RunConfig};
use crate::CliError;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Suite file (YAML).
    pub suite: PathBuf,
    /// Write the full CSV report, including timings, to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Suite {
    /// Default catalog for queries that do not name one.
    #[serde(default)]
    catalog: Option<PathBuf>,
    #[serde(default)]
    queries: Vec<SuiteQuery>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteQuery {
    name: String,
    #[serde(default)]
    hra: Option<String>,
    #[serde(default)]
    hra_file: Option<PathBuf>,
    #[serde(default)]
    question: Option<String>,
    #[serde(default)]
    catalog: Option<PathBuf>,
    #[serde(default)]
    mock_rules: Option<PathBuf>,
    /// CSV file holding the expected result.
    #[serde(default)]
    expected: Option<PathBuf>,
}

/// One row of the report. Column order is the CSV column order.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub optimized: Option<bool>,
    pub join_strategy: Option<String>,
    pub status: String,
    pub correct: Option<bool>,
    pub rows: Option<usize>,
    pub llm_calls: Option<u64>,
    pub tokens_in: Option<u64>,
    pub tokens_out: Option<u64>,
    pub est_cost: Option<f64>,
    pub elapsed_ms: Option<f64>,
    pub error: Option<String>,
}

/// The report without the timing column, for stdout.
#[derive(Serialize)]
struct StableRow<'a> {
    name: &'a str,
    optimized: Option<bool>,
    join_strategy: Option<&'a str>,
    status: &'a str,
    correct: Option<bool>,
    rows: Option<usize>,
    llm_calls: Option<u64>,
    tokens_in: Option<u64>,
    tokens_out: Option<u64>,
    est_cost: Option<String>,
    error: Option<&'a str>,
}

fn failed(name: &str, status: &str, error: impl ToString) -> BenchRow {
    BenchRow { name: name.into(), status: status.into(), error: Some(error.to_string()), ..BenchRow::default() }
}

fn status_of(e: &CliError) -> &'static str {
    match e {
        CliError::Generation(_) => "generation_failed",
        CliError::Optimization(_) => "optimization_failed",
        CliError::Execution(_) => "execution_failed",
        _ => "load_failed",
    }
}

fn relative(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

fn has_semantic_join(plan: &QueryPlan) -> bool {
    plan.nodes().iter().any(|n| matches!(n.op, Operator::SemanticJoin { .. }))
}

fn same_result(a: &Relation, b: &Relation) -> bool {
    let lines = |r: &Relation| {
        let csv = r.to_csv();
        let mut it = csv.lines().map(str::to_string);
        let header = it.next();
        let mut body: Vec<String> = it.collect();
        body.sort();
        (header, body)
    };
    lines(a) == lines(b)
}

struct Prepared {
    loaded: LoadedCatalog,
    plan: QueryPlan,
    expected: Option<Relation>,
    backend: Box<dyn Fn() -> Result<Box<dyn LlmBackend>, CliError>>,
}

fn prepare(q: &SuiteQuery, suite: &Suite, base: &Path, config: &RunConfig) -> Result<Prepared, CliError> {
    let catalog = q
        .catalog
        .as_ref()
        .or(suite.catalog.as_ref())
        .map(|p| relative(base, p))
        .or_else(|| config.catalog.clone())
        .ok_or_else(|| CliError::Config("no catalog for this query".into()))?;
    let loaded = load_catalog(&catalog)?;
    let backend: Box<dyn Fn() -> Result<Box<dyn LlmBackend>, CliError>> = match &q.mock_rules {
        Some(p) => {
            let text = read(&relative(base, p))?;
            MockBackend::from_rules_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            Box::new(move || {
                Ok(Box::new(MockBackend::from_rules_json(&text).expect("checked above")) as Box<dyn LlmBackend>)
            })
        }
        None => {
            let config = config.clone();
            Box::new(move || {
                let b = config.backend()?;
                Ok(Box::new(b.llm) as Box<dyn LlmBackend>)
            })
        }
    };
    let expected = match &q.expected {
        Some(p) => Some(load_csv("expected", &relative(base, p))?),
        None => None,
    };
    let plan = match (&q.hra, &q.hra_file, &q.question) {
        (Some(text), None, None) => parse_query(text, &loaded.database)?,
        (None, Some(p), None) => parse_query(&read(&relative(base, p))?, &loaded.database)?,
        (None, None, Some(question)) => {
            let settings = GenerateSettings { filter: true, decompose: true, dry_run: true, trace: None };
            generate_plan(question, &loaded, backend()?.as_ref(), config, &settings)?.0
        }
        _ => return Err(CliError::Config("a query needs exactly one of `hra`, `hra_file`, `question`".into())),
    };
    Ok(Prepared { loaded, plan, expected, backend })
}

fn run_variant(p: &Prepared, name: &str, optimized: bool, strategy: JoinStrategy, config: &RunConfig) -> BenchRow {
    let mut row = BenchRow {
        name: name.into(),
        optimized: Some(optimized),
        join_strategy: Some(strategy.to_string()),
        ..BenchRow::default()
    };
    let result = (|| {
        let params = config.cost_params()?;
        let stats = Statistics::from_database(&p.loaded.database);
        let plan = if optimized {
            optimize_plan(&p.plan, &stats, &params, OptimizerOptions::default())?.plan
        } else {
            p.plan.clone()
        };
        row.est_cost = Some(estimate(&plan, &stats, &params)?.total);
        let exec = hra_core::exec::ExecConfig { join_strategy: strategy, ..config.exec_config()? };
        let backend = (p.backend)()?;
        let started = Instant::now();
        let report = execute_plan(&plan, &p.loaded.database, backend.as_ref(), &exec);
        row.elapsed_ms = Some(started.elapsed().as_secs_f64() * 1000.0);
        report
    })();
    match result {
        Ok(report) => {
            row.status = "ok".into();
            row.correct = p.expected.as_ref().map(|e| same_result(&report.result, e));
            row.rows = Some(report.result.len());
            row.llm_calls = Some(report.llm_calls);
            row.tokens_in = Some(report.tokens_in);
            row.tokens_out = Some(report.tokens_out);
        }
        Err(e) => {
            row.status = status_of(&e).into();
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Runs every query of the suite file in every applicable configuration.
pub fn run_suite(path: &Path, config: &RunConfig) -> Result<Vec<BenchRow>, CliError> {
    let text = read(path)?;
    let suite: Suite = if text.trim().is_empty() {
        Suite::default()
    } else {
        serde_yaml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for q in &suite.queries {
        let prepared = match prepare(q, &suite, base, config) {
            Ok(p) => p,
            Err(e) => {
                rows.push(failed(&q.name, status_of(&e), e));
                continue;
            }
        };
        let strategies = if has_semantic_join(&prepared.plan) {
            vec![JoinStrategy::Nested, JoinStrategy::Smart]
        } else {
            vec![config.join_strategy]
        };
        for optimized in [false, true] {
            for s in &strategies {
                rows.push(run_variant(&prepared, &q.name, optimized, *s, config));
            }
        }
    }
    Ok(rows)
}

pub fn bench(config: &RunConfig, args: &BenchArgs) -> Result<(), CliError> {
    let rows = run_suite(&args.suite, config)?;
    if let Some(path) = &args.report {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if rows.is_empty() {
            w.write_record(COLUMNS).map_err(|e| CliError::Io(e.to_string()))?;
        }
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }
    let mut w = csv::Writer::from_writer(std::io::stdout());
    if rows.is_empty() {
        w.write_record(COLUMNS.iter().filter(|c| **c != "elapsed_ms")).map_err(|e| CliError::Io(e.to_string()))?;
    }
    for r in &rows {
        let stable = StableRow {
            name: &r.name,
            optimized: r.optimized,
            join_strategy: r.join_strategy.as_deref(),
            status: &r.status,
            correct: r.correct,
            rows: r.rows,
            llm_calls: r.llm_calls,
            tokens_in: r.tokens_in,
            tokens_out: r.tokens_out,
            est_cost: r.est_cost.map(|c| format!("{c:.2}")),
            error: r.error.as_deref(),
        };
        w.serialize(stable).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

pub const COLUMNS: [&str; 12] = [
    "name",
    "optimized",
    "join_strategy",
    "status",
    "correct",
    "rows",
    "llm_calls",
    "tokens_in",
    "tokens_out",
    "est_cost",
    "elapsed_ms",
    "error",
];
