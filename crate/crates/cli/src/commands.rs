//! The ingest, generate, explain, and run commands, plus the pipeline
//! stages they share with `bench`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::Serialize;

use hra_core::backend::LlmBackend;
use hra_core::catalog::{filter_model, load_catalog, LoadedCatalog, SemanticDataModel};
use hra_core::equivalence::SymbolicChecker;
use hra_core::exec::{execute, ExecConfig, ExecutionReport};
use hra_core::generation::{generate_query, GenerationOptions, GenerationTrace};
use hra_core::optimizer::{
    estimate_cost, optimize, rewrite_udfs, CostEstimate, CostParams, OptimizeOutcome, OptimizerOptions, Statistics,
};
use hra_core::parser::{parse, print};
use hra_core::plan::QueryPlan;
use hra_core::relation::Database;

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Write the semantic data model as YAML to this file.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Also print the model as shown to the generator.
    #[arg(long)]
    pub describe: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    pub question: String,
    /// Write one JSON record per generation attempt to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub no_decompose: bool,
    /// Use the full model instead of asking the backend which columns matter.
    #[arg(long)]
    pub no_filter: bool,
    /// Skip executing candidates on sample rows.
    #[arg(long)]
    pub no_dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// A query file, or a question when no such file exists.
    pub input: String,
    /// Treat INPUT as query text rather than a path or question.
    #[arg(long)]
    pub hra: bool,
    /// Print the symbolic tables behind each equivalence check.
    #[arg(long)]
    pub verify: bool,
    /// Ask the backend whether UDFs can be replaced by relational expressions.
    #[arg(long)]
    pub rewrite_udfs: bool,
    #[arg(long)]
    pub no_relational: bool,
    #[arg(long)]
    pub no_placement: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Csv,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// A query file, or a question when no such file exists.
    pub input: String,
    /// Treat INPUT as query text rather than a path or question.
    #[arg(long)]
    pub hra: bool,
    #[arg(long)]
    pub no_optimize: bool,
    /// Print the plans before and after optimization.
    #[arg(long)]
    pub explain: bool,
    #[arg(long)]
    pub rewrite_udfs: bool,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Write a JSON execution report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the generation trace to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub no_filter: bool,
}

pub enum Input {
    Query(String),
    Question(String),
}

impl Input {
    /// Inline query text with `--hra`, else the contents of an existing file,
    /// else a question.
    pub fn resolve(input: &str, inline: bool) -> Result<Input, CliError> {
        if inline {
            return Ok(Input::Query(input.to_string()));
        }
        let path = Path::new(input);
        if path.is_file() {
            return Ok(Input::Query(crate::config::read(path)?));
        }
        Ok(Input::Question(input.to_string()))
    }
}

pub fn load(config: &RunConfig) -> Result<LoadedCatalog, CliError> {
    Ok(load_catalog(config.catalog_path()?)?)
}

pub fn parse_query(text: &str, db: &Database) -> Result<QueryPlan, CliError> {
    parse(text, db).map_err(|e| CliError::Generation(format!("query does not parse: [{}] {e}", e.code())))
}

pub struct GenerateSettings<'a> {
    pub filter: bool,
    pub decompose: bool,
    pub dry_run: bool,
    pub trace: Option<&'a Path>,
}

/// Schema filtering followed by the generation loop. Warnings go to stderr.
pub fn generate_plan(
    question: &str,
    loaded: &LoadedCatalog,
    backend: &dyn LlmBackend,
    config: &RunConfig,
    settings: &GenerateSettings,
) -> Result<(QueryPlan, GenerationTrace), CliError> {
    let model: SemanticDataModel = if settings.filter {
        let out = filter_model(&loaded.model, question, backend, config.retry_policy());
        for w in &out.warnings {
            eprintln!("warning: {w}");
        }
        out.model
    } else {
        loaded.model.clone()
    };
    let options = GenerationOptions {
        max_retries: config.max_retries,
        decompose: settings.decompose,
        dry_run: settings.dry_run,
        ..GenerationOptions::default()
    };
    let db = settings.dry_run.then_some(&loaded.database);
    let result = generate_query(question, &model, backend, db, &options);
    let trace = match &result {
        Ok(g) => &g.trace,
        Err(e) => e.trace(),
    };
    for n in &trace.notes {
        eprintln!("note: {n}");
    }
    if let Some(path) = settings.trace {
        trace.write_jsonl(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    match result {
        Ok(g) => Ok((g.plan, g.trace)),
        Err(e) => Err(CliError::Generation(e.to_string())),
    }
}

pub fn optimize_plan(
    plan: &QueryPlan,
    stats: &Statistics,
    params: &CostParams,
    options: OptimizerOptions,
) -> Result<OptimizeOutcome, CliError> {
    optimize(plan, stats, params, &SymbolicChecker::default(), options)
        .map_err(|e| CliError::Optimization(e.to_string()))
}

pub fn estimate(plan: &QueryPlan, stats: &Statistics, params: &CostParams) -> Result<CostEstimate, CliError> {
    estimate_cost(plan, stats, params).map_err(|e| CliError::Optimization(e.to_string()))
}

pub fn execute_plan(
    plan: &QueryPlan,
    db: &Database,
    backend: &dyn LlmBackend,
    exec: &ExecConfig,
) -> Result<ExecutionReport, CliError> {
    execute(plan, db, backend, exec).map_err(|e| CliError::Execution(e.to_string()))
}

fn obtain_plan(
    input: Input,
    loaded: &LoadedCatalog,
    backend: &dyn LlmBackend,
    config: &RunConfig,
    filter: bool,
    trace: Option<&Path>,
) -> Result<QueryPlan, CliError> {
    match input {
        Input::Query(text) => parse_query(&text, &loaded.database),
        Input::Question(q) => {
            let settings = GenerateSettings { filter, decompose: true, dry_run: true, trace };
            Ok(generate_plan(&q, loaded, backend, config, &settings)?.0)
        }
    }
}

pub fn ingest(config: &RunConfig, args: &IngestArgs) -> Result<(), CliError> {
    let loaded = load(config)?;
    let mut out = String::new();
    writeln!(out, "loaded {} table(s)", loaded.database.len()).unwrap();
    for r in loaded.database.relations() {
        let cols: Vec<String> = r.schema.columns().iter().map(|c| format!("{} {}", c.name, c.ty.keyword())).collect();
        writeln!(out, "  {}: {} row(s) ({})", r.name, r.len(), cols.join(", ")).unwrap();
    }
    writeln!(
        out,
        "model: {} table(s), {} relationship(s), {} note(s)",
        loaded.model.tables().len(),
        loaded.model.relationships().len(),
        loaded.model.domain_notes().len()
    )
    .unwrap();
    if args.describe {
        out.push('\n');
        out.push_str(&loaded.model.describe());
        if !out.ends_with('\n') {
            out.push('\n');
        }
    }
    if let Some(path) = &args.model_out {
        std::fs::write(path, loaded.model.to_yaml()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    print!("{out}");
    Ok(())
}

pub fn generate(config: &RunConfig, args: &GenerateArgs) -> Result<(), CliError> {
    let loaded = load(config)?;
    let backend = config.backend()?;
    let settings = GenerateSettings {
        filter: !args.no_filter,
        decompose: !args.no_decompose,
        dry_run: !args.no_dry_run,
        trace: args.trace.as_deref(),
    };
    let result = generate_plan(&args.question, &loaded, backend.llm.as_ref(), config, &settings);
    backend.finish()?;
    let (plan, trace) = result?;
    if let Some(d) = &trace.decomposition {
        println!("decomposition:\n{d}\n");
    }
    println!("{}", print(&plan));
    Ok(())
}

fn options(no_relational: bool, no_placement: bool) -> OptimizerOptions {
    OptimizerOptions { relational: !no_relational, placement: !no_placement }
}

fn write_cost_table(out: &mut String, cost: &CostEstimate) {
    writeln!(out, "  {:>4}  {:<40} {:>12} {:>12} {:>10}", "node", "operator", "rows", "cost", "llm_calls").unwrap();
    for n in &cost.nodes {
        let mut label = n.label.clone();
        if label.chars().count() > 40 {
            label = label.chars().take(37).collect::<String>() + "...";
        }
        writeln!(out, "  {:>4}  {:<40} {:>12.2} {:>12.2} {:>10.2}", n.node.0, label, n.card, n.cost, n.llm_calls).unwrap();
    }
    writeln!(out, "  total {:.2} (relational {:.2}, estimated LLM calls {:.2})", cost.total, cost.relational, cost.llm_calls)
        .unwrap();
}

pub fn explain(config: &RunConfig, args: &ExplainArgs) -> Result<(), CliError> {
    let loaded = load(config)?;
    let backend = config.backend()?;
    let params = config.cost_params()?;
    let input = Input::resolve(&args.input, args.hra)?;
    let result = (|| {
        let mut plan = obtain_plan(input, &loaded, backend.llm.as_ref(), config, true, None)?;
        let mut out = String::new();
        if args.rewrite_udfs {
            let r = rewrite_udfs(&plan, &loaded.database, backend.llm.as_ref(), config.retry_policy());
            for w in &r.rewrites {
                writeln!(out, "rewrote UDF `{}` as {}", w.udf, w.expression).unwrap();
            }
            for n in &r.notes {
                writeln!(out, "note: {n}").unwrap();
            }
            plan = r.plan;
        }
        let stats = Statistics::from_database(&loaded.database);
        let o = optimize_plan(&plan, &stats, &params, options(args.no_relational, args.no_placement))?;
        writeln!(out, "original plan:\n{}\n  signature: {}", indent(&print(&o.original)), o.original.signature()).unwrap();
        writeln!(out, "original cost:").unwrap();
        write_cost_table(&mut out, &o.cost_before);
        writeln!(out, "optimized plan:\n{}\n  signature: {}", indent(&print(&o.plan)), o.plan.signature()).unwrap();
        writeln!(out, "optimized cost:").unwrap();
        write_cost_table(&mut out, &o.cost_after);
        writeln!(out, "rules fired:").unwrap();
        if o.rules.is_empty() {
            writeln!(out, "  (none)").unwrap();
        }
        for r in &o.rules {
            writeln!(out, "  - {r}").unwrap();
        }
        for n in &o.notes {
            writeln!(out, "note: {n}").unwrap();
        }
        writeln!(out, "equivalence checks: {}", o.checks.len()).unwrap();
        for c in &o.checks {
            if args.verify {
                writeln!(out, "  - {}\n{}", c.description, indent(&c.result.to_string())).unwrap();
            } else {
                writeln!(out, "  - {}: {}", c.description, c.result.verdict).unwrap();
            }
        }
        Ok::<String, CliError>(out)
    })();
    backend.finish()?;
    print!("{}", result?);
    Ok(())
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("  {l}")).collect::<Vec<_>>().join("\n")
}

#[derive(Serialize)]
struct RunReport<'a> {
    query: String,
    original_signature: String,
    executed_signature: String,
    optimized: bool,
    cost_before: Option<&'a CostEstimate>,
    cost_after: Option<&'a CostEstimate>,
    rules: &'a [String],
    execution: &'a ExecutionReport,
}

pub fn run(config: &RunConfig, args: &RunArgs) -> Result<(), CliError> {
    let loaded = load(config)?;
    let backend = config.backend()?;
    let params = config.cost_params()?;
    let exec = config.exec_config()?;
    let input = Input::resolve(&args.input, args.hra)?;
    let started = Instant::now();
    let result = (|| {
        let llm = backend.llm.as_ref();
        let mut plan = obtain_plan(input, &loaded, llm, config, !args.no_filter, args.trace.as_deref())?;
        let mut out = String::new();
        if args.rewrite_udfs {
            let r = rewrite_udfs(&plan, &loaded.database, llm, config.retry_policy());
            for w in &r.rewrites {
                eprintln!("rewrote UDF `{}` as {}", w.udf, w.expression);
            }
            plan = r.plan;
        }
        let outcome = if args.no_optimize {
            None
        } else {
            let stats = Statistics::from_database(&loaded.database);
            Some(optimize_plan(&plan, &stats, &params, OptimizerOptions::default())?)
        };
        let executed = outcome.as_ref().map_or(&plan, |o| &o.plan);
        if args.explain {
            writeln!(out, "original plan:\n{}\n  signature: {}", indent(&print(&plan)), plan.signature()).unwrap();
            writeln!(out, "executed plan:\n{}\n  signature: {}", indent(&print(executed)), executed.signature()).unwrap();
            if let Some(o) = &outcome {
                writeln!(out, "estimated cost: {:.2} -> {:.2}", o.cost_before.total, o.cost_after.total).unwrap();
            }
            out.push('\n');
        }
        let report = execute_plan(executed, &loaded.database, llm, &exec)?;
        match args.format {
            Format::Table => out.push_str(&report.result.to_pretty()),
            Format::Csv => out.push_str(&report.result.to_csv()),
        }
        if !out.ends_with('\n') {
            out.push('\n');
        }
        writeln!(out, "llm_calls: {}", report.llm_calls).unwrap();
        let est = if report.tokens_estimated { " (estimated)" } else { "" };
        writeln!(out, "tokens_in: {}{est}", report.tokens_in).unwrap();
        writeln!(out, "tokens_out: {}{est}", report.tokens_out).unwrap();
        if let Some(path) = &args.report {
            let r = RunReport {
                query: print(executed),
                original_signature: plan.signature(),
                executed_signature: executed.signature(),
                optimized: outcome.is_some(),
                cost_before: outcome.as_ref().map(|o| &o.cost_before),
                cost_after: outcome.as_ref().map(|o| &o.cost_after),
                rules: outcome.as_ref().map_or(&[][..], |o| &o.rules),
                execution: &report,
            };
            let json = serde_json::to_string_pretty(&r).expect("report serializes");
            std::fs::write(path, json + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok::<String, CliError>(out)
    })();
    backend.finish()?;
    let out = result?;
    print!("{out}");
    eprintln!("elapsed: {:.1} ms", started.elapsed().as_secs_f64() * 1000.0);
    Ok(())
}
