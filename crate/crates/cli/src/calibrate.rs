//! Timing probe calls to relate LLM calls to relational cost units.
//!
//! Relational coefficients are around 0.01 units per tuple, so one unit is
//! taken to be 10 ms. The suggested `llm_call` coefficient is the mean probe
//! latency in those units.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hra_core::backend::DecodeParams;
use hra_core::exec::templates::render;
use hra_core::relation::Database;

use crate::commands::load;
use crate::config::RunConfig;
use crate::CliError;

pub const MS_PER_UNIT: f64 = 10.0;

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Probe calls per UDF kind.
    #[arg(long, default_value_t = 10)]
    pub calls: usize,
    /// Write the cost parameters with the suggested coefficient to this YAML file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A rendered sample row, drawn with the seeded generator.
fn sample(db: &Database, rng: &mut ChaCha8Rng) -> String {
    let tables: Vec<_> = db.relations().filter(|r| !r.is_empty()).collect();
    let Some(table) = tables.choose(rng) else {
        return "example".to_string();
    };
    let row = table.rows.choose(rng).expect("non-empty table");
    let text: String = table
        .schema
        .columns()
        .iter()
        .zip(row)
        .map(|(c, v)| format!("{}: {}", c.name, v.render()))
        .collect::<Vec<_>>()
        .join(", ");
    text.chars().take(300).collect()
}

fn probe(kind: &str, config: &RunConfig, db: &Database, rng: &mut ChaCha8Rng) -> Result<String, CliError> {
    let t = config.exec_config()?.templates;
    let expr = "the item is notable";
    Ok(match kind {
        "select" => render(&t.select, &[("input", &sample(db, rng)), ("expression", expr)]),
        "project" => render(
            &t.project,
            &[("expression", "A one-sentence summary of the item"), ("input", &sample(db, rng)), ("format", "text")],
        ),
        "join" => render(
            &t.join,
            &[("left", &sample(db, rng)), ("right", &sample(db, rng)), ("expression", "both items refer to the same entity")],
        ),
        "topk" => render(&t.topk, &[("expression", expr), ("a", &sample(db, rng)), ("b", &sample(db, rng))]),
        _ => {
            let rows: Vec<String> = (0..5).map(|_| sample(db, rng)).collect();
            render(
                &t.aggregate,
                &[("expression", "Summarize the rows"), ("columns", "row"), ("rows", &rows.join("\n")), ("format", "text")],
            )
        }
    })
}

pub fn calibrate(config: &RunConfig, args: &CalibrateArgs) -> Result<(), CliError> {
    if args.calls == 0 {
        return Err(CliError::Config("--calls must be at least 1".into()));
    }
    let loaded = load(config)?;
    let backend = config.backend()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = String::new();
    writeln!(out, "{:<10} {:>6} {:>7} {:>9} {:>10} {:>11}", "kind", "calls", "errors", "mean_ms", "tokens_in", "tokens_out")
        .unwrap();
    let (mut total_ms, mut total_ok) = (0.0, 0usize);
    let result = (|| {
        for kind in ["select", "project", "join", "topk", "aggregate"] {
            let (mut ms, mut ok, mut errors, mut tin, mut tout) = (0.0, 0usize, 0usize, 0u64, 0u64);
            for _ in 0..args.calls {
                let prompt = probe(kind, config, &loaded.database, &mut rng)?;
                let started = Instant::now();
                match backend.llm.complete(&prompt, &DecodeParams::default()) {
                    Ok(c) => {
                        ms += started.elapsed().as_secs_f64() * 1000.0;
                        ok += 1;
                        tin += c.tokens_in;
                        tout += c.tokens_out;
                    }
                    Err(e) if e.is_fatal() => return Err(CliError::Execution(format!("probe call failed: {e}"))),
                    Err(_) => errors += 1,
                }
            }
            let mean = if ok > 0 { ms / ok as f64 } else { 0.0 };
            let per = |t: u64| if ok > 0 { t / ok as u64 } else { 0 };
            writeln!(out, "{kind:<10} {:>6} {errors:>7} {mean:>9.0} {:>10} {:>11}", args.calls, per(tin), per(tout)).unwrap();
            total_ms += ms;
            total_ok += ok;
        }
        Ok(())
    })();
    backend.finish()?;
    result?;
    if total_ok == 0 {
        return Err(CliError::Execution("every probe call failed".into()));
    }
    let mean = total_ms / total_ok as f64;
    let suggested = (mean / MS_PER_UNIT).max(0.01);
    writeln!(out, "mean latency: {mean:.0} ms per call").unwrap();
    writeln!(out, "suggested llm_call: {suggested:.0} (1 cost unit = {MS_PER_UNIT} ms)").unwrap();
    if let Some(path) = &args.out {
        let mut params = config.cost_params()?;
        params.llm_call = suggested;
        let yaml = serde_yaml::to_string(&params).expect("cost parameters serialize");
        std::fs::write(path, yaml).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    print!("{out}");
    Ok(())
}
