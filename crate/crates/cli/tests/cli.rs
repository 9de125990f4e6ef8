use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn hra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hra")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(rel: &str) -> String {
    fixtures().join(rel).to_string_lossy().into_owned()
}

#[test]
fn population_query_sums_los_angeles_test_takers() {
    let o = hra(&[
        "--catalog",
        &path("catalog.yaml"),
        "--mock-rules",
        &path("mock/population.json"),
        "run",
        &path("queries/population.hra"),
        "--format",
        "csv",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    // Los Angeles is the only county above two million: 142 + 88 + 298 + 61.
    assert!(out.starts_with("total_test_takers\n589\n"), "{out}");
    // One call per distinct county.
    assert!(out.contains("llm_calls: 5\n"), "{out}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("elapsed:"));
}

#[test]
fn stdout_does_not_depend_on_parallelism() {
    let run = |p: &str| {
        let o = hra(&[
            "--catalog",
            &path("join/catalog.yaml"),
            "--mock-rules",
            &path("join/mock.json"),
            "--join-strategy",
            "smart",
            "--parallelism",
            p,
            "--seed",
            "7",
            "run",
            &path("join/located.hra"),
            "--explain",
        ]);
        assert_eq!(o.status.code(), Some(0));
        stdout(&o)
    };
    let a = run("1");
    assert_eq!(a, run("10"));
    assert_eq!(a, run("1"));
}

#[test]
fn optimization_reduces_calls_on_the_late_filter_fixture() {
    let run = |extra: &[&str]| {
        let mut args = vec![
            "--catalog".to_string(),
            path("lazy/catalog.yaml"),
            "--mock-rules".to_string(),
            path("lazy/mock.json"),
            "run".to_string(),
            path("lazy/asian_drivers.hra"),
            "--format".to_string(),
            "csv".to_string(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        let o = Command::new(env!("CARGO_BIN_EXE_hra")).args(&args).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    let calls = |out: &str| -> u64 {
        out.lines().find_map(|l| l.strip_prefix("llm_calls: ")).unwrap().parse().unwrap()
    };
    let plain = run(&["--no-optimize"]);
    let optimized = run(&[]);
    assert!(plain.starts_with("asian_drivers\n14\n"), "{plain}");
    assert!(optimized.starts_with("asian_drivers\n14\n"), "{optimized}");
    assert!(calls(&optimized) < calls(&plain), "{optimized}\n{plain}");
}

#[test]
fn explain_shows_both_signatures_and_rules() {
    let o = hra(&[
        "--catalog",
        &path("lazy/catalog.yaml"),
        "explain",
        &path("lazy/asian_drivers.hra"),
        "--verify",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.matches("signature: ").count(), 2, "{out}");
    assert!(out.contains("  - LLM UDF placement"), "{out}");
    assert!(out.contains("verdict: equivalent"), "{out}");
}

#[test]
fn exit_codes_follow_the_failing_phase() {
    let catalog = path("catalog.yaml");
    // Generation: a question with a backend that only says "no".
    let o = hra(&["--catalog", &catalog, "--max-retries", "1", "run", "How many schools are in Alameda?"]);
    assert_eq!(o.status.code(), Some(2));
    // A supplied query that does not parse also fails in the generation phase.
    let o = hra(&["--catalog", &catalog, "run", "--hra", "Select(true, nowhere)"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_table"));
    // Execution: the replay backend has no recording for the prompt.
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = hra(&[
        "--catalog",
        &catalog,
        "--backend",
        "replay",
        "--replay",
        empty.to_str().unwrap(),
        "run",
        &path("queries/population.hra"),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    // Configuration problems.
    assert_eq!(hra(&["--catalog", &catalog, "--parallelism", "0", "ingest"]).status.code(), Some(1));
    assert_eq!(hra(&["--catalog", &catalog, "--timeout", "0", "ingest"]).status.code(), Some(1));
    assert_eq!(hra(&["ingest"]).status.code(), Some(1));
    assert_eq!(hra(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(hra(&["--help"]).status.code(), Some(0));
}

#[test]
fn ingest_reports_tables_and_writes_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.yaml");
    let o = hra(&["--catalog", &path("catalog.yaml"), "ingest", "--model-out", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("loaded 5 table(s)\n"), "{out}");
    assert!(out.contains("  schools: 12 row(s)"), "{out}");
    let yaml = std::fs::read_to_string(model).unwrap();
    let m = hra_core::catalog::SemanticDataModel::from_yaml(&yaml).unwrap();
    assert_eq!(m.tables().len(), 5);
}

#[test]
fn ingest_reports_ragged_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.csv"), "a,b\n1,2\n3\n").unwrap();
    std::fs::write(dir.path().join("e.csv"), "a,b\n").unwrap();
    let cat = dir.path().join("catalog.yaml");
    std::fs::write(&cat, "tables:\n  t: t.csv\n").unwrap();
    let o = hra(&["--catalog", cat.to_str().unwrap(), "ingest"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row"), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(&cat, "tables:\n  e: e.csv\n").unwrap();
    let o = hra(&["--catalog", cat.to_str().unwrap(), "ingest"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("e: 0 row(s)"));
}

#[test]
fn bench_reports_nested_and_smart_join_calls() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.csv");
    let o = hra(&["bench", &path("join/suite.yaml"), "--report", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "name,optimized,join_strategy,status,correct,rows,llm_calls,tokens_in,tokens_out,est_cost,error");
    assert!(lines[1].starts_with("located_in,false,nested,ok,true,0,224,"), "{out}");
    assert!(lines[2].starts_with("located_in,false,smart,ok,true,0,5,"), "{out}");
    assert!(lines.iter().any(|l| l.starts_with("missing_table,,,generation_failed,")), "{out}");

    let mut r = csv::Reader::from_path(&report).unwrap();
    assert!(r.headers().unwrap().iter().any(|h| h == "elapsed_ms"));
    assert_eq!(r.records().count(), 5);

    // Stdout omits timings, so it is identical across runs.
    assert_eq!(stdout(&hra(&["bench", &path("join/suite.yaml")])), out);
}

#[test]
fn empty_suite_gives_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.yaml");
    std::fs::write(&suite, "queries: []\n").unwrap();
    let o = hra(&["bench", suite.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn generate_prints_the_query_and_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let rules = dir.path().join("rules.json");
    let query = "Aggregate([count(*) -> n], Select(County = 'Alameda', schools))";
    let json = serde_json::json!({
        "rules": [
            {"match": "Select the database columns", "response": "{\"columns\": [\"schools.County\"]}"},
            {"match": "TASK:", "response": format!("Query: {query}")}
        ],
        "default": "1. Select: schools in Alameda\n   Justification: filter\nINTENT: relational"
    });
    std::fs::write(&rules, json.to_string()).unwrap();
    let trace = dir.path().join("trace.jsonl");
    let o = hra(&[
        "--catalog",
        &path("catalog.yaml"),
        "--mock-rules",
        rules.to_str().unwrap(),
        "generate",
        "How many schools are in Alameda?",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).trim_end().ends_with(query), "{}", stdout(&o));
    let lines = std::fs::read_to_string(trace).unwrap();
    assert_eq!(lines.lines().count(), 1);
}

#[test]
fn calibrate_suggests_a_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cost.yaml");
    let o = hra(&["--catalog", &path("catalog.yaml"), "calibrate", "--calls", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for kind in ["select", "project", "join", "topk", "aggregate"] {
        assert!(text.lines().any(|l| l.starts_with(kind)), "{text}");
    }
    assert!(text.contains("suggested llm_call:"));
    let params: hra_core::optimizer::CostParams = serde_yaml::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(params.llm_call > 0.0);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.yaml");
    std::fs::write(
        &config,
        format!("catalog: {}\nmock_rules: {}\nparallelism: 2\n", path("catalog.yaml"), path("mock/population.json")),
    )
    .unwrap();
    let o = hra(&["--config", config.to_str().unwrap(), "run", &path("queries/population.hra")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("589"));
    std::fs::write(&config, "parallelism: 2\nbogus: 1\n").unwrap();
    assert_eq!(hra(&["--config", config.to_str().unwrap(), "ingest"]).status.code(), Some(1));
}
