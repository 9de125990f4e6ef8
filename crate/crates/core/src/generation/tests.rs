use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::*;
use crate::backend::MockBackend;
use crate::catalog::{load_catalog, LoadedCatalog};

fn fixtures() -> LoadedCatalog {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/catalog.yaml");
    load_catalog(&path).unwrap()
}

const QUESTION: &str = "What is the total number of SAT test takers at schools located in counties with a population over 2,000,000?";
const ANSWER: &str = "Aggregate(sum(NumTstTakr)->total_test_takers, Join(satscores, Select(population>2000000, Project(ExtractPopulation(County)->population, schools)), cds=CDSCode))";

const DECOMPOSITION: &str = "1. Semantic Projection: Extract the population of each County in schools as population
   Justification: population is not stored in the database
2. Select: population > 2,000,000
3. Join: satscores.cds = schools.CDSCode
4. Aggregate: sum of NumTstTakr as total_test_takers
INTENT: aggregation";

#[test]
fn exemplars_parse_against_the_fixtures() {
    let cat = fixtures();
    let ex = default_exemplars();
    assert_eq!(ex.len(), 5);
    for e in &ex {
        let plan = parse(&e.query, &cat.model).unwrap_or_else(|err| panic!("{}: {err}", e.query));
        // Between 2 and 6 operators besides scans, over at most 4 tables.
        let ids = plan.postorder();
        let scans = ids.iter().filter(|id| matches!(plan.op(**id), crate::plan::Operator::Scan { .. })).count();
        let ops = ids.len() - scans;
        assert!((2..=6).contains(&ops) && scans <= 4, "{}: {ops} operators", e.query);
    }
}

#[test]
fn exemplar_sets_must_cover_every_operator_kind() {
    let text = "- question: q\n  query: Select(a(x), t)\n";
    assert!(matches!(parse_exemplars(text), Err(ExemplarError::MissingKind("Project"))));
}

#[test]
fn decomposition_of_the_population_question() {
    let d = parse_decomposition(DECOMPOSITION).unwrap();
    let ops: Vec<&str> = d.steps.iter().map(|s| s.operator.as_str()).collect();
    assert_eq!(ops, vec!["Semantic Project", "Select", "Join", "Aggregate"]);
    assert_eq!(d.intent, QueryIntent::Aggregation);
    assert!(d.steps[0].justification.is_some());
    assert_eq!(parse_decomposition(&d.to_string()).unwrap(), d);
}

#[test]
fn relational_decomposition_has_no_semantic_step() {
    let cat = fixtures();
    let m = MockBackend::fixed("1. Scan: drivers\n2. Select: nationality = 'German'\nINTENT: filtering");
    let d = decompose("Which drivers are German?", &cat.model, &m, &DecodeParams::default(), RetryPolicy::default()).unwrap();
    assert_eq!(d.steps.len(), 2);
    assert!(d.steps.iter().all(|s| !s.is_semantic()));
}

#[test]
fn unknown_operators_and_missing_justifications_are_retried() {
    let cat = fixtures();
    let n = AtomicUsize::new(0);
    let m = MockBackend::new(move |_| match n.fetch_add(1, Ordering::SeqCst) {
        0 => "1. Filter: x\nINTENT: filtering".into(),
        1 => "1. Semantic Select: asian drivers\nINTENT: filtering".into(),
        _ => "1. Semantic Select: asian drivers\n   Justification: needs world knowledge\nINTENT: filtering".into(),
    });
    let d = decompose("q", &cat.model, &m, &DecodeParams::default(), RetryPolicy::default()).unwrap();
    assert_eq!(m.call_count(), 3);
    assert!(m.prompts()[1].contains("unknown operator `Filter`"));
    assert!(m.prompts()[2].contains("has no justification"));
    assert_eq!(d.steps[0].operator, "Semantic Select");
}

#[test]
fn prompt_sections_are_ordered_and_deterministic() {
    let cat = fixtures();
    let mut ctx = GenerationContext::new(QUESTION, cat.model.clone());
    let plain = assemble_prompt(&ctx);
    assert_eq!(plain, assemble_prompt(&ctx));
    let at = |s: &str| plain.find(s).unwrap_or_else(|| panic!("missing {s}"));
    assert!(at("TASK:") < at("DATABASE SCHEMA:"));
    assert!(at("DATABASE SCHEMA:") < at("QUESTION:"));
    assert!(at("QUESTION:") < at("INSTRUCTIONS:"));
    assert!(at("INSTRUCTIONS:") < at("EXAMPLES:"));
    assert!(plain.contains("is_R1_research_university") && plain.contains("get_info"));
    assert!(!plain.contains("Operator plan:"));

    ctx.decomposition = Some(parse_decomposition(DECOMPOSITION).unwrap());
    let with = assemble_prompt(&ctx);
    let block = format!("\n\nOperator plan:\n{}", ctx.decomposition.as_ref().unwrap());
    assert_eq!(with.replacen(&block, "", 1), plain);
}

#[test]
fn golden_prompt_for_the_population_question() {
    let cat = fixtures();
    let mut ctx = GenerationContext::new(QUESTION, cat.model.clone());
    ctx.decomposition = Some(parse_decomposition(DECOMPOSITION).unwrap());
    let prompt = assemble_prompt(&ctx);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/population_prompt.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &prompt).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden prompt file (regenerate with UPDATE_GOLDEN=1)");
    assert_eq!(prompt, golden);
}

fn scripted(answers: Vec<&'static str>) -> MockBackend {
    let n = AtomicUsize::new(0);
    MockBackend::new(move |p| {
        if p.contains("Break the question") {
            return DECOMPOSITION.into();
        }
        let i = n.fetch_add(1, Ordering::SeqCst);
        answers[i.min(answers.len() - 1)].into()
    })
}

#[test]
fn correct_first_answer_needs_one_attempt() {
    let cat = fixtures();
    let m = scripted(vec![ANSWER]);
    let g = generate_query(QUESTION, &cat.model, &m, Some(&cat.database), &GenerationOptions::default()).unwrap();
    assert_eq!(g.trace.attempts.len(), 1);
    assert_eq!(g.query, ANSWER);
    assert_eq!(g.plan.len(), 6);
    assert!(g.trace.decomposition.is_some());
    assert!(g.trace.attempts[0].prompt.contains("Operator plan:"));
}

#[test]
fn syntax_error_is_fed_back() {
    let cat = fixtures();
    let broken = "Aggregate(sum(NumTstTakr)->total_test_takers, Join(satscores, Select(population>2000000, Project(ExtractPopulation(County)->population, schools)), cds=CDSCode)";
    let m = scripted(vec![broken, ANSWER]);
    let g = generate_query(QUESTION, &cat.model, &m, Some(&cat.database), &GenerationOptions::default()).unwrap();
    assert_eq!(g.trace.attempts.len(), 2);
    let first = &g.trace.attempts[0];
    assert_eq!(first.stage, Some(FailureStage::Parse));
    let error = first.error.as_deref().unwrap();
    assert!(error.starts_with("[syntax_error]"));
    assert!(g.trace.attempts[1].prompt.contains(error));
}

#[test]
fn unknown_columns_are_fed_back() {
    let cat = fixtures();
    let m = scripted(vec!["Select(Population > 3, schools)", "Select(true, schools)"]);
    let g = generate_query("q", &cat.model, &m, None, &GenerationOptions { decompose: false, ..GenerationOptions::default() }).unwrap();
    assert_eq!(g.trace.attempts[0].error.as_deref().map(|e| e.starts_with("[unknown_column]")), Some(true));
}

#[test]
fn runtime_errors_in_the_dry_run_are_fed_back() {
    let cat = fixtures();
    let overflow = "Project(NumTstTakr * 9223372036854775807 -> big, satscores)";
    let m = scripted(vec![overflow, "satscores"]);
    let g = generate_query("q", &cat.model, &m, Some(&cat.database), &GenerationOptions::default()).unwrap();
    assert_eq!(g.trace.attempts[0].stage, Some(FailureStage::DryRun));
    assert_eq!(g.trace.attempts.len(), 2);
}

#[test]
fn garbage_exhausts_the_retries() {
    let cat = fixtures();
    let m = scripted(vec!["I am not sure."]);
    let err = generate_query(QUESTION, &cat.model, &m, None, &GenerationOptions::default()).unwrap_err();
    match &err {
        GenerationError::Exhausted { attempts, .. } => assert_eq!(*attempts, 4),
        other => panic!("unexpected {other:?}"),
    }
    let jsonl = err.trace().to_jsonl();
    assert_eq!(jsonl.lines().count(), 4);
    let rec: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(rec["stage"], "parse");
}

#[test]
fn fenced_and_labelled_answers_are_extracted() {
    assert_eq!(extract_query("```hra\nSelect(true, schools)\n```"), "Select(true, schools)");
    assert_eq!(extract_query("Here it is.\nQuery:\nschools"), "schools");
}
