use super::*;
use crate::equivalence::{BaseTables, EquivalenceResult, SymbolicChecker, Verdict};
use crate::parser::parse;
use crate::plan::{OpClass, Operator};
use crate::relation::{Column, Database, Relation, Schema};
use crate::value::{TypeTag, Value};

/// 73 drivers with 40 nationalities; 20 drivers finish each race.
fn f1() -> Database {
    let drivers = Relation::new(
        "drivers",
        Schema::new(vec![Column::new("driverId", TypeTag::Int), Column::new("nationality", TypeTag::Text)]).unwrap(),
        (0..73).map(|i| vec![Value::Int(i), Value::text(format!("N{}", i % 40))]).collect(),
    )
    .unwrap();
    let mut rows = Vec::new();
    for race in 0..20 {
        for d in 0..20 {
            rows.push(vec![Value::Int(race), Value::Int((d * 3 + race) % 73)]);
        }
    }
    let results = Relation::new(
        "results",
        Schema::new(vec![Column::new("raceId", TypeTag::Int), Column::new("driverId", TypeTag::Int)]).unwrap(),
        rows,
    )
    .unwrap();
    [drivers, results].into_iter().collect()
}

const LATE: &str = "Aggregate(count(*) -> n, Select(isAsian(nationality), Join(drivers, Select(raceId = 18, results), drivers.driverId = results.driverId)))";
const EARLY: &str = "Aggregate(count(*) -> n, Join(Select(isAsian(nationality), drivers), Select(raceId = 18, results), drivers.driverId = results.driverId))";

#[test]
fn semantic_selection_moves_above_a_reducing_join() {
    let db = f1();
    let stats = Statistics::from_database(&db);
    let plan = parse(EARLY, &db).unwrap();
    let out = place_llm_udfs(&plan, &stats, &CostParams::default(), &SymbolicChecker::default()).unwrap();
    assert!(cost_lt(out.cost_after, out.cost_before), "{} vs {}", out.cost_after, out.cost_before);
    let expected = parse(LATE, &db).unwrap();
    assert!(out.plan.structurally_eq(&expected), "{}", out.plan);
    assert!(out.checks.iter().any(|c| c.result.verdict == Verdict::Equivalent));
}

#[test]
fn late_plan_is_already_optimal() {
    let db = f1();
    let stats = Statistics::from_database(&db);
    let plan = parse(LATE, &db).unwrap();
    let out = place_llm_udfs(&plan, &stats, &CostParams::default(), &SymbolicChecker::default()).unwrap();
    assert!(out.plan.structurally_eq(&plan), "{}", out.plan);
}

struct Never;

impl crate::equivalence::EquivalenceOracle for Never {
    fn check(&self, _: &QueryPlan, _: &QueryPlan, _: &BaseTables) -> EquivalenceResult {
        EquivalenceResult { verdict: Verdict::Unknown, reason: "never".into(), left: None, right: None }
    }
}

#[test]
fn unapproved_moves_are_not_made() {
    let db = f1();
    let stats = Statistics::from_database(&db);
    let plan = parse(EARLY, &db).unwrap();
    let out = place_llm_udfs(&plan, &stats, &CostParams::default(), &Never).unwrap();
    assert!(out.plan.structurally_eq(&plan));
}

#[test]
fn too_many_movable_operators_leave_the_plan_alone() {
    let db = f1();
    let stats = Statistics::from_database(&db);
    let mut q = "drivers".to_string();
    for i in 0..7 {
        q = format!("Select(f{i}(nationality), {q})");
    }
    let plan = parse(&q, &db).unwrap();
    let out = place_llm_udfs(&plan, &stats, &CostParams::default(), &SymbolicChecker::default()).unwrap();
    assert!(out.plan.structurally_eq(&plan));
    assert_eq!(out.notes.len(), 1);
}

#[test]
fn selections_are_pushed_below_joins() {
    let db = f1();
    let stats = Statistics::from_database(&db);
    let plan = parse("Select(raceId = 18 AND nationality = 'N1', Join(drivers, results, drivers.driverId = results.driverId))", &db).unwrap();
    let out = relational_rewrite(&plan, &stats, &CostParams::default()).unwrap();
    let root = out.root();
    assert_eq!(out.op(root).class(), OpClass::Join);
    for c in out.children(root) {
        assert!(matches!(out.op(*c), Operator::Select { .. }), "{out}");
    }
}

#[test]
fn join_reordering_keeps_the_column_order() {
    let mut db = f1();
    db.insert(
        Relation::new(
            "races",
            Schema::new(vec![Column::new("raceId", TypeTag::Int), Column::new("year", TypeTag::Int)]).unwrap(),
            vec![vec![Value::Int(18), Value::Int(2008)]],
        )
        .unwrap(),
    );
    let stats = Statistics::from_database(&db);
    let plan = parse(
        "Join(Join(results, drivers, results.driverId = drivers.driverId), races, results.raceId = races.raceId)",
        &db,
    )
    .unwrap();
    let out = relational_rewrite(&plan, &stats, &CostParams::default()).unwrap();
    let before = crate::plan::output_schema(&plan, &stats).unwrap();
    let after = crate::plan::output_schema(&out, &stats).unwrap();
    assert_eq!(before, after);
    let c0 = estimate_cost(&plan, &stats, &CostParams::default()).unwrap().total;
    let c1 = estimate_cost(&out, &stats, &CostParams::default()).unwrap().total;
    assert!(!cost_lt(c0, c1));
}

#[test]
fn llm_calls_follow_distinct_inputs() {
    let db = f1();
    let stats = Statistics::from_database(&db);
    let plan = parse("Select(isAsian(nationality), drivers)", &db).unwrap();
    let c = estimate_cost(&plan, &stats, &CostParams::default()).unwrap();
    assert!((c.llm_calls - 40.0).abs() < 1e-9, "{}", c.llm_calls);
    assert!((c.total - (0.73 + 0.73 + 4000.0)).abs() < 1e-9);
}

