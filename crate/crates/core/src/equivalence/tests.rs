use std::collections::BTreeMap;

use super::*;
use crate::parser::parse;
use crate::relation::{Column, Schema};
use crate::value::TypeTag;

fn catalog() -> BTreeMap<String, Schema> {
    let mut m = BTreeMap::new();
    m.insert(
        "drivers".to_string(),
        Schema::new(vec![Column::new("driverId", TypeTag::Int), Column::new("nationality", TypeTag::Text)]).unwrap(),
    );
    m.insert(
        "results".to_string(),
        Schema::new(vec![Column::new("raceId", TypeTag::Int), Column::new("driverId", TypeTag::Int)]).unwrap(),
    );
    m
}

fn check(a: &str, b: &str) -> EquivalenceResult {
    let cat = catalog();
    let p1 = parse(a, &cat).unwrap();
    let p2 = parse(b, &cat).unwrap();
    check_equivalence(&p1, &p2, &cat)
}

const ABOVE: &str = "Select(isAsian(nationality), Join(drivers, results, drivers.driverId = results.driverId))";
const BELOW: &str = "Join(Select(isAsian(nationality), drivers), results, drivers.driverId = results.driverId)";

#[test]
fn semantic_select_commutes_with_join() {
    let r = check(ABOVE, BELOW);
    assert_eq!(r.verdict, Verdict::Equivalent, "{r}");
    let l = r.left.unwrap();
    assert_eq!(l.to_string(), "(drivers.driverId: v1, drivers.nationality: v2, results.raceId: v3, results.driverId: v4) exists when isAsian(v2) AND v1 = v4");
}

#[test]
fn base_symbols_follow_first_appearance() {
    let cat = catalog();
    let p = parse(BELOW, &cat).unwrap();
    let base = BaseTables::for_plans(&[&p], &cat).unwrap();
    let t = symbolic_execute(&p, &base).unwrap();
    let terms: Vec<String> = t.columns.iter().map(|c| c.term.to_string()).collect();
    assert_eq!(terms, ["v1", "v2", "v3", "v4"]);
}

#[test]
fn dropping_the_udf_column_is_not_equivalent() {
    let cat = catalog();
    let p1 = parse(ABOVE, &cat).unwrap();
    // The UDF reads `nationality` after a projection removed it.
    let bad = crate::plan::PlanTree::binary(
        crate::plan::Operator::Join {
            on: vec![(crate::relation::ColumnRef::parse("drivers.driverId"), crate::relation::ColumnRef::parse("results.driverId"))],
        },
        crate::plan::PlanTree::unary(
            p1.op(p1.root()).clone(),
            crate::plan::PlanTree::unary(
                crate::plan::Operator::Project { columns: vec![crate::relation::ColumnRef::bare("driverId")] },
                crate::plan::PlanTree::scan("drivers"),
            ),
        ),
        crate::plan::PlanTree::scan("results"),
    )
    .into_plan();
    let r = check_equivalence(&p1, &bad, &cat);
    assert_eq!(r.verdict, Verdict::NotEquivalent, "{r}");
}

#[test]
fn different_output_columns_are_not_equivalent() {
    let r = check("Project(nationality, drivers)", "Project(driverId, drivers)");
    assert_eq!(r.verdict, Verdict::NotEquivalent);
}

#[test]
fn plans_are_equivalent_to_themselves() {
    for q in [ABOVE, BELOW, "TopK(driverId DESC, 3, Select(isAsian(nationality), drivers))", "Aggregate(count(*), group_by(nationality), drivers)"] {
        let r = check(q, q);
        assert_eq!(r.verdict, Verdict::Equivalent, "{q}: {r}");
    }
}

#[test]
fn selection_below_topk_is_unknown() {
    let r = check(
        "Select(isAsian(nationality), TopK(driverId, 3, drivers))",
        "TopK(driverId, 3, Select(isAsian(nationality), drivers))",
    );
    assert_eq!(r.verdict, Verdict::Unknown, "{r}");
}

#[test]
fn strict_execution_rejects_aggregation() {
    let cat = catalog();
    let p = parse("Aggregate(count(*), drivers)", &cat).unwrap();
    let base = BaseTables::for_plans(&[&p], &cat).unwrap();
    assert!(matches!(symbolic_execute(&p, &base), Err(SymError::Unsupported(_))));
}

#[test]
fn counterexample_separates_different_predicates() {
    let r = check("Select(isAsian(nationality), drivers)", "Select(isEuropean(nationality), drivers)");
    assert_eq!(r.verdict, Verdict::NotEquivalent, "{r}");
    assert!(r.reason.contains("counterexample"));
}

#[test]
fn predicate_order_and_comparison_direction_are_canonical() {
    let r = check(
        "Select(driverId > 3 AND nationality = 'x', drivers)",
        "Select(nationality = 'x', Select(3 < driverId, drivers))",
    );
    assert_eq!(r.verdict, Verdict::Equivalent, "{r}");
}

#[test]
fn semantic_projections_in_different_order_differ() {
    let r = check(
        "Project(f(nationality) -> a, Project(g(nationality) -> b, drivers))",
        "Project(g(nationality) -> b, Project(f(nationality) -> a, drivers))",
    );
    assert_eq!(r.verdict, Verdict::NotEquivalent, "{r}");
}

#[test]
fn opaque_inputs_keep_their_qualifiers() {
    let cat = catalog();
    let mut base = BaseTables::new();
    let joined = Schema::new(vec![
        Column::new("driverId", TypeTag::Int).with_qualifier("drivers"),
        Column::new("nationality", TypeTag::Text).with_qualifier("drivers"),
    ])
    .unwrap();
    base.add_table("in0", &joined);
    let p = parse("Select(isAsian(drivers.nationality), drivers)", &cat).unwrap();
    let plan = QueryPlan::from_signature(&p.signature().replace("\"drivers\"}", "\"in0\"}")).unwrap();
    let t = SymbolicChecker::default().check(&plan, &plan, &base);
    assert_eq!(t.verdict, Verdict::Equivalent, "{t}");
}
