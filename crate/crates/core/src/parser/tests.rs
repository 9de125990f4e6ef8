use std::collections::BTreeMap;

use super::*;
use crate::plan::{validate_plan, OpClass};
use crate::relation::Column;

fn catalog() -> BTreeMap<String, Schema> {
    let mut m = BTreeMap::new();
    m.insert(
        "schools".to_string(),
        Schema::new(vec![
            Column::new("CDSCode", TypeTag::Text),
            Column::new("County", TypeTag::Text),
            Column::new("School", TypeTag::Text),
            Column::new("dob", TypeTag::Text),
        ])
        .unwrap(),
    );
    m.insert(
        "satscores".to_string(),
        Schema::new(vec![
            Column::new("cds", TypeTag::Text),
            Column::new("NumTstTakr", TypeTag::Int),
            Column::new("AvgScrMath", TypeTag::Float),
        ])
        .unwrap(),
    );
    m
}

const POPULATION_QUERY: &str = "Aggregate(sum(NumTstTakr)->total_test_takers, Join(satscores, Select(population>2000000, Project(ExtractPopulation(County)->population, schools)), cds=CDSCode))";

#[test]
fn population_query_shape() {
    let cat = catalog();
    let plan = parse(POPULATION_QUERY, &cat).unwrap();
    let kinds: Vec<(OpClass, bool)> = plan.postorder().iter().map(|id| (plan.op(*id).class(), plan.op(*id).is_semantic())).collect();
    assert_eq!(
        kinds,
        vec![
            (OpClass::Scan, false),
            (OpClass::Scan, false),
            (OpClass::Project, true),
            (OpClass::Select, false),
            (OpClass::Join, false),
            (OpClass::Aggregate, false),
        ]
    );
    assert!(validate_plan(&plan, &cat).is_valid());
    match plan.op(NodeId(2)) {
        Operator::SemanticProject { udf, outputs } => {
            assert_eq!(udf.output, OutputKind::Scalar(TypeTag::Int));
            assert_eq!(outputs, &vec!["population".to_string()]);
            assert_eq!(udf.expression, "ExtractPopulation");
        }
        other => panic!("unexpected {other:?}"),
    }
    match plan.op(NodeId(4)) {
        Operator::Join { on } => assert_eq!(on, &vec![(ColumnRef::bare("cds"), ColumnRef::bare("CDSCode"))]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn minimal_query() {
    let plan = parse("Select(true, schools)", &catalog()).unwrap();
    assert_eq!(plan.len(), 2);
}

#[test]
fn errors_have_codes_and_locations() {
    let cat = catalog();
    let e = parse("Select(true, school)", &cat).unwrap_err();
    assert_eq!(e.code(), "unknown_table");
    assert_eq!(e.pos(), Pos { line: 1, col: 14 });

    let e = parse("Select(Population > 3,\n  schools)", &cat).unwrap_err();
    assert_eq!(e.code(), "unknown_column");
    assert_eq!(e.pos(), Pos { line: 1, col: 8 });

    let e = parse("Select(County = 'x' AND isBig(County), schools)", &cat).unwrap_err();
    assert_eq!(e.code(), "syntax_error");
    assert!(e.to_string().contains("cannot be nested"), "{e}");

    let e = parse("Select(isBig(County) AND County = 'x', schools)", &cat).unwrap_err();
    assert_eq!(e.code(), "syntax_error");

    let e = parse("WITH UDF big = \"Is {County} in {State}?\";\nSelect(big(County), schools)", &cat).unwrap_err();
    assert_eq!(e.code(), "unbound_placeholder");
    assert_eq!(e.pos().line, 2);

    let e = parse("Select(County > 3, schools)", &cat).unwrap_err();
    assert_eq!(e.code(), "type_error");

    let e = parse("Select(true, schools", &cat).unwrap_err();
    assert_eq!(e.code(), "syntax_error");

    let e = parse("Join(schools, satscores, CDSCode = cds AND County = NumTstTakr)", &cat).unwrap_err();
    assert_eq!(e.code(), "type_error");
}

#[test]
fn join_sides_are_normalized() {
    let cat = catalog();
    let plan = parse("Join(schools, satscores, cds = CDSCode)", &cat).unwrap();
    match plan.op(plan.root()) {
        Operator::Join { on } => assert_eq!(on, &vec![(ColumnRef::bare("CDSCode"), ColumnRef::bare("cds"))]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn mixed_projection_items_desugar() {
    let cat = catalog();
    let plan = parse("Project([County, Size(County) -> size: integer], schools)", &cat).unwrap();
    assert_eq!(plan.len(), 3);
    assert!(matches!(plan.op(NodeId(1)), Operator::SemanticProject { .. }));
    match plan.op(NodeId(2)) {
        Operator::Project { columns } => {
            assert_eq!(columns, &vec![ColumnRef::bare("County"), ColumnRef::bare("size")])
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn round_trips() {
    let cat = catalog();
    let queries = [
        POPULATION_QUERY,
        "schools",
        "Select(true, schools)",
        "WITH UDF aquarius = \"Is the user ({dob}) an Aquarius?\";\nSelect(aquarius(dob), schools)",
        "WITH UDF info = \"Facts about {County}\" : (pop integer, area float) USING \"gpt-x\";\nProject(info(County) -> (pop, area), schools)",
        "Select(llm(\"Is {County} in the \\\"Bay Area\\\"?\", County), schools)",
        "TopK([NumTstTakr DESC, cds], 3, satscores)",
        "TopK(better(cds, AvgScrMath), 2, satscores)",
        "Aggregate([count(*) -> n, avg(AvgScrMath) -> m], group_by(cds), satscores)",
        "Aggregate(summarize(School) -> summary, group_by(County), schools)",
        "Join(schools, satscores, same(School, cds))",
        "Join(schools, satscores, true)",
        "Select(NOT (County IN ('a', 'b') OR County IS NULL) AND strftime('%m-%d', dob) BETWEEN '01-20' AND '02-18', schools)",
        "Project(NumTstTakr * 2 - -3 -> doubled, satscores)",
        "Select(AvgScrMath >= -1.5e-3, satscores)",
    ];
    for q in queries {
        let p = parse(q, &cat).unwrap_or_else(|e| panic!("{q}: {e}"));
        let text = print(&p);
        let back = parse(&text, &cat).unwrap_or_else(|e| panic!("{text}: {e}"));
        assert!(back.structurally_eq(&p), "{q}\n{text}");
        assert_eq!(print(&back), text);
    }
}

#[test]
fn quoted_identifiers_round_trip() {
    let mut cat = BTreeMap::new();
    cat.insert(
        "frpm".to_string(),
        Schema::new(vec![Column::new("Free Meal Count (K-12)", TypeTag::Int), Column::new("desc", TypeTag::Text)]).unwrap(),
    );
    let p = parse("Select(`Free Meal Count (K-12)` > 10 AND `desc` = 'x', frpm)", &cat).unwrap();
    let back = parse(&print(&p), &cat).unwrap();
    assert!(back.structurally_eq(&p));
}

#[test]
fn standalone_expressions() {
    let e = parse_expr("County IN ('Alameda', 'Marin')").unwrap();
    assert!(matches!(e, Expr::InList { .. }));
    assert!(parse_expr("isBig(County)").is_err());
    assert!(parse_expr("a = 1 b").is_err());
}
