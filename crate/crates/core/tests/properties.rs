//! Invariants over randomly generated plans and databases.

mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hra_core::equivalence::{check_equivalence, SymbolicChecker, Verdict};
use hra_core::exec::{execute, ExecConfig};
use hra_core::optimizer::{estimate_cost, place_llm_udfs, CostParams, Statistics};
use hra_core::parser::{parse, print};
use hra_core::plan::QueryPlan;

use support::*;

fn case(seed: u64) -> (RandomCase, hra_core::relation::Database) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = random_case(&mut rng, 8, 3);
    let db = random_db(case.n_tables, 20, &mut rng);
    (case, db)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_plans_parse_back(seed in any::<u64>()) {
        let (case, _) = case(seed);
        let text = print(&case.plan);
        let again = parse(&text, &schemas(case.n_tables)).unwrap();
        prop_assert!(again.structurally_eq(&case.plan), "{}\nprinted as\n{}", case.query, text);
    }

    #[test]
    fn signatures_round_trip(seed in any::<u64>()) {
        let (case, _) = case(seed);
        let back = QueryPlan::from_signature(&case.plan.signature()).unwrap();
        prop_assert!(back.structurally_eq(&case.plan));
        prop_assert_eq!(back.signature(), case.plan.signature());
    }

    #[test]
    fn every_plan_is_equivalent_to_itself(seed in any::<u64>()) {
        let (case, _) = case(seed);
        let r = check_equivalence(&case.plan, &case.plan, &schemas(case.n_tables));
        // Aggregates are outside the strict checker, which then reports unknown.
        prop_assert_ne!(r.verdict, Verdict::NotEquivalent, "{}", r);
    }

    #[test]
    fn results_do_not_depend_on_parallelism(seed in any::<u64>()) {
        let (case, db) = case(seed);
        let oracle = hash_oracle();
        let a = run(&case.plan, &db, &oracle);
        let config = ExecConfig { parallelism: 8, timeout: None, ..ExecConfig::default() };
        let b = execute(&case.plan, &db, &oracle, &config).unwrap();
        prop_assert_eq!(&a.result, &b.result);
        prop_assert_eq!(a.llm_calls, b.llm_calls);
    }

    #[test]
    fn duplicate_rows_cost_no_extra_calls(seed in any::<u64>()) {
        let (case, db) = case(seed);
        let oracle = hash_oracle();
        let once = run(&case.plan, &db, &oracle);
        let twice = run(&case.plan, &doubled(&db), &oracle);
        prop_assert_eq!(once.llm_calls, twice.llm_calls, "{}", case.query);
    }

    #[test]
    fn placement_never_raises_the_estimate(seed in any::<u64>()) {
        let (case, db) = case(seed);
        let stats = Statistics::from_database(&db);
        let params = CostParams::default();
        let out = place_llm_udfs(&case.plan, &stats, &params, &SymbolicChecker::default()).unwrap();
        prop_assert!(out.cost_after <= out.cost_before + 1e-9);
        let recomputed = estimate_cost(&out.plan, &stats, &params).unwrap().total;
        prop_assert!((recomputed - out.cost_after).abs() < 1e-6);
    }
}
