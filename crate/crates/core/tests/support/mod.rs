//! Seeded generators and oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use hra_core::backend::MockBackend;
use hra_core::exec::{execute, ExecConfig, ExecutionReport};
use hra_core::optimizer::{estimate_cost, Assignment, CostParams, PlacementProblem, Statistics};
use hra_core::parser::parse;
use hra_core::plan::{validate_plan, QueryPlan};
use hra_core::relation::{Column, Database, Relation, Schema};
use hra_core::value::{TypeTag, Value};

pub const WORDS: [&str; 8] = ["amber", "basalt", "cedar", "dune", "ember", "fjord", "grove", "heath"];

/// FNV-1a, so oracle answers do not depend on the standard hasher.
pub fn fnv(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Answers every prompt from a hash of its text: yes/no for selections and
/// pairs, a number for projections, A/B for rankings.
pub fn hash_oracle() -> MockBackend {
    MockBackend::new(|p| {
        let h = fnv(p);
        if p.starts_with("Which item should be ranked first") {
            if h % 2 == 0 { "A" } else { "B" }.to_string()
        } else if p.contains("Answer with only the value") {
            (h % 100).to_string()
        } else if h % 3 == 0 {
            "no".to_string()
        } else {
            "yes".to_string()
        }
    })
}

pub fn table_schema(i: usize) -> Schema {
    Schema::new(vec![
        Column::new(format!("k{i}"), TypeTag::Int),
        Column::new(format!("a{i}"), TypeTag::Int),
        Column::new(format!("s{i}"), TypeTag::Text),
    ])
    .unwrap()
}

pub fn schemas(n: usize) -> BTreeMap<String, Schema> {
    (0..n).map(|i| (format!("t{i}"), table_schema(i))).collect()
}

/// Up to `max_rows` rows per table with small domains so joins and filters hit.
pub fn random_db(n_tables: usize, max_rows: usize, rng: &mut impl Rng) -> Database {
    (0..n_tables)
        .map(|i| {
            let rows = (0..rng.gen_range(0..=max_rows))
                .map(|_| {
                    let a = if rng.gen_bool(0.05) { Value::Null } else { Value::Int(rng.gen_range(0..10)) };
                    let s = if rng.gen_bool(0.05) {
                        Value::Null
                    } else {
                        Value::Text(WORDS.choose(rng).unwrap().to_string())
                    };
                    vec![Value::Int(rng.gen_range(0..5)), a, s]
                })
                .collect();
            Relation::new(format!("t{i}"), table_schema(i), rows).unwrap()
        })
        .collect()
}

#[derive(Debug, Clone)]
enum Tree {
    Scan(usize),
    Join(Box<Tree>, Box<Tree>, usize, usize),
    Select(Box<Tree>, String),
    SemSelect(Box<Tree>, usize, usize),
    SemProject(Box<Tree>, usize, usize),
    Count(Box<Tree>),
}

impl Tree {
    fn size(&self) -> usize {
        match self {
            Tree::Scan(_) => 1,
            Tree::Join(l, r, ..) => 1 + l.size() + r.size(),
            Tree::Select(c, _) | Tree::SemSelect(c, ..) | Tree::SemProject(c, ..) | Tree::Count(c) => 1 + c.size(),
        }
    }

    fn tables(&self) -> Vec<usize> {
        match self {
            Tree::Scan(t) => vec![*t],
            Tree::Join(l, r, ..) => [l.tables(), r.tables()].concat(),
            Tree::Select(c, _) | Tree::SemSelect(c, ..) | Tree::SemProject(c, ..) | Tree::Count(c) => c.tables(),
        }
    }

    fn outputs(&self) -> Vec<usize> {
        match self {
            Tree::Scan(_) => vec![],
            Tree::Join(l, r, ..) => [l.outputs(), r.outputs()].concat(),
            Tree::SemProject(c, _, j) => [c.outputs(), vec![*j]].concat(),
            Tree::Select(c, _) | Tree::SemSelect(c, ..) | Tree::Count(c) => c.outputs(),
        }
    }

    fn render(&self) -> String {
        match self {
            Tree::Scan(t) => format!("t{t}"),
            Tree::Join(l, r, a, b) => format!("Join({}, {}, k{a} = k{b})", l.render(), r.render()),
            Tree::Select(c, p) => format!("Select({p}, {})", c.render()),
            Tree::SemSelect(c, t, j) => format!("Select(u{j}(s{t}), {})", c.render()),
            Tree::SemProject(c, t, j) => format!("Project(v{j}(s{t}) -> p{j}, {})", c.render()),
            Tree::Count(c) => format!("Aggregate([count(*) -> n], {})", c.render()),
        }
    }

    /// Wraps the node at preorder position `at` with `wrap`.
    fn wrap_at(self, at: &mut usize, wrap: &mut dyn FnMut(Tree) -> Tree) -> Tree {
        if *at == 0 {
            *at = usize::MAX;
            return wrap(self);
        }
        *at -= 1;
        match self {
            Tree::Scan(_) => self,
            Tree::Join(l, r, a, b) => {
                let l = l.wrap_at(at, wrap);
                let r = r.wrap_at(at, wrap);
                Tree::Join(Box::new(l), Box::new(r), a, b)
            }
            Tree::Select(c, p) => Tree::Select(Box::new(c.wrap_at(at, wrap)), p),
            Tree::SemSelect(c, t, j) => Tree::SemSelect(Box::new(c.wrap_at(at, wrap)), t, j),
            Tree::SemProject(c, t, j) => Tree::SemProject(Box::new(c.wrap_at(at, wrap)), t, j),
            Tree::Count(c) => Tree::Count(Box::new(c.wrap_at(at, wrap))),
        }
    }

    fn node(&self, at: usize) -> &Tree {
        fn go<'a>(t: &'a Tree, at: &mut usize) -> Option<&'a Tree> {
            if *at == 0 {
                return Some(t);
            }
            *at -= 1;
            match t {
                Tree::Scan(_) => None,
                Tree::Join(l, r, ..) => go(l, at).or_else(|| go(r, at)),
                Tree::Select(c, _) | Tree::SemSelect(c, ..) | Tree::SemProject(c, ..) | Tree::Count(c) => go(c, at),
            }
        }
        let mut at = at;
        go(self, &mut at).expect("position in range")
    }
}

#[derive(Debug, Clone)]
pub struct RandomCase {
    pub n_tables: usize,
    pub query: String,
    pub plan: QueryPlan,
}

/// A plan of at most `max_nodes` nodes with at most `max_semantic` semantic
/// selections and projections over 1 to 3 joined tables.
pub fn random_case(rng: &mut impl Rng, max_nodes: usize, max_semantic: usize) -> RandomCase {
    let n_tables = rng.gen_range(1..=3usize.min((max_nodes + 1) / 2));
    let mut tree = Tree::Scan(0);
    for i in 1..n_tables {
        let prev = *tree.tables().choose(rng).unwrap();
        tree = if rng.gen_bool(0.5) {
            Tree::Join(Box::new(tree), Box::new(Tree::Scan(i)), prev, i)
        } else {
            Tree::Join(Box::new(Tree::Scan(i)), Box::new(tree), i, prev)
        };
    }
    let budget = max_nodes - tree.size();
    let with_count = budget > 1 && rng.gen_bool(0.3);
    let budget = budget - usize::from(with_count);
    let n_sem = if budget == 0 { 0 } else { rng.gen_range(1..=budget.min(max_semantic)) };
    let n_rel = rng.gen_range(0..=budget - n_sem);
    let mut kinds: Vec<u8> = std::iter::repeat(0).take(n_rel).chain((0..n_sem).map(|_| rng.gen_range(1..=2))).collect();
    kinds.shuffle(rng);
    let mut udf_decls = Vec::new();
    for (j, kind) in kinds.into_iter().enumerate() {
        let at = rng.gen_range(0..tree.size());
        let target = tree.node(at);
        let t = *target.tables().choose(rng).unwrap();
        let outputs = target.outputs();
        let mut wrap: Box<dyn FnMut(Tree) -> Tree> = match kind {
            0 => {
                let pred = match outputs.choose(rng) {
                    Some(p) if rng.gen_bool(0.5) => format!("p{p} > {}", rng.gen_range(20..80)),
                    _ => format!("a{t} > {}", rng.gen_range(0..9)),
                };
                Box::new(move |c| Tree::Select(Box::new(c), pred.clone()))
            }
            1 => {
                udf_decls.push(format!("WITH UDF u{j} = \"Is {{s{t}}} remarkable in the sense #{j}?\";"));
                Box::new(move |c| Tree::SemSelect(Box::new(c), t, j))
            }
            _ => {
                udf_decls.push(format!("WITH UDF v{j} = \"Score {{s{t}}} from 0 to 99 by rule #{j}\" : integer;"));
                Box::new(move |c| Tree::SemProject(Box::new(c), t, j))
            }
        };
        let mut pos = at;
        tree = tree.wrap_at(&mut pos, &mut *wrap);
    }
    if with_count {
        tree = Tree::Count(Box::new(tree));
    }
    let query = format!("{}\n{}", udf_decls.join("\n"), tree.render()).trim().to_string();
    let plan = parse(&query, &schemas(n_tables)).unwrap_or_else(|e| panic!("{query}\n{e}"));
    RandomCase { n_tables, query, plan }
}

/// Every assignment of movable operators to skeleton edges, in every order.
pub fn all_assignments(problem: &PlacementProblem) -> Vec<Assignment> {
    let n = problem.skeleton.len();
    let n_ops = problem.movable.len();
    let mut out = Vec::new();
    let mut homes = vec![0usize; n_ops];
    loop {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (m, h) in homes.iter().enumerate() {
            groups[*h].push(m);
        }
        let mut partial: Vec<Assignment> = vec![Vec::new()];
        for g in &groups {
            let perms = permutations(g);
            partial = partial
                .into_iter()
                .flat_map(|a| {
                    perms.iter().map(move |p| {
                        let mut a = a.clone();
                        a.push(p.clone());
                        a
                    })
                })
                .collect();
        }
        out.extend(partial);
        // Next combination of homes.
        let mut i = 0;
        loop {
            if i == n_ops {
                return out;
            }
            homes[i] += 1;
            if homes[i] < n {
                break;
            }
            homes[i] = 0;
            i += 1;
        }
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Approved, valid placements with their whole-plan cost estimates.
pub fn approved_placements(problem: &PlacementProblem, stats: &Statistics, params: &CostParams) -> Vec<(QueryPlan, f64)> {
    all_assignments(problem)
        .into_iter()
        .filter(|a| problem.respects_constraints(a))
        .map(|a| problem.build(&a))
        .filter(|p| validate_plan(p, stats).is_valid())
        .filter_map(|p| estimate_cost(&p, stats, params).ok().map(|c| (p, c.total)))
        .collect()
}

pub fn sequential() -> ExecConfig {
    ExecConfig { parallelism: 1, timeout: None, ..ExecConfig::default() }
}

pub fn run(plan: &QueryPlan, db: &Database, backend: &MockBackend) -> ExecutionReport {
    execute(plan, db, backend, &sequential()).unwrap_or_else(|e| panic!("{e}"))
}

/// Every input table with each row repeated twice.
pub fn doubled(db: &Database) -> Database {
    db.relations()
        .map(|r| {
            let rows = r.rows.iter().flat_map(|row| [row.clone(), row.clone()]).collect();
            Relation::new(r.name.clone(), r.schema.clone(), rows).unwrap()
        })
        .collect()
}
