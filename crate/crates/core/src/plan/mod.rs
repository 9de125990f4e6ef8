//! Query plans: rooted operator trees whose nodes are relational or semantic.
//!
//! Nodes live in an arena indexed by dense [`NodeId`]s assigned in build
//! order (children before parents). Every transformation rebuilds a plan
//! through [`PlanBuilder`], so ids are never reused within a plan.

mod schema;
mod validate;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::relation::ColumnRef;
use crate::udf::LlmUdf;

pub use schema::{node_schemas, output_schema, schema_for, SchemaError, SchemaProvider};
pub use validate::{validate_plan, Problem, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        }
    }

    pub fn from_name(s: &str) -> Option<AggFunc> {
        Some(match s.to_ascii_lowercase().as_str() {
            "count" => AggFunc::Count,
            "sum" => AggFunc::Sum,
            "avg" => AggFunc::Avg,
            "min" => AggFunc::Min,
            "max" => AggFunc::Max,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggItem {
    pub func: AggFunc,
    /// `None` means `*` (only valid for count).
    pub arg: Option<ColumnRef>,
    pub alias: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderKey {
    pub column: ColumnRef,
    pub descending: bool,
}

/// Operator kinds shared by relational and semantic variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpClass {
    Scan,
    Select,
    Project,
    Join,
    TopK,
    Aggregate,
}

impl OpClass {
    pub fn name(self) -> &'static str {
        match self {
            OpClass::Scan => "scan",
            OpClass::Select => "select",
            OpClass::Project => "project",
            OpClass::Join => "join",
            OpClass::TopK => "topk",
            OpClass::Aggregate => "aggregate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum Operator {
    Scan { table: String },
    Select { predicate: Expr },
    SemanticSelect { udf: LlmUdf },
    /// Keeps only the listed columns, in order.
    Project { columns: Vec<ColumnRef> },
    /// Keeps every input column and appends `alias`.
    Derive { expr: Expr, alias: String },
    /// Keeps every input column and appends the UDF outputs.
    SemanticProject { udf: LlmUdf, outputs: Vec<String> },
    /// Inner equi-join on `(left, right)` column pairs; empty means cross product.
    Join { on: Vec<(ColumnRef, ColumnRef)> },
    SemanticJoin { udf: LlmUdf },
    TopK { order: Vec<OrderKey>, k: Option<usize> },
    SemanticTopK { udf: LlmUdf, k: Option<usize> },
    Aggregate { group_by: Vec<ColumnRef>, aggs: Vec<AggItem> },
    SemanticAggregate { group_by: Vec<ColumnRef>, udf: LlmUdf, alias: String },
}

impl Operator {
    pub fn class(&self) -> OpClass {
        match self {
            Operator::Scan { .. } => OpClass::Scan,
            Operator::Select { .. } | Operator::SemanticSelect { .. } => OpClass::Select,
            Operator::Project { .. } | Operator::Derive { .. } | Operator::SemanticProject { .. } => {
                OpClass::Project
            }
            Operator::Join { .. } | Operator::SemanticJoin { .. } => OpClass::Join,
            Operator::TopK { .. } | Operator::SemanticTopK { .. } => OpClass::TopK,
            Operator::Aggregate { .. } | Operator::SemanticAggregate { .. } => OpClass::Aggregate,
        }
    }

    /// The LLM UDF carried by a semantic operator.
    pub fn udf(&self) -> Option<&LlmUdf> {
        match self {
            Operator::SemanticSelect { udf }
            | Operator::SemanticProject { udf, .. }
            | Operator::SemanticJoin { udf }
            | Operator::SemanticTopK { udf, .. }
            | Operator::SemanticAggregate { udf, .. } => Some(udf),
            _ => None,
        }
    }

    pub fn udf_mut(&mut self) -> Option<&mut LlmUdf> {
        match self {
            Operator::SemanticSelect { udf }
            | Operator::SemanticProject { udf, .. }
            | Operator::SemanticJoin { udf }
            | Operator::SemanticTopK { udf, .. }
            | Operator::SemanticAggregate { udf, .. } => Some(udf),
            _ => None,
        }
    }

    pub fn is_semantic(&self) -> bool {
        self.udf().is_some()
    }

    pub fn arity(&self) -> usize {
        match self.class() {
            OpClass::Scan => 0,
            OpClass::Join => 2,
            _ => 1,
        }
    }

    /// Short label used in cost breakdowns and explain output.
    pub fn label(&self) -> String {
        match self {
            Operator::Scan { table } => format!("Scan({table})"),
            Operator::Select { predicate } => format!("Select({predicate})"),
            Operator::SemanticSelect { udf } => format!("SemanticSelect({})", udf.name),
            Operator::Project { columns } => {
                let c: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
                format!("Project[{}]", c.join(", "))
            }
            Operator::Derive { alias, .. } => format!("Derive({alias})"),
            Operator::SemanticProject { udf, outputs } => {
                format!("SemanticProject({} -> {})", udf.name, outputs.join(", "))
            }
            Operator::Join { on } => {
                let c: Vec<String> = on.iter().map(|(l, r)| format!("{l}={r}")).collect();
                format!("Join({})", c.join(" AND "))
            }
            Operator::SemanticJoin { udf } => format!("SemanticJoin({})", udf.name),
            Operator::TopK { k, .. } => format!("TopK({})", k.map(|k| k.to_string()).unwrap_or("all".into())),
            Operator::SemanticTopK { udf, k } => {
                format!("SemanticTopK({}, {})", udf.name, k.map(|k| k.to_string()).unwrap_or("all".into()))
            }
            Operator::Aggregate { aggs, .. } => {
                let a: Vec<String> = aggs.iter().map(|a| a.alias.clone()).collect();
                format!("Aggregate({})", a.join(", "))
            }
            Operator::SemanticAggregate { udf, alias, .. } => format!("SemanticAggregate({} -> {alias})", udf.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub id: NodeId,
    pub op: Operator,
    pub children: Vec<NodeId>,
}

/// A rooted operator tree.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    nodes: Vec<PlanNode>,
    root: NodeId,
}

/// Recursive, id-free form of a plan. Serialized as the plan signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTree {
    #[serde(flatten)]
    pub op: Operator,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PlanTree>,
}

impl PlanTree {
    pub fn leaf(op: Operator) -> Self {
        PlanTree { op, inputs: Vec::new() }
    }

    pub fn unary(op: Operator, input: PlanTree) -> Self {
        PlanTree { op, inputs: vec![input] }
    }

    pub fn binary(op: Operator, left: PlanTree, right: PlanTree) -> Self {
        PlanTree { op, inputs: vec![left, right] }
    }

    pub fn scan(table: &str) -> Self {
        PlanTree::leaf(Operator::Scan { table: table.to_string() })
    }

    pub fn size(&self) -> usize {
        1 + self.inputs.iter().map(PlanTree::size).sum::<usize>()
    }

    pub fn into_plan(self) -> QueryPlan {
        QueryPlan::from_tree(self)
    }
}

#[derive(Debug, Default)]
pub struct PlanBuilder {
    nodes: Vec<PlanNode>,
}

impl PlanBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a node over already-added children and returns its id.
    pub fn add(&mut self, op: Operator, children: Vec<NodeId>) -> NodeId {
        let id = NodeId(self.nodes.len());
        debug_assert!(children.iter().all(|c| c.0 < id.0));
        self.nodes.push(PlanNode { id, op, children });
        id
    }

    pub fn finish(self, root: NodeId) -> QueryPlan {
        QueryPlan { nodes: self.nodes, root }.compacted()
    }
}

impl QueryPlan {
    pub fn from_tree(tree: PlanTree) -> Self {
        fn go(b: &mut PlanBuilder, t: PlanTree) -> NodeId {
            let children = t.inputs.into_iter().map(|c| go(b, c)).collect();
            b.add(t.op, children)
        }
        let mut b = PlanBuilder::new();
        let root = go(&mut b, tree);
        b.finish(root)
    }

    /// Builds from raw nodes without checking the tree shape; used to
    /// exercise validation of malformed plans.
    pub fn from_raw_parts(nodes: Vec<PlanNode>, root: NodeId) -> Self {
        QueryPlan { nodes, root }
    }

    pub fn to_tree(&self) -> PlanTree {
        self.subtree_tree(self.root)
    }

    pub fn subtree_tree(&self, id: NodeId) -> PlanTree {
        let n = self.node(id);
        PlanTree { op: n.op.clone(), inputs: n.children.iter().map(|c| self.subtree_tree(*c)).collect() }
    }

    /// A standalone plan for the subtree under `id`.
    pub fn subtree(&self, id: NodeId) -> QueryPlan {
        QueryPlan::from_tree(self.subtree_tree(id))
    }

    /// Keeps only nodes reachable from the root, renumbered in postorder.
    fn compacted(self) -> Self {
        let reachable = self.postorder();
        if reachable.len() == self.nodes.len() && reachable.iter().enumerate().all(|(i, n)| n.0 == i) {
            return self;
        }
        QueryPlan::from_tree(self.to_tree())
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &PlanNode {
        &self.nodes[id.0]
    }

    pub fn op(&self, id: NodeId) -> &Operator {
        &self.nodes[id.0].op
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).sum()
    }

    /// Children-before-parents order from the root.
    pub fn postorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![(self.root, false)];
        while let Some((id, expanded)) = stack.pop() {
            if id.0 >= self.nodes.len() {
                continue;
            }
            if expanded {
                out.push(id);
                continue;
            }
            if seen[id.0] {
                continue;
            }
            seen[id.0] = true;
            stack.push((id, true));
            for c in self.nodes[id.0].children.iter().rev() {
                stack.push((*c, false));
            }
        }
        out
    }

    pub fn parents(&self) -> HashMap<NodeId, NodeId> {
        let mut m = HashMap::new();
        for n in &self.nodes {
            for c in &n.children {
                m.insert(*c, n.id);
            }
        }
        m
    }

    /// Nodes carrying an LLM UDF.
    pub fn semantic_nodes(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.op.is_semantic()).map(|n| n.id).collect()
    }

    pub fn relational_nodes(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| !n.op.is_semantic()).map(|n| n.id).collect()
    }

    pub fn udfs(&self) -> Vec<&LlmUdf> {
        self.nodes.iter().filter_map(|n| n.op.udf()).collect()
    }

    pub fn tables(&self) -> Vec<String> {
        let mut t: Vec<String> = self
            .nodes
            .iter()
            .filter_map(|n| match &n.op {
                Operator::Scan { table } => Some(table.clone()),
                _ => None,
            })
            .collect();
        t.sort();
        t.dedup();
        t
    }

    /// Structural equality ignoring node ids.
    pub fn structurally_eq(&self, other: &QueryPlan) -> bool {
        self.to_tree() == other.to_tree()
    }

    /// Canonical, id-independent serialization (compact JSON of the tree).
    pub fn signature(&self) -> String {
        plan_signature(self)
    }

    pub fn from_signature(text: &str) -> Result<QueryPlan, serde_json::Error> {
        let tree: PlanTree = serde_json::from_str(text)?;
        Ok(QueryPlan::from_tree(tree))
    }
}

/// Canonical plan text: compact JSON of the id-free tree, fields in
/// declaration order. Equal plans up to node renumbering give equal text.
pub fn plan_signature(plan: &QueryPlan) -> String {
    serde_json::to_string(&plan.to_tree()).expect("plan trees always serialize")
}
