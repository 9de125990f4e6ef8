//! Hybrid relational algebra: relational operators mixed with LLM-backed
//! UDFs, with query generation, cost-based optimization and execution.

pub mod backend;
pub mod catalog;
pub mod equivalence;
pub mod exec;
pub mod expr;
pub mod generation;
pub mod optimizer;
pub mod parser;
pub mod plan;
pub mod relation;
pub mod text;
pub mod udf;
pub mod value;
