//! Rendering plans back to HRA text that reparses to the same plan.

use crate::expr::{column_text, quote_ident};
use crate::plan::{NodeId, Operator, QueryPlan};
use crate::udf::{LlmUdf, OutputKind, DEFAULT_MODEL};

use super::INLINE_UDF;

fn quote_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn needs_prelude(udf: &LlmUdf) -> bool {
    udf.name != INLINE_UDF && (udf.expression != udf.name || udf.model != DEFAULT_MODEL)
}

/// `Name(col, ...)`, or `llm("...", col, ...)` for inline UDFs.
pub fn print_udf_call(udf: &LlmUdf) -> String {
    let args: Vec<String> = udf.inputs.iter().map(column_text).collect();
    if udf.name == INLINE_UDF {
        let mut parts = vec![quote_string(&udf.expression)];
        parts.extend(args);
        format!("{INLINE_UDF}({})", parts.join(", "))
    } else {
        format!("{}({})", quote_ident(&udf.name), args.join(", "))
    }
}

/// Prints `WITH UDF` declarations for UDFs whose expression differs from
/// their name, followed by the plan on one line.
pub fn print(plan: &QueryPlan) -> String {
    let mut out = String::new();
    let mut declared: Vec<&str> = Vec::new();
    for id in plan.postorder() {
        if let Some(udf) = plan.op(id).udf() {
            if needs_prelude(udf) && !declared.contains(&udf.name.as_str()) {
                declared.push(&udf.name);
                out.push_str(&format!("WITH UDF {} = {}", quote_ident(&udf.name), quote_string(&udf.expression)));
                if udf.model != DEFAULT_MODEL {
                    out.push_str(&format!(" USING {}", quote_string(&udf.model)));
                }
                out.push_str(";\n");
            }
        }
    }
    print_node(plan, plan.root(), &mut out);
    out
}

fn print_node(plan: &QueryPlan, id: NodeId, out: &mut String) {
    let children = plan.children(id);
    let child = |out: &mut String, i: usize| print_node(plan, children[i], out);
    match plan.op(id) {
        Operator::Scan { table } => out.push_str(&quote_ident(table)),
        Operator::Select { predicate } => {
            out.push_str(&format!("Select({predicate}, "));
            child(out, 0);
            out.push(')');
        }
        Operator::SemanticSelect { udf } => {
            out.push_str(&format!("Select({}, ", print_udf_call(udf)));
            child(out, 0);
            out.push(')');
        }
        Operator::Project { columns } => {
            let cols: Vec<String> = columns.iter().map(column_text).collect();
            out.push_str(&format!("Project([{}], ", cols.join(", ")));
            child(out, 0);
            out.push(')');
        }
        Operator::Derive { expr, alias } => {
            out.push_str(&format!("Project({expr} -> {}, ", quote_ident(alias)));
            child(out, 0);
            out.push(')');
        }
        Operator::SemanticProject { udf, outputs } => {
            let target = match &udf.output {
                OutputKind::Tuple(fields) => {
                    let f: Vec<String> = fields.iter().map(|(n, t)| format!("{}: {t}", quote_ident(n))).collect();
                    format!("({})", f.join(", "))
                }
                OutputKind::Scalar(t) => format!("{}: {t}", quote_ident(&outputs[0])),
                _ => quote_ident(outputs.first().map(String::as_str).unwrap_or("value")),
            };
            out.push_str(&format!("Project({} -> {target}, ", print_udf_call(udf)));
            child(out, 0);
            out.push(')');
        }
        Operator::Join { on } => {
            out.push_str("Join(");
            child(out, 0);
            out.push_str(", ");
            child(out, 1);
            if on.is_empty() {
                out.push_str(", true)");
            } else {
                let c: Vec<String> = on.iter().map(|(l, r)| format!("{} = {}", column_text(l), column_text(r))).collect();
                out.push_str(&format!(", {})", c.join(" AND ")));
            }
        }
        Operator::SemanticJoin { udf } => {
            out.push_str("Join(");
            child(out, 0);
            out.push_str(", ");
            child(out, 1);
            out.push_str(&format!(", {})", print_udf_call(udf)));
        }
        Operator::TopK { order, k } => {
            let keys: Vec<String> = order
                .iter()
                .map(|o| format!("{}{}", column_text(&o.column), if o.descending { " DESC" } else { "" }))
                .collect();
            out.push_str(&format!("TopK([{}], ", keys.join(", ")));
            if let Some(k) = k {
                out.push_str(&format!("{k}, "));
            }
            child(out, 0);
            out.push(')');
        }
        Operator::SemanticTopK { udf, k } => {
            out.push_str(&format!("TopK({}, ", print_udf_call(udf)));
            if let Some(k) = k {
                out.push_str(&format!("{k}, "));
            }
            child(out, 0);
            out.push(')');
        }
        Operator::Aggregate { group_by, aggs } => {
            let a: Vec<String> = aggs
                .iter()
                .map(|a| {
                    let arg = a.arg.as_ref().map(column_text).unwrap_or_else(|| "*".into());
                    format!("{}({arg}) -> {}", a.func.name(), quote_ident(&a.alias))
                })
                .collect();
            out.push_str(&format!("Aggregate([{}], ", a.join(", ")));
            print_group_by(group_by, out);
            child(out, 0);
            out.push(')');
        }
        Operator::SemanticAggregate { group_by, udf, alias } => {
            let ty = match &udf.output {
                OutputKind::Aggregate(t) => format!(": {t}"),
                _ => String::new(),
            };
            out.push_str(&format!("Aggregate({} -> {}{ty}, ", print_udf_call(udf), quote_ident(alias)));
            print_group_by(group_by, out);
            child(out, 0);
            out.push(')');
        }
    }
}

fn print_group_by(group_by: &[crate::relation::ColumnRef], out: &mut String) {
    if !group_by.is_empty() {
        let g: Vec<String> = group_by.iter().map(column_text).collect();
        out.push_str(&format!("group_by({}), ", g.join(", ")));
    }
}
