//! Prompt templates, one data file per operator kind.
//!
//! Templates use `{{name}}` variables. The built-in set is compiled in and
//! any file of the same name in an override directory replaces it.

use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub select: String,
    pub project: String,
    pub join: String,
    pub join_batch: String,
    pub join_sizing: String,
    pub topk: String,
    pub aggregate: String,
    pub aggregate_combine: String,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            select: include_str!("../../assets/templates/select.txt").trim_end().to_string(),
            project: include_str!("../../assets/templates/project.txt").trim_end().to_string(),
            join: include_str!("../../assets/templates/join.txt").trim_end().to_string(),
            join_batch: include_str!("../../assets/templates/join_batch.txt").trim_end().to_string(),
            join_sizing: include_str!("../../assets/templates/join_sizing.txt").trim_end().to_string(),
            topk: include_str!("../../assets/templates/topk.txt").trim_end().to_string(),
            aggregate: include_str!("../../assets/templates/aggregate.txt").trim_end().to_string(),
            aggregate_combine: include_str!("../../assets/templates/aggregate_combine.txt").trim_end().to_string(),
        }
    }
}

impl Templates {
    /// Built-ins with `<name>.txt` files from `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> std::io::Result<Self> {
        let mut t = Templates::default();
        let slots: [(&str, &mut String); 8] = [
            ("select", &mut t.select),
            ("project", &mut t.project),
            ("join", &mut t.join),
            ("join_batch", &mut t.join_batch),
            ("join_sizing", &mut t.join_sizing),
            ("topk", &mut t.topk),
            ("aggregate", &mut t.aggregate),
            ("aggregate_combine", &mut t.aggregate_combine),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path)?.trim_end().to_string();
            }
        }
        Ok(t)
    }
}

/// Substitutes `{{name}}` variables. Unknown variables are left as they are.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = &after[..end];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[start..start + end + 4]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
