//! Relational (non-LLM) scalar expressions: predicates and derived columns.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::relation::{ColumnRef, ResolveError, Schema};
use crate::value::{format_float, TypeMismatch, TypeTag, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    And,
    Or,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div => 6,
        }
    }
}

/// Built-in scalar functions. These names are reserved: a call with any
/// other name inside an operator argument is an LLM UDF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Strftime,
    Lower,
    Upper,
    Length,
    Trim,
    Substr,
    Abs,
    Round,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name.to_ascii_lowercase().as_str() {
            "strftime" => Builtin::Strftime,
            "lower" => Builtin::Lower,
            "upper" => Builtin::Upper,
            "length" => Builtin::Length,
            "trim" => Builtin::Trim,
            "substr" => Builtin::Substr,
            "abs" => Builtin::Abs,
            "round" => Builtin::Round,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Strftime => "strftime",
            Builtin::Lower => "lower",
            Builtin::Upper => "upper",
            Builtin::Length => "length",
            Builtin::Trim => "trim",
            Builtin::Substr => "substr",
            Builtin::Abs => "abs",
            Builtin::Round => "round",
        }
    }

    fn arity(self) -> (usize, usize) {
        match self {
            Builtin::Strftime => (2, 2),
            Builtin::Substr => (2, 3),
            Builtin::Round => (1, 2),
            _ => (1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Literal(Value),
    Column(ColumnRef),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Binary { op: BinaryOp, left: Box<Expr>, right: Box<Expr> },
    InList { expr: Box<Expr>, list: Vec<Expr>, negated: bool },
    Between { expr: Box<Expr>, low: Box<Expr>, high: Box<Expr>, negated: bool },
    IsNull { expr: Box<Expr>, negated: bool },
    Call { func: Builtin, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Type(#[from] TypeMismatch),
    #[error("operator {op} expects {expected}, found {found}")]
    Operand { op: String, expected: &'static str, found: TypeTag },
    #[error("{func} takes {min}..={max} arguments, got {got}")]
    Arity { func: &'static str, min: usize, max: usize, got: usize },
    #[error("integer overflow in {0}")]
    Overflow(&'static str),
}

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Column(ColumnRef::parse(name))
    }

    pub fn lit(v: impl Into<Value>) -> Expr {
        Expr::Literal(v.into())
    }

    pub fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        Expr::Binary { op, left: Box::new(left), right: Box::new(right) }
    }

    pub fn and(self, other: Expr) -> Expr {
        Expr::binary(BinaryOp::And, self, other)
    }

    /// Splits a conjunction into its conjuncts.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        match self {
            Expr::Binary { op: BinaryOp::And, left, right } => {
                let mut v = left.conjuncts();
                v.extend(right.conjuncts());
                v
            }
            e => vec![e],
        }
    }

    pub fn conjoin(mut parts: Vec<Expr>) -> Expr {
        if parts.is_empty() {
            return Expr::lit(true);
        }
        let first = parts.remove(0);
        parts.into_iter().fold(first, Expr::and)
    }

    /// Column references in source order (with repetition).
    pub fn columns(&self) -> Vec<&ColumnRef> {
        let mut out = Vec::new();
        self.visit_columns(&mut |c| out.push(c));
        out
    }

    fn visit_columns<'a>(&'a self, f: &mut impl FnMut(&'a ColumnRef)) {
        match self {
            Expr::Literal(_) => {}
            Expr::Column(c) => f(c),
            Expr::Not(e) | Expr::Neg(e) => e.visit_columns(f),
            Expr::IsNull { expr, .. } => expr.visit_columns(f),
            Expr::Binary { left, right, .. } => {
                left.visit_columns(f);
                right.visit_columns(f);
            }
            Expr::InList { expr, list, .. } => {
                expr.visit_columns(f);
                list.iter().for_each(|e| e.visit_columns(f));
            }
            Expr::Between { expr, low, high, .. } => {
                expr.visit_columns(f);
                low.visit_columns(f);
                high.visit_columns(f);
            }
            Expr::Call { args, .. } => args.iter().for_each(|e| e.visit_columns(f)),
        }
    }

    /// Static type; `None` when the expression is the null literal.
    pub fn infer_type(&self, schema: &Schema) -> Result<Option<TypeTag>, ExprError> {
        Ok(match self {
            Expr::Literal(v) => v.type_tag(),
            Expr::Column(c) => Some(schema.column(schema.resolve(c)?).ty),
            Expr::Not(e) => {
                expect_tag(e.infer_type(schema)?, TypeTag::Bool, "NOT")?;
                Some(TypeTag::Bool)
            }
            Expr::Neg(e) => {
                let t = e.infer_type(schema)?;
                if let Some(t) = t {
                    if !t.is_numeric() {
                        return Err(ExprError::Operand { op: "-".into(), expected: "number", found: t });
                    }
                }
                t
            }
            Expr::IsNull { expr, .. } => {
                expr.infer_type(schema)?;
                Some(TypeTag::Bool)
            }
            Expr::Binary { op, left, right } => {
                let l = left.infer_type(schema)?;
                let r = right.infer_type(schema)?;
                match op {
                    BinaryOp::And | BinaryOp::Or => {
                        expect_tag(l, TypeTag::Bool, op.symbol())?;
                        expect_tag(r, TypeTag::Bool, op.symbol())?;
                        Some(TypeTag::Bool)
                    }
                    op if op.is_comparison() => {
                        same_tag(l, r)?;
                        Some(TypeTag::Bool)
                    }
                    _ => arith_type(*op, l, r)?,
                }
            }
            Expr::InList { expr, list, .. } => {
                let t = expr.infer_type(schema)?;
                for e in list {
                    same_tag(t, e.infer_type(schema)?)?;
                }
                Some(TypeTag::Bool)
            }
            Expr::Between { expr, low, high, .. } => {
                let t = expr.infer_type(schema)?;
                same_tag(t, low.infer_type(schema)?)?;
                same_tag(t, high.infer_type(schema)?)?;
                Some(TypeTag::Bool)
            }
            Expr::Call { func, args } => {
                let (min, max) = func.arity();
                if args.len() < min || args.len() > max {
                    return Err(ExprError::Arity { func: func.name(), min, max, got: args.len() });
                }
                let tys = args.iter().map(|a| a.infer_type(schema)).collect::<Result<Vec<_>, _>>()?;
                match func {
                    Builtin::Strftime => {
                        expect_tag(tys[0], TypeTag::Text, "strftime")?;
                        expect_tag(tys[1], TypeTag::Text, "strftime")?;
                        Some(TypeTag::Text)
                    }
                    Builtin::Lower | Builtin::Upper | Builtin::Trim => {
                        expect_tag(tys[0], TypeTag::Text, func.name())?;
                        Some(TypeTag::Text)
                    }
                    Builtin::Substr => {
                        expect_tag(tys[0], TypeTag::Text, "substr")?;
                        for t in &tys[1..] {
                            expect_tag(*t, TypeTag::Int, "substr")?;
                        }
                        Some(TypeTag::Text)
                    }
                    Builtin::Length => {
                        expect_tag(tys[0], TypeTag::Text, "length")?;
                        Some(TypeTag::Int)
                    }
                    Builtin::Abs => numeric(tys[0], "abs")?,
                    Builtin::Round => {
                        numeric(tys[0], "round")?;
                        if let Some(t) = tys.get(1) {
                            expect_tag(*t, TypeTag::Int, "round")?;
                        }
                        Some(TypeTag::Float)
                    }
                }
            }
        })
    }

    /// Evaluates against one row laid out by `schema`.
    pub fn eval(&self, row: &[Value], schema: &Schema) -> Result<Value, ExprError> {
        Ok(match self {
            Expr::Literal(v) => v.clone(),
            Expr::Column(c) => row[schema.resolve(c)?].clone(),
            Expr::Not(e) => match truth(e.eval(row, schema)?, "NOT")? {
                Some(b) => Value::Bool(!b),
                None => Value::Null,
            },
            Expr::Neg(e) => match e.eval(row, schema)? {
                Value::Null => Value::Null,
                Value::Int(i) => Value::Int(i.checked_neg().ok_or(ExprError::Overflow("-"))?),
                Value::Float(x) => Value::Float(-x),
                v => {
                    return Err(ExprError::Operand {
                        op: "-".into(),
                        expected: "number",
                        found: v.type_tag().unwrap(),
                    })
                }
            },
            Expr::IsNull { expr, negated } => Value::Bool(expr.eval(row, schema)?.is_null() != *negated),
            Expr::Binary { op: BinaryOp::And, left, right } => {
                let l = truth(left.eval(row, schema)?, "AND")?;
                if l == Some(false) {
                    return Ok(Value::Bool(false));
                }
                let r = truth(right.eval(row, schema)?, "AND")?;
                match (l, r) {
                    (_, Some(false)) => Value::Bool(false),
                    (Some(true), Some(true)) => Value::Bool(true),
                    _ => Value::Null,
                }
            }
            Expr::Binary { op: BinaryOp::Or, left, right } => {
                let l = truth(left.eval(row, schema)?, "OR")?;
                if l == Some(true) {
                    return Ok(Value::Bool(true));
                }
                let r = truth(right.eval(row, schema)?, "OR")?;
                match (l, r) {
                    (_, Some(true)) => Value::Bool(true),
                    (Some(false), Some(false)) => Value::Bool(false),
                    _ => Value::Null,
                }
            }
            Expr::Binary { op, left, right } if op.is_comparison() => {
                let l = left.eval(row, schema)?;
                let r = right.eval(row, schema)?;
                match l.sql_cmp(&r)? {
                    None => Value::Null,
                    Some(o) => Value::Bool(match op {
                        BinaryOp::Eq => o == Ordering::Equal,
                        BinaryOp::Ne => o != Ordering::Equal,
                        BinaryOp::Lt => o == Ordering::Less,
                        BinaryOp::Le => o != Ordering::Greater,
                        BinaryOp::Gt => o == Ordering::Greater,
                        _ => o != Ordering::Less,
                    }),
                }
            }
            Expr::Binary { op, left, right } => arith(*op, left.eval(row, schema)?, right.eval(row, schema)?)?,
            Expr::InList { expr, list, negated } => {
                let v = expr.eval(row, schema)?;
                if v.is_null() {
                    return Ok(Value::Null);
                }
                let mut saw_null = false;
                let mut hit = false;
                for e in list {
                    match v.sql_cmp(&e.eval(row, schema)?)? {
                        Some(Ordering::Equal) => {
                            hit = true;
                            break;
                        }
                        None => saw_null = true,
                        _ => {}
                    }
                }
                if hit {
                    Value::Bool(!negated)
                } else if saw_null {
                    Value::Null
                } else {
                    Value::Bool(*negated)
                }
            }
            Expr::Between { expr, low, high, negated } => {
                let v = expr.eval(row, schema)?;
                let lo = v.sql_cmp(&low.eval(row, schema)?)?;
                let hi = v.sql_cmp(&high.eval(row, schema)?)?;
                match (lo, hi) {
                    (Some(a), Some(b)) => Value::Bool((a != Ordering::Less && b != Ordering::Greater) != *negated),
                    _ => Value::Null,
                }
            }
            Expr::Call { func, args } => {
                let vals = args.iter().map(|a| a.eval(row, schema)).collect::<Result<Vec<_>, _>>()?;
                call_builtin(*func, &vals)
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Not(_) => 3,
            Expr::InList { .. } | Expr::Between { .. } | Expr::IsNull { .. } => 4,
            Expr::Neg(_) => 7,
            _ => 8,
        }
    }
}

fn expect_tag(t: Option<TypeTag>, want: TypeTag, op: &str) -> Result<(), ExprError> {
    match t {
        Some(t) if t != want => Err(ExprError::Operand { op: op.to_string(), expected: want.keyword(), found: t }),
        _ => Ok(()),
    }
}

fn numeric(t: Option<TypeTag>, op: &str) -> Result<Option<TypeTag>, ExprError> {
    match t {
        Some(t) if !t.is_numeric() => Err(ExprError::Operand { op: op.to_string(), expected: "number", found: t }),
        t => Ok(t),
    }
}

fn same_tag(a: Option<TypeTag>, b: Option<TypeTag>) -> Result<(), ExprError> {
    match (a, b) {
        (Some(a), Some(b)) if a != b => Err(TypeMismatch { left: a, right: b }.into()),
        _ => Ok(()),
    }
}

fn arith_type(op: BinaryOp, l: Option<TypeTag>, r: Option<TypeTag>) -> Result<Option<TypeTag>, ExprError> {
    let l = numeric(l, op.symbol())?;
    let r = numeric(r, op.symbol())?;
    Ok(match (l, r) {
        (Some(TypeTag::Int), Some(TypeTag::Int)) => Some(TypeTag::Int),
        (None, None) => None,
        (Some(TypeTag::Int), None) | (None, Some(TypeTag::Int)) => Some(TypeTag::Int),
        _ => Some(TypeTag::Float),
    })
}

fn truth(v: Value, op: &str) -> Result<Option<bool>, ExprError> {
    match v {
        Value::Null => Ok(None),
        Value::Bool(b) => Ok(Some(b)),
        v => Err(ExprError::Operand { op: op.to_string(), expected: "bool", found: v.type_tag().unwrap() }),
    }
}

fn arith(op: BinaryOp, l: Value, r: Value) -> Result<Value, ExprError> {
    let check = |v: &Value| match v.type_tag() {
        Some(t) if !t.is_numeric() => {
            Err(ExprError::Operand { op: op.symbol().to_string(), expected: "number", found: t })
        }
        _ => Ok(()),
    };
    check(&l)?;
    check(&r)?;
    Ok(match (l, r) {
        (Value::Null, _) | (_, Value::Null) => Value::Null,
        (Value::Int(a), Value::Int(b)) => {
            let out = match op {
                BinaryOp::Add => a.checked_add(b),
                BinaryOp::Sub => a.checked_sub(b),
                BinaryOp::Mul => a.checked_mul(b),
                _ => {
                    if b == 0 {
                        return Ok(Value::Null);
                    }
                    a.checked_div(b)
                }
            };
            Value::Int(out.ok_or(ExprError::Overflow(op.symbol()))?)
        }
        (a, b) => {
            let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            match op {
                BinaryOp::Add => Value::Float(a + b),
                BinaryOp::Sub => Value::Float(a - b),
                BinaryOp::Mul => Value::Float(a * b),
                _ if b == 0.0 => Value::Null,
                _ => Value::Float(a / b),
            }
        }
    })
}

fn call_builtin(func: Builtin, args: &[Value]) -> Value {
    if args.first().is_none_or(Value::is_null) {
        return Value::Null;
    }
    match func {
        Builtin::Strftime => match (&args[0], &args[1]) {
            (Value::Text(fmt), Value::Text(ts)) => strftime(fmt, ts).map(Value::Text).unwrap_or(Value::Null),
            _ => Value::Null,
        },
        Builtin::Lower => text_map(&args[0], |s| s.to_lowercase()),
        Builtin::Upper => text_map(&args[0], |s| s.to_uppercase()),
        Builtin::Trim => text_map(&args[0], |s| s.trim().to_string()),
        Builtin::Length => match &args[0] {
            Value::Text(s) => Value::Int(s.chars().count() as i64),
            _ => Value::Null,
        },
        Builtin::Substr => match (&args[0], args.get(1), args.get(2)) {
            (Value::Text(s), Some(Value::Int(start)), len) => {
                let start = (*start).max(1) as usize - 1;
                let chars = s.chars().skip(start);
                let out: String = match len {
                    Some(Value::Int(n)) => chars.take((*n).max(0) as usize).collect(),
                    _ => chars.collect(),
                };
                Value::Text(out)
            }
            _ => Value::Null,
        },
        Builtin::Abs => match &args[0] {
            Value::Int(i) => i.checked_abs().map(Value::Int).unwrap_or(Value::Null),
            Value::Float(x) => Value::Float(x.abs()),
            _ => Value::Null,
        },
        Builtin::Round => {
            let digits = match args.get(1) {
                Some(Value::Int(d)) => *d as i32,
                _ => 0,
            };
            match args[0].as_f64() {
                Some(x) => {
                    let m = 10f64.powi(digits);
                    Value::Float((x * m).round() / m)
                }
                None => Value::Null,
            }
        }
    }
}

fn text_map(v: &Value, f: impl Fn(&str) -> String) -> Value {
    match v {
        Value::Text(s) => Value::Text(f(s)),
        _ => Value::Null,
    }
}

/// SQLite-compatible subset of `strftime` for text timestamps. Returns `None`
/// when the input does not parse as a date.
pub fn strftime(format: &str, timestamp: &str) -> Option<String> {
    use chrono::{NaiveDate, NaiveDateTime};
    let ts = timestamp.trim();
    let dt = NaiveDateTime::parse_from_str(ts, "%Y-%m-%d %H:%M:%S%.f")
        .or_else(|_| NaiveDateTime::parse_from_str(ts, "%Y-%m-%dT%H:%M:%S%.f"))
        .or_else(|_| NaiveDateTime::parse_from_str(ts, "%Y-%m-%d %H:%M"))
        .ok()
        .or_else(|| NaiveDate::parse_from_str(ts, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)))?;
    let mut out = String::new();
    let mut chars = format.chars();
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        let spec = chars.next()?;
        let piece = match spec {
            'Y' | 'm' | 'd' | 'H' | 'M' | 'S' | 'j' | 'w' => dt.format(&format!("%{spec}")).to_string(),
            '%' => "%".to_string(),
            _ => return None,
        };
        out.push_str(&piece);
    }
    Some(out)
}

fn quote_text(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

pub fn render_literal(v: &Value) -> String {
    match v {
        Value::Null => "NULL".into(),
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Float(x) => format_float(*x),
        Value::Text(s) => quote_text(s),
    }
}

const RESERVED_WORDS: [&str; 12] = ["and", "or", "not", "in", "between", "is", "null", "true", "false", "asc", "desc", "with"];

/// Writes a name as an HRA identifier, backquoting it when it is not a plain
/// word or collides with a keyword.
pub fn quote_ident(name: &str) -> String {
    let plain = name.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_alphanumeric() || c == '_')
        && !RESERVED_WORDS.iter().any(|r| r.eq_ignore_ascii_case(name));
    if plain {
        name.to_string()
    } else {
        format!("`{name}`")
    }
}

/// A column reference in HRA syntax.
pub fn column_text(c: &ColumnRef) -> String {
    match &c.qualifier {
        Some(q) => format!("{}.{}", quote_ident(q), quote_ident(&c.name)),
        None => quote_ident(&c.name),
    }
}

struct Child<'a>(&'a Expr, u8);

impl fmt::Display for Child<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.precedence() < self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Prints valid HRA expression syntax with the minimum parentheses needed
/// to reparse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(v) => f.write_str(&render_literal(v)),
            Expr::Column(c) => f.write_str(&column_text(c)),
            Expr::Not(e) => write!(f, "NOT {}", Child(e, 3)),
            Expr::Neg(e) => write!(f, "-{}", Child(e, 8)),
            Expr::Binary { op, left, right } => {
                let p = op.precedence();
                let (lp, rp) = if op.is_comparison() { (p + 1, p + 1) } else { (p, p + 1) };
                write!(f, "{} {} {}", Child(left, lp), op.symbol(), Child(right, rp))
            }
            Expr::InList { expr, list, negated } => {
                let items: Vec<String> = list.iter().map(|e| e.to_string()).collect();
                write!(f, "{} {}IN ({})", Child(expr, 5), if *negated { "NOT " } else { "" }, items.join(", "))
            }
            Expr::Between { expr, low, high, negated } => write!(
                f,
                "{} {}BETWEEN {} AND {}",
                Child(expr, 5),
                if *negated { "NOT " } else { "" },
                Child(low, 5),
                Child(high, 5)
            ),
            Expr::IsNull { expr, negated } => {
                write!(f, "{} IS {}NULL", Child(expr, 5), if *negated { "NOT " } else { "" })
            }
            Expr::Call { func, args } => {
                let items: Vec<String> = args.iter().map(|e| e.to_string()).collect();
                write!(f, "{}({})", func.name(), items.join(", "))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::Column;

    fn schema() -> Schema {
        Schema::new(vec![
            Column::new("n", TypeTag::Int),
            Column::new("s", TypeTag::Text),
            Column::new("x", TypeTag::Float),
        ])
        .unwrap()
    }

    #[test]
    fn three_valued_logic() {
        let s = schema();
        let row = vec![Value::Null, Value::text("a"), Value::Float(1.5)];
        let gt = Expr::binary(BinaryOp::Gt, Expr::col("n"), Expr::lit(3i64));
        assert_eq!(gt.eval(&row, &s).unwrap(), Value::Null);
        let f = Expr::binary(BinaryOp::And, gt.clone(), Expr::lit(false));
        assert_eq!(f.eval(&row, &s).unwrap(), Value::Bool(false));
        let t = Expr::binary(BinaryOp::Or, gt, Expr::lit(true));
        assert_eq!(t.eval(&row, &s).unwrap(), Value::Bool(true));
    }

    #[test]
    fn comparison_across_tags_is_rejected() {
        let s = schema();
        let e = Expr::binary(BinaryOp::Gt, Expr::col("n"), Expr::lit(2.5));
        assert!(e.infer_type(&s).is_err());
        let row = vec![Value::Int(3), Value::text("a"), Value::Float(1.5)];
        assert!(matches!(e.eval(&row, &s), Err(ExprError::Type(_))));
    }

    #[test]
    fn strftime_month_day() {
        assert_eq!(strftime("%m-%d", "1990-02-01").as_deref(), Some("02-01"));
        assert_eq!(strftime("%m-%d", "2014-09-14 00:00:00.0").as_deref(), Some("09-14"));
        assert_eq!(strftime("%Y", "not a date"), None);
    }

    #[test]
    fn in_list_and_between() {
        let s = schema();
        let row = vec![Value::Int(5), Value::text("Marin"), Value::Float(0.0)];
        let e = Expr::InList {
            expr: Box::new(Expr::col("s")),
            list: vec![Expr::lit("Alameda"), Expr::lit("Marin")],
            negated: false,
        };
        assert_eq!(e.eval(&row, &s).unwrap(), Value::Bool(true));
        let b = Expr::Between {
            expr: Box::new(Expr::col("n")),
            low: Box::new(Expr::lit(1i64)),
            high: Box::new(Expr::lit(5i64)),
            negated: false,
        };
        assert_eq!(b.eval(&row, &s).unwrap(), Value::Bool(true));
    }

    #[test]
    fn display_parenthesizes_only_when_needed() {
        let e = Expr::binary(
            BinaryOp::And,
            Expr::binary(BinaryOp::Or, Expr::col("a"), Expr::col("b")),
            Expr::binary(BinaryOp::Gt, Expr::col("n"), Expr::binary(BinaryOp::Add, Expr::lit(1i64), Expr::lit(2i64))),
        );
        assert_eq!(e.to_string(), "(a OR b) AND n > 1 + 2");
        let sub = Expr::binary(BinaryOp::Sub, Expr::lit(1i64), Expr::binary(BinaryOp::Sub, Expr::lit(2i64), Expr::lit(3i64)));
        assert_eq!(sub.to_string(), "1 - (2 - 3)");
        assert_eq!(Expr::lit("it's").to_string(), "'it''s'");
    }
}
