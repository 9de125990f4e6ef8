//! Text syntax for HRA queries.
//!
//! Operators are written in functional prefix form with the input last:
//! `Select(pred, child)`, `Project(items, child)`, `Join(left, right, cond)`,
//! `TopK(order [, k], child)`, `Aggregate(aggs [, group_by(cols)], child)`,
//! and a bare table name for a scan. A call to any name that is not a
//! built-in function is an LLM UDF; its expression comes from a
//! `WITH UDF Name = "..." ;` prelude, an inline `llm("...", cols)` call, or
//! defaults to the name itself.

mod lexer;
mod printer;

use std::collections::HashMap;
use std::fmt;

use crate::expr::{BinaryOp, Builtin, Expr, ExprError};
use crate::plan::{
    validate_plan, AggFunc, AggItem, NodeId, Operator, OrderKey, PlanBuilder, QueryPlan, SchemaProvider,
};
use crate::relation::{ColumnRef, ResolveError, Schema};
use crate::udf::{LlmUdf, OutputKind, DEFAULT_MODEL};
use crate::value::{TypeTag, Value};

pub use lexer::Pos;
pub use printer::{print, print_udf_call};

use lexer::{tokenize, Tok, Token};

/// Name given to UDFs written inline as `llm("...", cols)`.
pub const INLINE_UDF: &str = "llm";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: Pos, message: String },
    #[error("unknown table `{table}` at {pos}")]
    UnknownTable { pos: Pos, table: String },
    #[error("unknown column `{column}` at {pos} (available columns: {available})")]
    UnknownColumn { pos: Pos, column: String, available: String },
    #[error("ambiguous column `{column}` at {pos}; qualify it as table.column")]
    AmbiguousColumn { pos: Pos, column: String },
    #[error("UDF `{udf}` at {pos} uses placeholder {{{placeholder}}} which is not one of its input columns")]
    UnboundPlaceholder { pos: Pos, udf: String, placeholder: String },
    #[error("type error at {pos}: {message}")]
    Type { pos: Pos, message: String },
}

impl ParseError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::Syntax { .. } => "syntax_error",
            ParseError::UnknownTable { .. } => "unknown_table",
            ParseError::UnknownColumn { .. } => "unknown_column",
            ParseError::AmbiguousColumn { .. } => "ambiguous_column",
            ParseError::UnboundPlaceholder { .. } => "unbound_placeholder",
            ParseError::Type { .. } => "type_error",
        }
    }

    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::UnknownTable { pos, .. }
            | ParseError::UnknownColumn { pos, .. }
            | ParseError::AmbiguousColumn { pos, .. }
            | ParseError::UnboundPlaceholder { pos, .. }
            | ParseError::Type { pos, .. } => *pos,
        }
    }
}

// ---------------------------------------------------------------------------
// Syntax tree

#[derive(Debug, Clone)]
struct UdfDecl {
    expression: String,
    ty: Option<DeclType>,
    model: Option<String>,
}

#[derive(Debug, Clone)]
enum DeclType {
    Scalar(TypeTag),
    Tuple(Vec<(String, TypeTag)>),
}

type Col = (ColumnRef, Pos);

#[derive(Debug, Clone)]
struct ExprAst {
    expr: Expr,
    cols: Vec<Col>,
    pos: Pos,
}

#[derive(Debug, Clone)]
struct UdfCall {
    name: String,
    inline: Option<String>,
    args: Vec<Col>,
    pos: Pos,
}

#[derive(Debug, Clone)]
enum Pred {
    Expr(ExprAst),
    Udf(UdfCall),
}

#[derive(Debug, Clone)]
enum ProjTarget {
    Scalar(String, Option<TypeTag>),
    Tuple(Vec<(String, Option<TypeTag>)>),
}

#[derive(Debug, Clone)]
enum ProjItem {
    Column(Col),
    Derive(ExprAst, String),
    Udf(UdfCall, ProjTarget),
}

#[derive(Debug, Clone)]
enum JoinCond {
    Equi(Vec<(Col, Col)>),
    Udf(UdfCall),
}

#[derive(Debug, Clone)]
enum OrderAst {
    Keys(Vec<(Col, bool)>),
    Udf(UdfCall),
}

#[derive(Debug, Clone)]
enum AggAst {
    Func { func: AggFunc, arg: Option<Col>, alias: String },
    Udf { call: UdfCall, alias: String, ty: Option<TypeTag> },
}

#[derive(Debug, Clone)]
enum PlanAst {
    Scan { table: String, pos: Pos },
    Select { pred: Pred, child: Box<PlanAst>, pos: Pos },
    Project { items: Vec<ProjItem>, child: Box<PlanAst>, pos: Pos },
    Join { left: Box<PlanAst>, right: Box<PlanAst>, cond: JoinCond, pos: Pos },
    TopK { order: OrderAst, k: Option<usize>, child: Box<PlanAst>, pos: Pos },
    Aggregate { aggs: Vec<AggAst>, group_by: Vec<Col>, child: Box<PlanAst>, pos: Pos },
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<Token>,
    i: usize,
}

const OPERATORS: [&str; 5] = ["Select", "Project", "Join", "TopK", "Aggregate"];
const RESERVED: [&str; 12] = ["and", "or", "not", "in", "between", "is", "null", "true", "false", "asc", "desc", "with"];

fn is_reserved(s: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(s))
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.i + n).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i < self.toks.len() - 1 {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { pos: self.pos(), message: message.into() })
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            self.err(format!("expected {want}, found {}", self.peek()))
        }
    }

    fn eat(&mut self, want: &Tok) -> bool {
        if self.peek() == want {
            self.next();
            true
        } else {
            false
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) | Tok::QIdent(s) => {
                self.next();
                Ok(s)
            }
            t => self.err(format!("expected {what}, found {t}")),
        }
    }

    fn type_tag(&mut self) -> Result<TypeTag, ParseError> {
        let pos = self.pos();
        let name = self.ident("a type name")?;
        TypeTag::from_keyword(&name).ok_or(ParseError::Syntax {
            pos,
            message: format!("unknown type `{name}` (expected integer, float, text or bool)"),
        })
    }

    fn query(&mut self) -> Result<(HashMap<String, UdfDecl>, PlanAst), ParseError> {
        let mut decls = HashMap::new();
        while self.is_keyword("with") {
            self.next();
            if !self.eat_keyword("udf") {
                return self.err("expected `UDF` after `WITH`");
            }
            let pos = self.pos();
            let name = self.ident("a UDF name")?;
            self.expect(Tok::Eq)?;
            let expression = match self.next().tok {
                Tok::Str(s) => s,
                t => return Err(ParseError::Syntax { pos, message: format!("expected a quoted UDF expression, found {t}") }),
            };
            let mut ty = None;
            if self.eat(&Tok::Colon) {
                ty = Some(if self.eat(&Tok::LParen) {
                    let mut fields = Vec::new();
                    loop {
                        let f = self.ident("a field name")?;
                        self.eat(&Tok::Colon);
                        fields.push((f, self.type_tag()?));
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RParen)?;
                    DeclType::Tuple(fields)
                } else {
                    DeclType::Scalar(self.type_tag()?)
                });
            }
            let mut model = None;
            if self.eat_keyword("using") {
                model = Some(match self.next().tok {
                    Tok::Ident(s) | Tok::Str(s) => s,
                    t => return Err(ParseError::Syntax { pos, message: format!("expected a model name, found {t}") }),
                });
            }
            self.expect(Tok::Semi)?;
            if decls.insert(name.clone(), UdfDecl { expression, ty, model }).is_some() {
                return Err(ParseError::Syntax { pos, message: format!("UDF `{name}` is declared twice") });
            }
        }
        let plan = self.plan()?;
        if *self.peek() != Tok::Eof {
            return self.err(format!("unexpected {} after the end of the query", self.peek()));
        }
        Ok((decls, plan))
    }

    fn plan(&mut self) -> Result<PlanAst, ParseError> {
        let pos = self.pos();
        let name = match self.peek().clone() {
            Tok::Ident(s) => s,
            Tok::QIdent(s) => {
                self.next();
                return Ok(PlanAst::Scan { table: s, pos });
            }
            Tok::LParen => {
                self.next();
                let p = self.plan()?;
                self.expect(Tok::RParen)?;
                return Ok(p);
            }
            t => return self.err(format!("expected an operator or table name, found {t}")),
        };
        self.next();
        if !(OPERATORS.contains(&name.as_str()) && *self.peek() == Tok::LParen) {
            if *self.peek() == Tok::LParen {
                return Err(ParseError::Syntax {
                    pos,
                    message: format!("unknown operator `{name}` (expected one of {})", OPERATORS.join(", ")),
                });
            }
            return Ok(PlanAst::Scan { table: name, pos });
        }
        self.expect(Tok::LParen)?;
        let node = match name.as_str() {
            "Select" => {
                let pred = self.pred()?;
                self.expect(Tok::Comma)?;
                let child = Box::new(self.plan()?);
                PlanAst::Select { pred, child, pos }
            }
            "Project" => {
                let items = if self.eat(&Tok::LBracket) {
                    let mut items = Vec::new();
                    if *self.peek() != Tok::RBracket {
                        loop {
                            items.push(self.proj_item()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RBracket)?;
                    items
                } else {
                    vec![self.proj_item()?]
                };
                if items.is_empty() {
                    return Err(ParseError::Syntax { pos, message: "Project needs at least one item".into() });
                }
                self.expect(Tok::Comma)?;
                let child = Box::new(self.plan()?);
                PlanAst::Project { items, child, pos }
            }
            "Join" => {
                let left = Box::new(self.plan()?);
                self.expect(Tok::Comma)?;
                let right = Box::new(self.plan()?);
                self.expect(Tok::Comma)?;
                let cond = self.join_cond()?;
                PlanAst::Join { left, right, cond, pos }
            }
            "TopK" => {
                let order = if self.udf_ahead() {
                    OrderAst::Udf(self.udf_call()?)
                } else if self.eat(&Tok::LBracket) {
                    let mut keys = Vec::new();
                    loop {
                        keys.push(self.order_key()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RBracket)?;
                    OrderAst::Keys(keys)
                } else {
                    OrderAst::Keys(vec![self.order_key()?])
                };
                self.expect(Tok::Comma)?;
                let mut k = None;
                if let Tok::Int(n) = *self.peek() {
                    if *self.peek_at(1) == Tok::Comma {
                        if n < 1 {
                            return self.err("k must be a positive integer");
                        }
                        self.next();
                        self.next();
                        k = Some(n as usize);
                    }
                }
                let child = Box::new(self.plan()?);
                PlanAst::TopK { order, k, child, pos }
            }
            "Aggregate" => {
                let aggs = if self.eat(&Tok::LBracket) {
                    let mut aggs = Vec::new();
                    if *self.peek() != Tok::RBracket {
                        loop {
                            aggs.push(self.agg()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RBracket)?;
                    aggs
                } else {
                    vec![self.agg()?]
                };
                self.expect(Tok::Comma)?;
                let mut group_by = Vec::new();
                if self.is_keyword("group_by") && *self.peek_at(1) == Tok::LParen {
                    self.next();
                    self.next();
                    loop {
                        group_by.push(self.column()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::Comma)?;
                }
                let child = Box::new(self.plan()?);
                PlanAst::Aggregate { aggs, group_by, child, pos }
            }
            _ => unreachable!(),
        };
        self.expect(Tok::RParen)?;
        Ok(node)
    }

    /// A name followed by `(` that is not a built-in function.
    fn udf_ahead(&self) -> bool {
        match (self.peek(), self.peek_at(1)) {
            (Tok::Ident(s), Tok::LParen) => Builtin::from_name(s).is_none() && !is_reserved(s) && AggFunc::from_name(s).is_none(),
            (Tok::QIdent(_), Tok::LParen) => true,
            _ => false,
        }
    }

    fn udf_call(&mut self) -> Result<UdfCall, ParseError> {
        let pos = self.pos();
        let name = self.ident("a UDF name")?;
        self.expect(Tok::LParen)?;
        let mut inline = None;
        let mut args = Vec::new();
        if name == INLINE_UDF {
            match self.next().tok {
                Tok::Str(s) => inline = Some(s),
                t => return Err(ParseError::Syntax { pos, message: format!("llm(...) takes a quoted expression first, found {t}") }),
            }
            if !self.eat(&Tok::Comma) {
                self.expect(Tok::RParen)?;
                return Ok(UdfCall { name, inline, args, pos });
            }
        }
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.column()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(UdfCall { name, inline, args, pos })
    }

    fn column(&mut self) -> Result<Col, ParseError> {
        let pos = self.pos();
        let first = self.ident("a column name")?;
        if *self.peek() == Tok::Dot {
            self.next();
            let second = self.ident("a column name")?;
            return Ok((ColumnRef::qualified(first, second), pos));
        }
        Ok((ColumnRef::bare(first), pos))
    }

    fn order_key(&mut self) -> Result<(Col, bool), ParseError> {
        let c = self.column()?;
        let desc = if self.eat_keyword("desc") {
            true
        } else {
            self.eat_keyword("asc");
            false
        };
        Ok((c, desc))
    }

    /// An argument that ends at the next top-level `,` or `)`.
    fn after_udf_arg(&self, call: &UdfCall) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Comma | Tok::RParen | Tok::Arrow => Ok(()),
            _ => Err(ParseError::Syntax {
                pos: call.pos,
                message: format!(
                    "semantic predicate `{}(...)` cannot be combined with other conditions; use a separate Select",
                    call.name
                ),
            }),
        }
    }

    fn pred(&mut self) -> Result<Pred, ParseError> {
        if self.udf_ahead() {
            let call = self.udf_call()?;
            self.after_udf_arg(&call)?;
            return Ok(Pred::Udf(call));
        }
        Ok(Pred::Expr(self.expr_ast()?))
    }

    fn join_cond(&mut self) -> Result<JoinCond, ParseError> {
        if self.is_keyword("semantic") && *self.peek_at(1) == Tok::Colon {
            self.next();
            self.next();
        }
        if self.udf_ahead() {
            let call = self.udf_call()?;
            self.after_udf_arg(&call)?;
            return Ok(JoinCond::Udf(call));
        }
        let e = self.expr_ast()?;
        if e.expr == Expr::lit(true) {
            return Ok(JoinCond::Equi(Vec::new()));
        }
        let mut pairs = Vec::new();
        let mut cols = e.cols.iter();
        for c in e.expr.conjuncts() {
            match c {
                Expr::Binary { op: BinaryOp::Eq, left, right } => match (&**left, &**right) {
                    (Expr::Column(_), Expr::Column(_)) => {
                        let a = cols.next().cloned().unwrap();
                        let b = cols.next().cloned().unwrap();
                        pairs.push((a, b));
                    }
                    _ => return Err(ParseError::Syntax { pos: e.pos, message: join_cond_message() }),
                },
                _ => return Err(ParseError::Syntax { pos: e.pos, message: join_cond_message() }),
            }
        }
        Ok(JoinCond::Equi(pairs))
    }

    fn proj_item(&mut self) -> Result<ProjItem, ParseError> {
        if self.udf_ahead() {
            let call = self.udf_call()?;
            if !self.eat(&Tok::Arrow) {
                return Err(ParseError::Syntax {
                    pos: call.pos,
                    message: format!("projection UDF `{}` needs a target: `-> name` or `-> (a: type, ...)`", call.name),
                });
            }
            let target = if self.eat(&Tok::LParen) {
                let mut fields = Vec::new();
                loop {
                    let f = self.ident("an output field name")?;
                    let ty = if self.eat(&Tok::Colon) { Some(self.type_tag()?) } else { None };
                    fields.push((f, ty));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RParen)?;
                ProjTarget::Tuple(fields)
            } else {
                let alias = self.ident("an output column name")?;
                let ty = if self.eat(&Tok::Colon) { Some(self.type_tag()?) } else { None };
                ProjTarget::Scalar(alias, ty)
            };
            return Ok(ProjItem::Udf(call, target));
        }
        let e = self.expr_ast()?;
        if self.eat(&Tok::Arrow) {
            let alias = self.ident("an output column name")?;
            return Ok(ProjItem::Derive(e, alias));
        }
        match e.expr {
            Expr::Column(c) => Ok(ProjItem::Column((c, e.pos))),
            _ => Err(ParseError::Syntax { pos: e.pos, message: "computed projection items need `-> name`".into() }),
        }
    }

    fn agg(&mut self) -> Result<AggAst, ParseError> {
        let pos = self.pos();
        if let (Tok::Ident(name), Tok::LParen) = (self.peek().clone(), self.peek_at(1).clone()) {
            if let Some(func) = AggFunc::from_name(&name) {
                self.next();
                self.next();
                let arg = if self.eat(&Tok::Star) { None } else { Some(self.column()?) };
                self.expect(Tok::RParen)?;
                if arg.is_none() && func != AggFunc::Count {
                    return Err(ParseError::Syntax { pos, message: format!("{}(*) is not allowed", func.name()) });
                }
                let alias = if self.eat(&Tok::Arrow) {
                    self.ident("an output column name")?
                } else {
                    match &arg {
                        Some((c, _)) => format!("{}_{}", func.name(), c.name),
                        None => func.name().to_string(),
                    }
                };
                return Ok(AggAst::Func { func, arg, alias });
            }
        }
        if self.udf_ahead() {
            let call = self.udf_call()?;
            if !self.eat(&Tok::Arrow) {
                return Err(ParseError::Syntax {
                    pos: call.pos,
                    message: format!("aggregate UDF `{}` needs a target: `-> name`", call.name),
                });
            }
            let alias = self.ident("an output column name")?;
            let ty = if self.eat(&Tok::Colon) { Some(self.type_tag()?) } else { None };
            return Ok(AggAst::Udf { call, alias, ty });
        }
        self.err(format!("expected an aggregate such as sum(col) -> name, found {}", self.peek()))
    }

    // -- expressions --------------------------------------------------------

    fn expr_ast(&mut self) -> Result<ExprAst, ParseError> {
        let pos = self.pos();
        let mut cols = Vec::new();
        let expr = self.or_expr(&mut cols)?;
        Ok(ExprAst { expr, cols, pos })
    }

    fn or_expr(&mut self, cols: &mut Vec<Col>) -> Result<Expr, ParseError> {
        let mut e = self.and_expr(cols)?;
        while self.eat_keyword("or") {
            let r = self.and_expr(cols)?;
            e = Expr::binary(BinaryOp::Or, e, r);
        }
        Ok(e)
    }

    fn and_expr(&mut self, cols: &mut Vec<Col>) -> Result<Expr, ParseError> {
        let mut e = self.not_expr(cols)?;
        while self.eat_keyword("and") {
            let r = self.not_expr(cols)?;
            e = Expr::binary(BinaryOp::And, e, r);
        }
        Ok(e)
    }

    fn not_expr(&mut self, cols: &mut Vec<Col>) -> Result<Expr, ParseError> {
        if self.eat_keyword("not") {
            return Ok(Expr::Not(Box::new(self.not_expr(cols)?)));
        }
        self.cmp_expr(cols)
    }

    fn cmp_expr(&mut self, cols: &mut Vec<Col>) -> Result<Expr, ParseError> {
        let e = self.add_expr(cols)?;
        let op = match self.peek() {
            Tok::Eq => Some(BinaryOp::Eq),
            Tok::Ne => Some(BinaryOp::Ne),
            Tok::Lt => Some(BinaryOp::Lt),
            Tok::Le => Some(BinaryOp::Le),
            Tok::Gt => Some(BinaryOp::Gt),
            Tok::Ge => Some(BinaryOp::Ge),
            _ => None,
        };
        if let Some(op) = op {
            self.next();
            let r = self.add_expr(cols)?;
            return Ok(Expr::binary(op, e, r));
        }
        let negated = self.is_keyword("not")
            && matches!(self.peek_at(1), Tok::Ident(s) if s.eq_ignore_ascii_case("in") || s.eq_ignore_ascii_case("between"));
        if negated {
            self.next();
        }
        if self.eat_keyword("in") {
            self.expect(Tok::LParen)?;
            let mut list = Vec::new();
            loop {
                list.push(self.add_expr(cols)?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::RParen)?;
            return Ok(Expr::InList { expr: Box::new(e), list, negated });
        }
        if self.eat_keyword("between") {
            let low = self.add_expr(cols)?;
            if !self.eat_keyword("and") {
                return self.err("expected AND in BETWEEN");
            }
            let high = self.add_expr(cols)?;
            return Ok(Expr::Between { expr: Box::new(e), low: Box::new(low), high: Box::new(high), negated });
        }
        if self.eat_keyword("is") {
            let negated = self.eat_keyword("not");
            if !self.eat_keyword("null") {
                return self.err("expected NULL after IS");
            }
            return Ok(Expr::IsNull { expr: Box::new(e), negated });
        }
        Ok(e)
    }

    fn add_expr(&mut self, cols: &mut Vec<Col>) -> Result<Expr, ParseError> {
        let mut e = self.mul_expr(cols)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(e),
            };
            self.next();
            let r = self.mul_expr(cols)?;
            e = Expr::binary(op, e, r);
        }
    }

    fn mul_expr(&mut self, cols: &mut Vec<Col>) -> Result<Expr, ParseError> {
        let mut e = self.unary_expr(cols)?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(e),
            };
            self.next();
            let r = self.unary_expr(cols)?;
            e = Expr::binary(op, e, r);
        }
    }

    fn unary_expr(&mut self, cols: &mut Vec<Col>) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Minus) {
            // Negative numeric literals are folded into the literal.
            match self.peek().clone() {
                Tok::Int(i) => {
                    self.next();
                    return Ok(Expr::lit(-i));
                }
                Tok::Float(x) => {
                    self.next();
                    return Ok(Expr::lit(-x));
                }
                _ => return Ok(Expr::Neg(Box::new(self.unary_expr(cols)?))),
            }
        }
        self.primary(cols)
    }

    fn primary(&mut self, cols: &mut Vec<Col>) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.next();
                Ok(Expr::lit(i))
            }
            Tok::Float(x) => {
                self.next();
                Ok(Expr::lit(x))
            }
            Tok::Str(s) => {
                self.next();
                Ok(Expr::Literal(Value::Text(s)))
            }
            Tok::LParen => {
                self.next();
                let e = self.or_expr(cols)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::QIdent(_) => {
                if *self.peek_at(1) == Tok::LParen {
                    return self.err("semantic predicates cannot be nested inside an expression; give it its own operator");
                }
                let c = self.column()?;
                cols.push(c.clone());
                Ok(Expr::Column(c.0))
            }
            Tok::Ident(name) => {
                if *self.peek_at(1) == Tok::LParen {
                    if let Some(func) = Builtin::from_name(&name) {
                        self.next();
                        self.next();
                        let mut args = Vec::new();
                        if *self.peek() != Tok::RParen {
                            loop {
                                args.push(self.or_expr(cols)?);
                                if !self.eat(&Tok::Comma) {
                                    break;
                                }
                            }
                        }
                        self.expect(Tok::RParen)?;
                        return Ok(Expr::Call { func, args });
                    }
                    return Err(ParseError::Syntax {
                        pos,
                        message: format!(
                            "semantic predicate `{name}(...)` cannot be nested inside an expression; give it its own operator"
                        ),
                    });
                }
                if name.eq_ignore_ascii_case("true") {
                    self.next();
                    return Ok(Expr::lit(true));
                }
                if name.eq_ignore_ascii_case("false") {
                    self.next();
                    return Ok(Expr::lit(false));
                }
                if name.eq_ignore_ascii_case("null") {
                    self.next();
                    return Ok(Expr::Literal(Value::Null));
                }
                if is_reserved(&name) {
                    return self.err(format!("unexpected keyword `{name}`"));
                }
                let c = self.column()?;
                cols.push(c.clone());
                Ok(Expr::Column(c.0))
            }
            t => self.err(format!("expected an expression, found {t}")),
        }
    }
}

fn join_cond_message() -> String {
    "join condition must be `a = b [AND c = d ...]`, `true`, or a UDF call".into()
}

// ---------------------------------------------------------------------------
// Lowering to a plan

struct Lowerer<'a> {
    catalog: &'a dyn SchemaProvider,
    decls: HashMap<String, UdfDecl>,
    /// Types implied by comparisons against literals, used for
    /// unannotated scalar UDF outputs.
    hints: HashMap<String, TypeTag>,
    builder: PlanBuilder,
    schemas: Vec<Schema>,
}

fn resolve_err(e: ResolveError, pos: Pos, schema: &Schema) -> ParseError {
    match e {
        ResolveError::Unknown(c) => ParseError::UnknownColumn {
            pos,
            column: c.to_string(),
            available: schema.names().join(", "),
        },
        ResolveError::Ambiguous(c) => ParseError::AmbiguousColumn { pos, column: c.to_string() },
    }
}

fn expr_err(e: ExprError, ast: &ExprAst, schema: &Schema) -> ParseError {
    match e {
        ExprError::Resolve(r) => {
            let c = match &r {
                ResolveError::Unknown(c) | ResolveError::Ambiguous(c) => c,
            };
            let pos = ast.cols.iter().find(|(x, _)| x == c).map(|(_, p)| *p).unwrap_or(ast.pos);
            resolve_err(r, pos, schema)
        }
        other => ParseError::Type { pos: ast.pos, message: other.to_string() },
    }
}

fn collect_hints(ast: &PlanAst, hints: &mut HashMap<String, TypeTag>) {
    fn from_expr(e: &Expr, hints: &mut HashMap<String, TypeTag>) {
        let mut note = |c: &Expr, v: &Expr| {
            if let (Expr::Column(c), Expr::Literal(v)) = (c, v) {
                if let Some(t) = v.type_tag() {
                    hints.entry(c.name.clone()).or_insert(t);
                }
            }
        };
        match e {
            Expr::Binary { op, left, right } if op.is_comparison() => {
                note(left, right);
                note(right, left);
            }
            Expr::Binary { left, right, .. } => {
                from_expr(left, hints);
                from_expr(right, hints);
            }
            Expr::Not(e) => from_expr(e, hints),
            Expr::InList { expr, list, .. } => {
                if let Some(first) = list.first() {
                    note(expr, first);
                }
            }
            Expr::Between { expr, low, .. } => note(expr, low),
            _ => {}
        }
    }
    match ast {
        PlanAst::Scan { .. } => {}
        PlanAst::Select { pred, child, .. } => {
            if let Pred::Expr(e) = pred {
                from_expr(&e.expr, hints);
            }
            collect_hints(child, hints);
        }
        PlanAst::Project { child, .. } | PlanAst::TopK { child, .. } => collect_hints(child, hints),
        PlanAst::Aggregate { aggs, child, .. } => {
            for a in aggs {
                if let AggAst::Func { func: AggFunc::Sum | AggFunc::Avg, arg: Some((c, _)), .. } = a {
                    hints.entry(c.name.clone()).or_insert(TypeTag::Float);
                }
            }
            collect_hints(child, hints);
        }
        PlanAst::Join { left, right, .. } => {
            collect_hints(left, hints);
            collect_hints(right, hints);
        }
    }
}

impl Lowerer<'_> {
    fn add(&mut self, op: Operator, children: Vec<NodeId>, pos: Pos) -> Result<NodeId, ParseError> {
        let inputs: Vec<&Schema> = children.iter().map(|c| &self.schemas[c.0]).collect();
        let schema = crate::plan::schema_for(&op, &inputs, self.catalog).map_err(|e| {
            use crate::plan::SchemaError as S;
            let input = inputs.first().copied().cloned().unwrap_or_default();
            match e {
                S::UnknownTable(table) => ParseError::UnknownTable { pos, table },
                S::Resolve(r) => resolve_err(r, pos, &input),
                S::Expr(ExprError::Resolve(r)) => resolve_err(r, pos, &input),
                S::Duplicate(d) => ParseError::Type { pos, message: format!("duplicate output column `{}`", d.0) },
                other => ParseError::Type { pos, message: other.to_string() },
            }
        })?;
        let id = self.builder.add(op, children);
        debug_assert_eq!(id.0, self.schemas.len());
        self.schemas.push(schema);
        Ok(id)
    }

    fn check_cols(&self, cols: &[Col], schema: &Schema) -> Result<(), ParseError> {
        for (c, pos) in cols {
            schema.resolve(c).map_err(|e| resolve_err(e, *pos, schema))?;
        }
        Ok(())
    }

    fn udf(&self, call: &UdfCall, output: OutputKind) -> Result<LlmUdf, ParseError> {
        let inputs: Vec<ColumnRef> = call.args.iter().map(|(c, _)| c.clone()).collect();
        let mut udf = LlmUdf::named(call.name.clone(), inputs, output);
        if let Some(text) = &call.inline {
            udf.expression = text.clone();
        } else if let Some(d) = self.decls.get(&call.name) {
            udf.expression = d.expression.clone();
            if let Some(m) = &d.model {
                udf.model = m.clone();
            }
        }
        if udf.model.is_empty() {
            udf.model = DEFAULT_MODEL.to_string();
        }
        if let Some(p) = udf.unbound_placeholders().into_iter().next() {
            return Err(ParseError::UnboundPlaceholder { pos: call.pos, udf: call.name.clone(), placeholder: p });
        }
        Ok(udf)
    }

    fn lower(&mut self, ast: &PlanAst) -> Result<NodeId, ParseError> {
        match ast {
            PlanAst::Scan { table, pos } => self.add(Operator::Scan { table: table.clone() }, vec![], *pos),
            PlanAst::Select { pred, child, pos } => {
                let c = self.lower(child)?;
                let schema = self.schemas[c.0].clone();
                let op = match pred {
                    Pred::Expr(e) => {
                        match e.expr.infer_type(&schema).map_err(|err| expr_err(err, e, &schema))? {
                            Some(TypeTag::Bool) | None => {}
                            Some(t) => {
                                return Err(ParseError::Type {
                                    pos: e.pos,
                                    message: format!("Select predicate has type {t}, expected bool"),
                                })
                            }
                        }
                        Operator::Select { predicate: e.expr.clone() }
                    }
                    Pred::Udf(call) => {
                        self.check_cols(&call.args, &schema)?;
                        Operator::SemanticSelect { udf: self.udf(call, OutputKind::Boolean)? }
                    }
                };
                self.add(op, vec![c], *pos)
            }
            PlanAst::Project { items, child, pos } => {
                let mut cur = self.lower(child)?;
                let mut names: Vec<ColumnRef> = Vec::new();
                let only_columns = items.iter().all(|i| matches!(i, ProjItem::Column(_)));
                for item in items {
                    let schema = self.schemas[cur.0].clone();
                    match item {
                        ProjItem::Column((c, p)) => {
                            schema.resolve(c).map_err(|e| resolve_err(e, *p, &schema))?;
                            names.push(c.clone());
                        }
                        ProjItem::Derive(e, alias) => {
                            e.expr.infer_type(&schema).map_err(|err| expr_err(err, e, &schema))?;
                            cur = self.add(Operator::Derive { expr: e.expr.clone(), alias: alias.clone() }, vec![cur], e.pos)?;
                            names.push(ColumnRef::bare(alias));
                        }
                        ProjItem::Udf(call, target) => {
                            self.check_cols(&call.args, &schema)?;
                            let declared = self.decls.get(&call.name).and_then(|d| d.ty.clone());
                            let (output, outputs) = match target {
                                ProjTarget::Scalar(alias, ty) => {
                                    let ty = ty
                                        .or(match &declared {
                                            Some(DeclType::Scalar(t)) => Some(*t),
                                            _ => None,
                                        })
                                        .or_else(|| self.hints.get(alias).copied())
                                        .unwrap_or(TypeTag::Text);
                                    (OutputKind::Scalar(ty), vec![alias.clone()])
                                }
                                ProjTarget::Tuple(fields) => {
                                    let typed: Vec<(String, TypeTag)> = fields
                                        .iter()
                                        .map(|(f, ty)| {
                                            let from_decl = match &declared {
                                                Some(DeclType::Tuple(d)) => {
                                                    d.iter().find(|(n, _)| n == f).map(|(_, t)| *t)
                                                }
                                                _ => None,
                                            };
                                            (f.clone(), ty.or(from_decl).unwrap_or(TypeTag::Text))
                                        })
                                        .collect();
                                    let outs = typed.iter().map(|(f, _)| f.clone()).collect();
                                    (OutputKind::Tuple(typed), outs)
                                }
                            };
                            let udf = self.udf(call, output)?;
                            names.extend(outputs.iter().map(ColumnRef::bare));
                            cur = self.add(Operator::SemanticProject { udf, outputs }, vec![cur], call.pos)?;
                        }
                    }
                }
                if only_columns || items.iter().any(|i| matches!(i, ProjItem::Column(_))) {
                    cur = self.add(Operator::Project { columns: names }, vec![cur], *pos)?;
                }
                Ok(cur)
            }
            PlanAst::Join { left, right, cond, pos } => {
                let l = self.lower(left)?;
                let r = self.lower(right)?;
                let (ls, rs) = (self.schemas[l.0].clone(), self.schemas[r.0].clone());
                let op = match cond {
                    JoinCond::Equi(pairs) => {
                        let mut on = Vec::new();
                        for ((a, pa), (b, pb)) in pairs {
                            let side = |c: &ColumnRef, p: Pos| -> Result<(bool, bool), ParseError> {
                                let inl = ls.resolve(c);
                                let inr = rs.resolve(c);
                                match (&inl, &inr) {
                                    (Err(ResolveError::Ambiguous(_)), _) | (_, Err(ResolveError::Ambiguous(_))) => {
                                        Err(ParseError::AmbiguousColumn { pos: p, column: c.to_string() })
                                    }
                                    (Err(_), Err(_)) => Err(ParseError::UnknownColumn {
                                        pos: p,
                                        column: c.to_string(),
                                        available: ls.concat(&rs).map(|s| s.names()).unwrap_or_default().join(", "),
                                    }),
                                    _ => Ok((inl.is_ok(), inr.is_ok())),
                                }
                            };
                            let (al, ar) = side(a, *pa)?;
                            let (bl, br) = side(b, *pb)?;
                            if al && br && !(ar && bl) {
                                on.push((a.clone(), b.clone()));
                            } else if ar && bl && !(al && br) {
                                on.push((b.clone(), a.clone()));
                            } else if al && br {
                                on.push((a.clone(), b.clone()));
                            } else {
                                return Err(ParseError::Type {
                                    pos: *pa,
                                    message: format!("join condition `{a} = {b}` must compare a column of each input"),
                                });
                            }
                        }
                        Operator::Join { on }
                    }
                    JoinCond::Udf(call) => {
                        let both = ls.concat(&rs).map_err(|d| ParseError::Type {
                            pos: *pos,
                            message: format!("both join inputs have column `{}`", d.0),
                        })?;
                        self.check_cols(&call.args, &both)?;
                        Operator::SemanticJoin { udf: self.udf(call, OutputKind::Boolean)? }
                    }
                };
                self.add(op, vec![l, r], *pos)
            }
            PlanAst::TopK { order, k, child, pos } => {
                let c = self.lower(child)?;
                let schema = self.schemas[c.0].clone();
                let op = match order {
                    OrderAst::Keys(keys) => {
                        let cols: Vec<Col> = keys.iter().map(|(c, _)| c.clone()).collect();
                        self.check_cols(&cols, &schema)?;
                        Operator::TopK {
                            order: keys.iter().map(|((c, _), d)| OrderKey { column: c.clone(), descending: *d }).collect(),
                            k: *k,
                        }
                    }
                    OrderAst::Udf(call) => {
                        self.check_cols(&call.args, &schema)?;
                        Operator::SemanticTopK { udf: self.udf(call, OutputKind::Boolean)?, k: *k }
                    }
                };
                self.add(op, vec![c], *pos)
            }
            PlanAst::Aggregate { aggs, group_by, child, pos } => {
                let c = self.lower(child)?;
                let schema = self.schemas[c.0].clone();
                self.check_cols(group_by, &schema)?;
                let group: Vec<ColumnRef> = group_by.iter().map(|(c, _)| c.clone()).collect();
                let udfs: Vec<&AggAst> = aggs.iter().filter(|a| matches!(a, AggAst::Udf { .. })).collect();
                let op = if let Some(AggAst::Udf { call, alias, ty }) = udfs.first() {
                    if aggs.len() > 1 {
                        return Err(ParseError::Syntax {
                            pos: call.pos,
                            message: "a semantic aggregate must be the only aggregate of its operator".into(),
                        });
                    }
                    self.check_cols(&call.args, &schema)?;
                    let udf = self.udf(call, OutputKind::Aggregate(ty.unwrap_or(TypeTag::Text)))?;
                    Operator::SemanticAggregate { group_by: group, udf, alias: alias.clone() }
                } else {
                    let mut items = Vec::new();
                    for a in aggs {
                        if let AggAst::Func { func, arg, alias } = a {
                            if let Some(col) = arg {
                                self.check_cols(std::slice::from_ref(col), &schema)?;
                            }
                            items.push(AggItem { func: *func, arg: arg.as_ref().map(|(c, _)| c.clone()), alias: alias.clone() });
                        }
                    }
                    Operator::Aggregate { group_by: group, aggs: items }
                };
                self.add(op, vec![c], *pos)
            }
        }
    }
}

/// Parses query text and checks it against the catalog.
pub fn parse(text: &str, catalog: &dyn SchemaProvider) -> Result<QueryPlan, ParseError> {
    let toks = tokenize(text).map_err(|e| ParseError::Syntax { pos: e.pos, message: e.message })?;
    let mut p = Parser { toks, i: 0 };
    let (decls, ast) = p.query()?;
    let mut hints = HashMap::new();
    collect_hints(&ast, &mut hints);
    let mut l = Lowerer { catalog, decls, hints, builder: PlanBuilder::new(), schemas: Vec::new() };
    let root = l.lower(&ast)?;
    let plan = l.builder.finish(root);
    let report = validate_plan(&plan, catalog);
    if let Some(problem) = report.problems.first() {
        return Err(ParseError::Type { pos: Pos { line: 1, col: 1 }, message: problem.to_string() });
    }
    Ok(plan)
}

/// Parses a standalone relational expression (no UDF calls).
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(text).map_err(|e| ParseError::Syntax { pos: e.pos, message: e.message })?;
    let mut p = Parser { toks, i: 0 };
    let e = p.expr_ast()?;
    if *p.peek() != Tok::Eof {
        return p.err(format!("unexpected {} after the expression", p.peek()));
    }
    Ok(e.expr)
}

impl fmt::Display for QueryPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print(self))
    }
}

#[cfg(test)]
mod tests;
