//! A small arithmetic expression language for user-supplied real functions.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := unary
//! unary  := "-" unary | power
//! power  := atom ("^" unary)?
//! atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! `^` binds tighter than unary minus and is right associative, so `-x^2`
//! is `-(x^2)` and `2^3^2` is `2^(3^2)`. Evaluation never yields NaN or an
//! infinity: domain violations surface as [`EvalError`].

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Func {
    Min,
    Max,
    Abs,
    Sqrt,
    Exp,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
        }
    }

    fn accepts(self, argc: usize) -> bool {
        match self {
            Func::Min | Func::Max => argc >= 1,
            Func::Abs | Func::Sqrt | Func::Exp => argc == 1,
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("expected {}, found {found}", .expected.join(" or "))]
    Expected {
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("function `{name}` does not accept {found} argument(s)")]
    Arity { name: &'static str, found: usize },
    #[error("malformed number `{0}`")]
    BadNumber(String),
}

/// Syntax error with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    NegativeSqrt(f64),
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::Caret => f.write_str("`^`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let value = lit.parse::<f64>().map_err(|_| ParseError {
                    offset: start,
                    kind: ParseErrorKind::BadNumber(lit.to_string()),
                })?;
                out.push((start, Tok::Num(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::Expected {
                        expected: vec!["a token"],
                        found: format!("character `{ch}`"),
                    },
                });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

const OPERAND: &[&str] = &["number", "identifier", "`(`", "`-`"];

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&'static str]) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind: ParseErrorKind::Expected {
                expected: expected.to_vec(),
                found: self.peek().to_string(),
            },
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected(&["`)`"]));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() != Tok::LParen {
                    return Ok(Expr::Var(name));
                }
                let func = Func::lookup(&name).ok_or(ParseError {
                    offset,
                    kind: ParseErrorKind::UnknownFunction(name.clone()),
                })?;
                self.bump();
                let mut args = vec![self.expr()?];
                loop {
                    match self.peek() {
                        Tok::Comma => {
                            self.bump();
                            args.push(self.expr()?);
                        }
                        Tok::RParen => {
                            self.bump();
                            break;
                        }
                        _ => return Err(self.unexpected(&["`,`", "`)`"])),
                    }
                }
                if !func.accepts(args.len()) {
                    return Err(ParseError {
                        offset,
                        kind: ParseErrorKind::Arity {
                            name: func.name(),
                            found: args.len(),
                        },
                    });
                }
                Ok(Expr::Call(func, args))
            }
            _ => Err(self.unexpected(OPERAND)),
        }
    }
}

/// Parses `text` into an expression tree.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    if toks.len() == 1 {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::Empty,
        });
    }
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected(&["operator", "end of input"]));
    }
    Ok(e)
}

/// Variable assignment used by [`Expr::eval`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Binding(BTreeMap<String, f64>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }
}

fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

fn apply_binary(op: BinOp, a: f64, b: f64) -> Result<f64, EvalError> {
    finite(match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            a / b
        }
        BinOp::Pow => a.powf(b),
    })
}

fn apply_call(func: Func, args: &[f64]) -> Result<f64, EvalError> {
    finite(match func {
        Func::Min => args.iter().copied().fold(f64::INFINITY, f64::min),
        Func::Max => args.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Func::Abs => args[0].abs(),
        Func::Sqrt => {
            if args[0] < 0.0 {
                return Err(EvalError::NegativeSqrt(args[0]));
            }
            args[0].sqrt()
        }
        Func::Exp => args[0].exp(),
    })
}

impl Expr {
    /// Evaluates the tree under `binding`.
    pub fn eval(&self, binding: &Binding) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(name) => binding
                .get(name)
                .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
            Expr::Neg(e) => Ok(-e.eval(binding)?),
            Expr::Binary(op, a, b) => apply_binary(*op, a.eval(binding)?, b.eval(binding)?),
            Expr::Call(func, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.eval(binding))
                    .collect::<Result<Vec<_>, _>>()?;
                apply_call(*func, &vals)
            }
        }
    }

    /// Distinct variable names in first-occurrence order.
    pub fn variables(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Num(_) => {}
                Expr::Var(n) => {
                    if !out.contains(n) {
                        out.push(n.clone());
                    }
                }
                Expr::Neg(a) => walk(a, out),
                Expr::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Expr::Call(_, args) => args.iter().for_each(|a| walk(a, out)),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }
}

/// Evaluates `e` under `b`.
pub fn eval_expr(e: &Expr, b: &Binding) -> Result<f64, EvalError> {
    e.eval(b)
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Arg(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, args: &[f64]) -> Result<f64, EvalError> {
        match self {
            Node::Num(v) => Ok(*v),
            Node::Arg(i) => Ok(args[*i]),
            Node::Neg(e) => Ok(-e.eval(args)?),
            Node::Binary(op, a, b) => apply_binary(*op, a.eval(args)?, b.eval(args)?),
            Node::Call(func, xs) => {
                let mut vals = [0.0; 8];
                if xs.len() <= vals.len() {
                    for (slot, x) in vals.iter_mut().zip(xs) {
                        *slot = x.eval(args)?;
                    }
                    apply_call(*func, &vals[..xs.len()])
                } else {
                    let vals = xs
                        .iter()
                        .map(|x| x.eval(args))
                        .collect::<Result<Vec<_>, _>>()?;
                    apply_call(*func, &vals)
                }
            }
        }
    }
}

/// An expression with its variables resolved to positional arguments.
///
/// This is the form used inside grid scans, where name lookups would
/// dominate the cost of evaluation.
#[derive(Debug, Clone)]
pub struct Function {
    source: String,
    params: Vec<String>,
    code: Node,
}

/// Failure to build a [`Function`] from source text.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown variable `{name}` (allowed: {allowed})")]
    UnknownVariable { name: String, allowed: String },
}

impl Function {
    /// Parses `text` and binds its variables to `params`, in order.
    pub fn parse(text: &str, params: &[&str]) -> Result<Self, FunctionError> {
        let expr = parse(text)?;
        Self::from_expr(text, &expr, params)
    }

    pub fn from_expr(source: &str, expr: &Expr, params: &[&str]) -> Result<Self, FunctionError> {
        fn lower(e: &Expr, params: &[&str]) -> Result<Node, FunctionError> {
            Ok(match e {
                Expr::Num(v) => Node::Num(*v),
                Expr::Var(name) => match params.iter().position(|p| p == name) {
                    Some(i) => Node::Arg(i),
                    None => {
                        return Err(FunctionError::UnknownVariable {
                            name: name.clone(),
                            allowed: params.join(", "),
                        })
                    }
                },
                Expr::Neg(a) => Node::Neg(Box::new(lower(a, params)?)),
                Expr::Binary(op, a, b) => Node::Binary(
                    *op,
                    Box::new(lower(a, params)?),
                    Box::new(lower(b, params)?),
                ),
                Expr::Call(f, args) => Node::Call(
                    *f,
                    args.iter()
                        .map(|a| lower(a, params))
                        .collect::<Result<_, _>>()?,
                ),
            })
        }
        Ok(Self {
            source: source.trim().to_string(),
            params: params.iter().map(|s| s.to_string()).collect(),
            code: lower(expr, params)?,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    /// Evaluates with positional arguments matching [`Function::params`].
    pub fn call(&self, args: &[f64]) -> Result<f64, EvalError> {
        assert_eq!(
            args.len(),
            self.params.len(),
            "arity mismatch for `{}`",
            self.source
        );
        self.code.eval(args)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_x(text: &str, x: f64) -> f64 {
        parse(text)
            .unwrap()
            .eval(&Binding::new().with("x", x))
            .unwrap()
    }

    #[test]
    fn operation_examples() {
        assert_eq!(at_x("x/2", 1.0), 0.5);
        assert_eq!(at_x("min(x, 1 - x)", 0.3), 0.3);
        assert_eq!(at_x("0", 0.7), 0.0);
        assert_eq!(at_x("x^2", 3.0), 9.0);
        assert_eq!(at_x("abs(-2)+1", 0.0), 3.0);
        assert_eq!(at_x("x - x", 0.123), 0.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(at_x("-2^2", 0.0), -4.0);
        assert_eq!(at_x("2^3^2", 0.0), 512.0);
        assert_eq!(at_x("2^-1", 0.0), 0.5);
        assert_eq!(at_x("8/4/2", 0.0), 1.0);
        assert_eq!(at_x("8-4-2", 0.0), 2.0);
        assert_eq!(at_x("--3", 0.0), 3.0);
        assert_eq!(at_x("2*-3", 0.0), -6.0);
        assert_eq!(at_x("1.5e1 + .5", 0.0), 15.5);
    }

    #[test]
    fn trailing_operator_reports_end_offset() {
        let err = parse("x +").unwrap_err();
        assert_eq!(err.offset, 3);
        assert!(matches!(err.kind, ParseErrorKind::Expected { .. }));
    }

    #[test]
    fn syntax_errors_are_positioned() {
        assert_eq!(parse("(x + 1").unwrap_err().offset, 6);
        assert_eq!(parse("x ) 1").unwrap_err().offset, 2);
        assert_eq!(parse("2 $ 3").unwrap_err().offset, 2);
        assert_eq!(parse("  ").unwrap_err().kind, ParseErrorKind::Empty);
        let err = parse("1 + foo(x)").unwrap_err();
        assert_eq!(err.offset, 4);
        assert_eq!(err.kind, ParseErrorKind::UnknownFunction("foo".into()));
        assert!(matches!(
            parse("sqrt(1, 2)").unwrap_err().kind,
            ParseErrorKind::Arity {
                name: "sqrt",
                found: 2
            }
        ));
    }

    #[test]
    fn domain_errors() {
        let b = Binding::new().with("x", 0.0);
        assert_eq!(
            parse("1/x").unwrap().eval(&b),
            Err(EvalError::DivisionByZero)
        );
        assert_eq!(
            parse("sqrt(x - 1)").unwrap().eval(&b),
            Err(EvalError::NegativeSqrt(-1.0))
        );
        assert_eq!(
            parse("exp(1000)").unwrap().eval(&b),
            Err(EvalError::NonFinite)
        );
        assert_eq!(
            parse("(-1)^0.5").unwrap().eval(&b),
            Err(EvalError::NonFinite)
        );
        assert_eq!(
            parse("y").unwrap().eval(&b),
            Err(EvalError::UnboundVariable("y".into()))
        );
    }

    #[test]
    fn bound_function_matches_tree_eval() {
        let f = Function::parse("max(u1 - 0.5*u2, u3) + u4^2", &["u1", "u2", "u3", "u4"]).unwrap();
        let b = Binding::new()
            .with("u1", 0.8)
            .with("u2", 0.2)
            .with("u3", 0.1)
            .with("u4", 0.5);
        let tree = parse(f.source()).unwrap().eval(&b).unwrap();
        assert_eq!(f.call(&[0.8, 0.2, 0.1, 0.5]).unwrap(), tree);
        assert!(matches!(
            Function::parse("x + z", &["x"]),
            Err(FunctionError::UnknownVariable { .. })
        ));
    }
}
