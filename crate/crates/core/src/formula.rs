//! Predictor formulas: parsing, symbolic differentiation, evaluation.
//!
//! A predictor is written as text over parameters, covariate names, and
//! the operators `+ - * / ^` plus `log`, `exp`, `sqrt`, and parentheses:
//!
//! ```text
//! b1 + b2*x1
//! b1 + x2^b2 + b3*log(x3 - b4) + x3/b5
//! ```
//!
//! Mean-submodel parameters are `b1, b2, ...` and precision-submodel
//! parameters are `g1, g2, ...`; indices must be contiguous from 1. Any
//! other identifier must name a covariate column. `^` binds tighter than
//! unary minus (`-x^2` is `-(x^2)`) and associates to the right.
//!
//! Derivatives with respect to each parameter are produced symbolically
//! at parse time and simplified by constant folding, so Fisher scoring
//! works with exact jacobians for linear and nonlinear predictors alike.
//! Printing a parsed formula re-parses to an identical tree, which keeps
//! serialized model descriptions faithful.

use crate::data::Dataset;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeSet;
use std::fmt;

/// Which parameter family a formula draws from: `b` for the mean
/// submodel, `g` for the precision submodel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamPrefix {
    Mean,
    Precision,
}

impl ParamPrefix {
    pub fn letter(self) -> char {
        match self {
            ParamPrefix::Mean => 'b',
            ParamPrefix::Precision => 'g',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Log,
    Exp,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Expression tree for a predictor formula.
///
/// Parameter and covariate references are indices: parameters into the
/// contiguous `1..=param_count` range (0-based here), covariates into the
/// owning [`PredictorSpec`]'s name list.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(usize),
    Covariate(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    fn contains_param(&self) -> bool {
        match self {
            Expr::Param(_) => true,
            Expr::Const(_) | Expr::Covariate(_) => false,
            Expr::Unary(_, a) => a.contains_param(),
            Expr::Binary(_, a, b) => a.contains_param() || b.contains_param(),
        }
    }
}

/// Numeric constant constructor that keeps the canonical form: negative
/// values — including negative zero, whose printed `-0` would otherwise
/// escape as an unparenthesized signed atom — are represented as `Neg`
/// of a positive constant.
fn num(c: f64) -> Expr {
    if c.is_sign_negative() {
        Expr::Unary(UnaryOp::Neg, Box::new(Expr::Const(-c)))
    } else {
        Expr::Const(c)
    }
}

/// Constant value of an expression, looking through a leading `Neg`.
fn as_const(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        Expr::Unary(UnaryOp::Neg, inner) => match inner.as_ref() {
            Expr::Const(c) => Some(-c),
            _ => None,
        },
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                tokens.push((i, Token::Plus));
                i += 1;
            }
            '-' => {
                tokens.push((i, Token::Minus));
                i += 1;
            }
            '*' => {
                tokens.push((i, Token::Star));
                i += 1;
            }
            '/' => {
                tokens.push((i, Token::Slash));
                i += 1;
            }
            '^' => {
                tokens.push((i, Token::Caret));
                i += 1;
            }
            '(' => {
                tokens.push((i, Token::LParen));
                i += 1;
            }
            ')' => {
                tokens.push((i, Token::RParen));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
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
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let slice = &text[start..i];
                let value: f64 = slice.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    message: format!("invalid number `{slice}`"),
                })?;
                tokens.push((start, Token::Num(value)));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push((start, Token::Ident(text[start..i].to_string())));
            }
            other => {
                return Err(Error::Syntax {
                    offset: i,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    text_len: usize,
    schema: Vec<&'a str>,
    prefix: ParamPrefix,
    covariates: Vec<String>,
    params_seen: BTreeSet<usize>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(o, _)| *o)
            .unwrap_or(self.text_len)
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_rparen(&mut self) -> Result<()> {
        let offset = self.offset();
        match self.advance() {
            Some(Token::RParen) => Ok(()),
            _ => Err(Error::Syntax {
                offset,
                message: "expected `)`".into(),
            }),
        }
    }

    fn parse_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.advance();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Binary(BinaryOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Minus) => {
                    self.advance();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Binary(BinaryOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.advance();
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Binary(BinaryOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Slash) => {
                    self.advance();
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Binary(BinaryOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.advance();
            let inner = self.parse_unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr> {
        let base = self.parse_primary()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.advance();
            // Right-associative; the exponent may carry a unary minus.
            let exponent = self.parse_unary()?;
            return Ok(Expr::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn parse_primary(&mut self) -> Result<Expr> {
        let offset = self.offset();
        match self.advance() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let inner = self.parse_expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => self.resolve_ident(name, offset),
            Some(other) => Err(Error::Syntax {
                offset,
                message: format!("unexpected token `{other:?}`"),
            }),
            None => Err(Error::Syntax {
                offset,
                message: "unexpected end of formula".into(),
            }),
        }
    }

    fn resolve_ident(&mut self, name: String, offset: usize) -> Result<Expr> {
        let func = match name.as_str() {
            "log" => Some(UnaryOp::Log),
            "exp" => Some(UnaryOp::Exp),
            "sqrt" => Some(UnaryOp::Sqrt),
            _ => None,
        };
        if let Some(op) = func {
            if matches!(self.peek(), Some(Token::LParen)) {
                self.advance();
                let arg = self.parse_expr()?;
                self.expect_rparen()?;
                return Ok(Expr::Unary(op, Box::new(arg)));
            }
        }
        if let Some(index) = self.param_index(&name) {
            if index == 0 {
                return Err(Error::Syntax {
                    offset,
                    message: format!("parameter indices start at 1, found `{name}`"),
                });
            }
            if self.schema.iter().any(|s| *s == name) {
                return Err(Error::Syntax {
                    offset,
                    message: format!(
                        "identifier `{name}` is both a parameter and a covariate column; \
                         rename the column"
                    ),
                });
            }
            self.params_seen.insert(index);
            return Ok(Expr::Param(index - 1));
        }
        if self.schema.iter().any(|s| *s == name) {
            let idx = match self.covariates.iter().position(|c| c == &name) {
                Some(i) => i,
                None => {
                    self.covariates.push(name);
                    self.covariates.len() - 1
                }
            };
            return Ok(Expr::Covariate(idx));
        }
        Err(Error::UnknownCovariate {
            name,
            available: self.schema.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// `Some(index)` when `name` is the active prefix letter followed by
    /// digits only.
    fn param_index(&self, name: &str) -> Option<usize> {
        let mut chars = name.chars();
        if chars.next() != Some(self.prefix.letter()) {
            return None;
        }
        let rest = chars.as_str();
        if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        rest.parse().ok()
    }
}

// ---------------------------------------------------------------------------
// Simplification
// ---------------------------------------------------------------------------

/// Bottom-up constant folding plus identity elimination. Negative
/// constants are normalized to `Neg` of a positive constant and `Neg` is
/// hoisted out of products and quotients, which keeps printed derivatives
/// readable and round-trippable.
fn simplify(e: Expr) -> Expr {
    match e {
        Expr::Unary(op, a) => rewrite_unary(op, simplify(*a)),
        Expr::Binary(op, a, b) => rewrite_binary(op, simplify(*a), simplify(*b)),
        other => other,
    }
}

fn rewrite_unary(op: UnaryOp, a: Expr) -> Expr {
    if let Some(c) = as_const(&a) {
        let folded = match op {
            UnaryOp::Neg => Some(-c),
            UnaryOp::Log => (c > 0.0).then(|| c.ln()),
            UnaryOp::Exp => Some(c.exp()),
            UnaryOp::Sqrt => (c >= 0.0).then(|| c.sqrt()),
        };
        if let Some(v) = folded {
            if v.is_finite() {
                return num(v);
            }
        }
    }
    if op == UnaryOp::Neg {
        if let Expr::Unary(UnaryOp::Neg, inner) = a {
            return *inner;
        }
        return Expr::Unary(UnaryOp::Neg, Box::new(a));
    }
    Expr::Unary(op, Box::new(a))
}

fn rewrite_binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    use BinaryOp::*;
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        let v = match op {
            Add => x + y,
            Sub => x - y,
            Mul => x * y,
            Div => x / y,
            Pow => x.powf(y),
        };
        if v.is_finite() {
            return num(v);
        }
    }
    let zero = |e: &Expr| as_const(e) == Some(0.0);
    let one = |e: &Expr| as_const(e) == Some(1.0);
    match (op, a, b) {
        (Add, a, b) if zero(&a) => b,
        (Add, a, b) if zero(&b) => a,
        // Only the right operand may fold into a subtraction; rewriting
        // `(-a) + b` as `b - a` would reorder covariate references.
        (Add, a, Expr::Unary(UnaryOp::Neg, inner)) => rewrite_binary(Sub, a, *inner),
        (Sub, a, b) if zero(&b) => a,
        (Sub, a, b) if zero(&a) => rewrite_unary(UnaryOp::Neg, b),
        (Sub, a, Expr::Unary(UnaryOp::Neg, inner)) => rewrite_binary(Add, a, *inner),
        (Mul, a, b) if zero(&a) || zero(&b) => Expr::Const(0.0),
        (Mul, a, b) if one(&a) => b,
        (Mul, a, b) if one(&b) => a,
        (Mul, Expr::Unary(UnaryOp::Neg, inner), b) => {
            rewrite_unary(UnaryOp::Neg, rewrite_binary(Mul, *inner, b))
        }
        (Mul, a, Expr::Unary(UnaryOp::Neg, inner)) => {
            rewrite_unary(UnaryOp::Neg, rewrite_binary(Mul, a, *inner))
        }
        (Div, a, b) if zero(&a) && !zero(&b) => Expr::Const(0.0),
        (Div, a, b) if one(&b) => a,
        (Div, Expr::Unary(UnaryOp::Neg, inner), b) => {
            rewrite_unary(UnaryOp::Neg, rewrite_binary(Div, *inner, b))
        }
        (Div, a, Expr::Unary(UnaryOp::Neg, inner)) => {
            rewrite_unary(UnaryOp::Neg, rewrite_binary(Div, a, *inner))
        }
        (Pow, a, b) if one(&b) => a,
        (Pow, _, b) if zero(&b) => Expr::Const(1.0),
        (Pow, a, _) if one(&a) => Expr::Const(1.0),
        (op, a, b) => Expr::Binary(op, Box::new(a), Box::new(b)),
    }
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

/// Symbolic derivative with respect to parameter `j` (0-based), before
/// simplification.
fn diff(e: &Expr, j: usize) -> Expr {
    use BinaryOp::*;
    match e {
        Expr::Const(_) | Expr::Covariate(_) => Expr::Const(0.0),
        Expr::Param(i) => Expr::Const(if *i == j { 1.0 } else { 0.0 }),
        Expr::Unary(op, a) => {
            let da = diff(a, j);
            match op {
                UnaryOp::Neg => Expr::Unary(UnaryOp::Neg, Box::new(da)),
                UnaryOp::Log => Expr::Binary(Div, Box::new(da), a.clone()),
                UnaryOp::Exp => Expr::Binary(
                    Mul,
                    Box::new(Expr::Unary(UnaryOp::Exp, a.clone())),
                    Box::new(da),
                ),
                UnaryOp::Sqrt => Expr::Binary(
                    Div,
                    Box::new(da),
                    Box::new(Expr::Binary(
                        Mul,
                        Box::new(Expr::Const(2.0)),
                        Box::new(Expr::Unary(UnaryOp::Sqrt, a.clone())),
                    )),
                ),
            }
        }
        Expr::Binary(op, a, b) => {
            let da = diff(a, j);
            let db = diff(b, j);
            match op {
                Add => Expr::Binary(Add, Box::new(da), Box::new(db)),
                Sub => Expr::Binary(Sub, Box::new(da), Box::new(db)),
                Mul => Expr::Binary(
                    Add,
                    Box::new(Expr::Binary(Mul, Box::new(da), b.clone())),
                    Box::new(Expr::Binary(Mul, a.clone(), Box::new(db))),
                ),
                Div => Expr::Binary(
                    Div,
                    Box::new(Expr::Binary(
                        Sub,
                        Box::new(Expr::Binary(Mul, Box::new(da), b.clone())),
                        Box::new(Expr::Binary(Mul, a.clone(), Box::new(db))),
                    )),
                    Box::new(Expr::Binary(Mul, b.clone(), b.clone())),
                ),
                Pow => {
                    if let Some(c) = as_const(b) {
                        // Power rule for a constant exponent.
                        Expr::Binary(
                            Mul,
                            Box::new(Expr::Binary(
                                Mul,
                                Box::new(num(c)),
                                Box::new(Expr::Binary(Pow, a.clone(), Box::new(num(c - 1.0)))),
                            )),
                            Box::new(da),
                        )
                    } else {
                        // d(u^v) = u^v * (v' log u + v u'/u).
                        Expr::Binary(
                            Mul,
                            Box::new(e.clone()),
                            Box::new(Expr::Binary(
                                Add,
                                Box::new(Expr::Binary(
                                    Mul,
                                    Box::new(db),
                                    Box::new(Expr::Unary(UnaryOp::Log, a.clone())),
                                )),
                                Box::new(Expr::Binary(
                                    Mul,
                                    b.clone(),
                                    Box::new(Expr::Binary(Div, Box::new(da), a.clone())),
                                )),
                            )),
                        )
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(_) | Expr::Param(_) | Expr::Covariate(_) => 5,
        Expr::Unary(UnaryOp::Neg, _) => 3,
        Expr::Unary(_, _) => 5,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => 1,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => 2,
        Expr::Binary(BinaryOp::Pow, _, _) => 4,
    }
}

fn write_expr(
    out: &mut String,
    e: &Expr,
    names: &[String],
    prefix: ParamPrefix,
) {
    match e {
        Expr::Const(c) => out.push_str(&format!("{c}")),
        Expr::Param(i) => out.push_str(&format!("{}{}", prefix.letter(), i + 1)),
        Expr::Covariate(i) => out.push_str(&names[*i]),
        Expr::Unary(UnaryOp::Neg, a) => {
            out.push('-');
            write_child(out, a, names, prefix, precedence(a) < 3);
        }
        Expr::Unary(op, a) => {
            out.push_str(match op {
                UnaryOp::Log => "log",
                UnaryOp::Exp => "exp",
                UnaryOp::Sqrt => "sqrt",
                UnaryOp::Neg => unreachable!(),
            });
            out.push('(');
            write_expr(out, a, names, prefix);
            out.push(')');
        }
        Expr::Binary(op, a, b) => {
            let p = precedence(e);
            let (symbol, right_needs) = match op {
                BinaryOp::Add => (" + ", precedence(b) <= p),
                BinaryOp::Sub => (" - ", precedence(b) <= p),
                BinaryOp::Mul => ("*", precedence(b) <= p),
                BinaryOp::Div => ("/", precedence(b) <= p),
                // Right-associative: the left side needs parentheses at
                // equal precedence, the right side does not.
                BinaryOp::Pow => ("^", precedence(b) < p),
            };
            let left_needs = match op {
                BinaryOp::Pow => precedence(a) <= p,
                _ => precedence(a) < p,
            };
            write_child(out, a, names, prefix, left_needs);
            out.push_str(symbol);
            write_child(out, b, names, prefix, right_needs);
        }
    }
}

fn write_child(
    out: &mut String,
    e: &Expr,
    names: &[String],
    prefix: ParamPrefix,
    parens: bool,
) {
    if parens {
        out.push('(');
        write_expr(out, e, names, prefix);
        out.push(')');
    } else {
        write_expr(out, e, names, prefix);
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalFailure {
    expr: Box<Expr>,
    message: &'static str,
}

fn eval_expr(
    e: &Expr,
    params: &[f64],
    covs: &[f64],
) -> std::result::Result<f64, EvalFailure> {
    let fail = |message: &'static str| EvalFailure {
        expr: Box::new(e.clone()),
        message,
    };
    let v = match e {
        Expr::Const(c) => *c,
        Expr::Param(i) => params[*i],
        Expr::Covariate(i) => covs[*i],
        Expr::Unary(op, a) => {
            let x = eval_expr(a, params, covs)?;
            match op {
                UnaryOp::Neg => -x,
                UnaryOp::Log => {
                    if x <= 0.0 {
                        return Err(fail("log of a nonpositive value"));
                    }
                    x.ln()
                }
                UnaryOp::Exp => x.exp(),
                UnaryOp::Sqrt => {
                    if x < 0.0 {
                        return Err(fail("square root of a negative value"));
                    }
                    x.sqrt()
                }
            }
        }
        Expr::Binary(op, a, b) => {
            let x = eval_expr(a, params, covs)?;
            let y = eval_expr(b, params, covs)?;
            match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div => {
                    if y == 0.0 {
                        return Err(fail("division by zero"));
                    }
                    x / y
                }
                BinaryOp::Pow => x.powf(y),
            }
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(fail("non-finite result"))
    }
}

// ---------------------------------------------------------------------------
// PredictorSpec
// ---------------------------------------------------------------------------

/// A parsed predictor formula with its symbolic parameter derivatives.
#[derive(Debug, Clone)]
pub struct PredictorSpec {
    expr: Expr,
    derivs: Vec<Expr>,
    covariates: Vec<String>,
    param_count: usize,
    prefix: ParamPrefix,
}

impl PredictorSpec {
    /// Parse `text` against a covariate schema. Identifiers that match the
    /// active parameter pattern (`b<digits>` or `g<digits>`) become
    /// parameters; everything else must appear in `schema`.
    pub fn parse<S: AsRef<str>>(
        text: &str,
        schema: &[S],
        prefix: ParamPrefix,
    ) -> Result<Self> {
        let tokens = lex(text)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            text_len: text.len(),
            schema: schema.iter().map(|s| s.as_ref()).collect(),
            prefix,
            covariates: Vec::new(),
            params_seen: BTreeSet::new(),
        };
        let expr = parser.parse_expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Syntax {
                offset: parser.offset(),
                message: "unexpected trailing input".into(),
            });
        }
        let param_count = parser.params_seen.iter().next_back().copied().unwrap_or(0);
        for j in 1..=param_count {
            if !parser.params_seen.contains(&j) {
                return Err(Error::ParameterGap {
                    prefix: prefix.letter(),
                    missing: j,
                });
            }
        }
        let expr = simplify(expr);
        let derivs = (0..param_count)
            .map(|j| simplify(diff(&expr, j)))
            .collect();
        Ok(PredictorSpec {
            expr,
            derivs,
            covariates: parser.covariates,
            param_count,
            prefix,
        })
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Distinct covariates the formula references, in first-appearance order.
    pub fn covariate_names(&self) -> &[String] {
        &self.covariates
    }

    /// Number of distinct covariates referenced.
    pub fn covariate_count(&self) -> usize {
        self.covariates.len()
    }

    pub fn prefix(&self) -> ParamPrefix {
        self.prefix
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Simplified symbolic derivative with respect to parameter `j` (0-based).
    pub fn deriv(&self, j: usize) -> &Expr {
        &self.derivs[j]
    }

    /// A predictor is linear in its parameters when no derivative still
    /// references a parameter.
    pub fn is_linear_in_params(&self) -> bool {
        self.derivs.iter().all(|d| !d.contains_param())
    }

    /// Render any expression using this spec's covariate names and prefix.
    pub fn render(&self, e: &Expr) -> String {
        let mut out = String::new();
        write_expr(&mut out, e, &self.covariates, self.prefix);
        out
    }

    /// Printed form of the derivative with respect to parameter `j`.
    pub fn deriv_text(&self, j: usize) -> String {
        self.render(&self.derivs[j])
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::Model(format!(
                "formula `{self}` takes {} parameters, got {}",
                self.param_count,
                params.len()
            )));
        }
        Ok(())
    }

    /// Evaluate the predictor at one observation. `covs` must follow
    /// [`PredictorSpec::covariate_names`] order; `row` only labels errors.
    pub fn value_at(&self, params: &[f64], covs: &[f64], row: usize) -> Result<f64> {
        self.check_params(params)?;
        eval_expr(&self.expr, params, covs).map_err(|f| self.eval_error(f, row))
    }

    /// Evaluate all parameter derivatives at one observation.
    pub fn gradient_at(&self, params: &[f64], covs: &[f64], row: usize) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.derivs
            .iter()
            .map(|d| eval_expr(d, params, covs).map_err(|f| self.eval_error(f, row)))
            .collect()
    }

    fn eval_error(&self, failure: EvalFailure, row: usize) -> Error {
        Error::EvalDomain {
            row,
            expr: self.render(&failure.expr),
            message: failure.message.into(),
        }
    }

    /// Resolve covariates against a dataset for repeated evaluation.
    pub fn bind<'a>(&'a self, data: &'a Dataset) -> Result<BoundPredictor<'a>> {
        let columns = data.columns_for(self.covariates.as_slice())?;
        Ok(BoundPredictor {
            spec: self,
            columns,
            n: data.n(),
        })
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&self.expr))
    }
}

/// A predictor resolved against a dataset's columns.
pub struct BoundPredictor<'a> {
    spec: &'a PredictorSpec,
    columns: Vec<&'a [f64]>,
    n: usize,
}

impl BoundPredictor<'_> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> &PredictorSpec {
        self.spec
    }

    fn row(&self, t: usize, buffer: &mut Vec<f64>) {
        buffer.clear();
        buffer.extend(self.columns.iter().map(|col| col[t]));
    }

    /// Predictor values `eta_t` for all observations.
    pub fn eta(&self, params: &[f64]) -> Result<DVector<f64>> {
        self.spec.check_params(params)?;
        let mut buffer = Vec::with_capacity(self.columns.len());
        let mut out = DVector::zeros(self.n);
        for t in 0..self.n {
            self.row(t, &mut buffer);
            out[t] = eval_expr(&self.spec.expr, params, &buffer)
                .map_err(|f| self.spec.eval_error(f, t))?;
        }
        Ok(out)
    }

    /// Jacobian `d eta_t / d theta_j` as an `n x param_count` matrix.
    pub fn jacobian(&self, params: &[f64]) -> Result<DMatrix<f64>> {
        self.spec.check_params(params)?;
        let mut buffer = Vec::with_capacity(self.columns.len());
        let mut out = DMatrix::zeros(self.n, self.spec.param_count);
        for t in 0..self.n {
            self.row(t, &mut buffer);
            for (j, d) in self.spec.derivs.iter().enumerate() {
                out[(t, j)] = eval_expr(d, params, &buffer)
                    .map_err(|f| self.spec.eval_error(f, t))?;
            }
        }
        Ok(out)
    }
}
