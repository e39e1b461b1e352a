//! Integer and boolean expressions over model variables.
//!
//! Guards, updates and atomic propositions all share this language. Expressions
//! are typed at parse time, so evaluation never has to check types.

use std::fmt;

use thiserror::Error;

use crate::lexer::{SyntaxError, Tok, TokenStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    fn holds(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum IntExpr {
    Const(i64),
    /// Index into the state vector.
    Var(usize),
    Neg(Box<IntExpr>),
    Binary(ArithOp, Box<IntExpr>, Box<IntExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Const(bool),
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Cmp(CmpOp, IntExpr, IntExpr),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
}

impl IntExpr {
    pub fn eval(&self, values: &[i64]) -> Result<i64, EvalError> {
        match self {
            IntExpr::Const(c) => Ok(*c),
            IntExpr::Var(i) => Ok(values[*i]),
            IntExpr::Neg(e) => e.eval(values)?.checked_neg().ok_or(EvalError::Overflow),
            IntExpr::Binary(op, l, r) => {
                let (a, b) = (l.eval(values)?, r.eval(values)?);
                match op {
                    ArithOp::Add => a.checked_add(b).ok_or(EvalError::Overflow),
                    ArithOp::Sub => a.checked_sub(b).ok_or(EvalError::Overflow),
                    ArithOp::Mul => a.checked_mul(b).ok_or(EvalError::Overflow),
                    ArithOp::Div if b == 0 => Err(EvalError::DivisionByZero),
                    // truncating division, as in C and PRISM's `floor` on positives
                    ArithOp::Div => a.checked_div(b).ok_or(EvalError::Overflow),
                }
            }
        }
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        Printer(move |f: &mut fmt::Formatter<'_>| self.write(f, names))
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, names: &[String]) -> fmt::Result {
        match self {
            IntExpr::Const(c) if *c < 0 => write!(f, "({c})"),
            IntExpr::Const(c) => write!(f, "{c}"),
            IntExpr::Var(i) => f.write_str(&names[*i]),
            IntExpr::Neg(e) => {
                f.write_str("-(")?;
                e.write(f, names)?;
                f.write_str(")")
            }
            IntExpr::Binary(op, l, r) => {
                let sym = match op {
                    ArithOp::Add => "+",
                    ArithOp::Sub => "-",
                    ArithOp::Mul => "*",
                    ArithOp::Div => "/",
                };
                f.write_str("(")?;
                l.write(f, names)?;
                write!(f, " {sym} ")?;
                r.write(f, names)?;
                f.write_str(")")
            }
        }
    }
}

impl BoolExpr {
    pub fn eval(&self, values: &[i64]) -> Result<bool, EvalError> {
        Ok(match self {
            BoolExpr::Const(b) => *b,
            BoolExpr::Not(e) => !e.eval(values)?,
            BoolExpr::And(l, r) => l.eval(values)? && r.eval(values)?,
            BoolExpr::Or(l, r) => l.eval(values)? || r.eval(values)?,
            BoolExpr::Cmp(op, l, r) => op.holds(l.eval(values)?, r.eval(values)?),
        })
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        Printer(move |f: &mut fmt::Formatter<'_>| self.write(f, names))
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, names: &[String]) -> fmt::Result {
        match self {
            BoolExpr::Const(b) => write!(f, "{b}"),
            BoolExpr::Not(e) => {
                f.write_str("!(")?;
                e.write(f, names)?;
                f.write_str(")")
            }
            BoolExpr::And(l, r) | BoolExpr::Or(l, r) => {
                let sym = if matches!(self, BoolExpr::And(..)) { "&" } else { "|" };
                f.write_str("(")?;
                l.write(f, names)?;
                write!(f, " {sym} ")?;
                r.write(f, names)?;
                f.write_str(")")
            }
            BoolExpr::Cmp(op, l, r) => {
                l.write(f, names)?;
                write!(f, " {} ", op.symbol())?;
                r.write(f, names)
            }
        }
    }
}

struct Printer<F>(F);

impl<F: Fn(&mut fmt::Formatter<'_>) -> fmt::Result> fmt::Display for Printer<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        (self.0)(f)
    }
}

/// What an identifier refers to inside an expression.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Binding {
    Var(usize),
    Const(f64),
}

pub trait Scope {
    fn resolve(&self, name: &str) -> Option<Binding>;
}

pub fn parse_int_expr(ts: &mut TokenStream, scope: &dyn Scope) -> Result<IntExpr, SyntaxError> {
    let mut lhs = parse_term(ts, scope)?;
    loop {
        let op = match ts.peek() {
            Tok::Plus => ArithOp::Add,
            Tok::Minus => ArithOp::Sub,
            _ => return Ok(lhs),
        };
        ts.next();
        let rhs = parse_term(ts, scope)?;
        lhs = IntExpr::Binary(op, Box::new(lhs), Box::new(rhs));
    }
}

fn parse_term(ts: &mut TokenStream, scope: &dyn Scope) -> Result<IntExpr, SyntaxError> {
    let mut lhs = parse_factor(ts, scope)?;
    loop {
        let op = match ts.peek() {
            Tok::Star => ArithOp::Mul,
            Tok::Slash => ArithOp::Div,
            _ => return Ok(lhs),
        };
        ts.next();
        let rhs = parse_factor(ts, scope)?;
        lhs = IntExpr::Binary(op, Box::new(lhs), Box::new(rhs));
    }
}

fn parse_factor(ts: &mut TokenStream, scope: &dyn Scope) -> Result<IntExpr, SyntaxError> {
    let pos = ts.pos();
    match ts.peek().clone() {
        Tok::Minus => {
            ts.next();
            let inner = parse_factor(ts, scope)?;
            Ok(match inner {
                IntExpr::Const(c) => IntExpr::Const(
                    c.checked_neg()
                        .ok_or_else(|| SyntaxError::new(pos, "integer literal out of range"))?,
                ),
                other => IntExpr::Neg(Box::new(other)),
            })
        }
        Tok::Number(text) => {
            ts.next();
            text.parse::<i64>()
                .map(IntExpr::Const)
                .map_err(|_| SyntaxError::new(pos, format!("expected an integer, found `{text}`")))
        }
        Tok::Ident(name) => {
            ts.next();
            match scope.resolve(&name) {
                Some(Binding::Var(i)) => Ok(IntExpr::Var(i)),
                Some(Binding::Const(v)) => const_to_int(v)
                    .map(IntExpr::Const)
                    .ok_or_else(|| SyntaxError::new(pos, format!("constant `{name}` is not an integer"))),
                None => Err(SyntaxError::new(pos, format!("unknown identifier `{name}`"))),
            }
        }
        Tok::LParen => {
            ts.next();
            let e = parse_int_expr(ts, scope)?;
            ts.expect(&Tok::RParen)?;
            Ok(e)
        }
        _ => Err(ts.unexpected("integer expression")),
    }
}

pub(crate) fn const_to_int(v: f64) -> Option<i64> {
    (v.fract() == 0.0 && v.abs() < 9.0e18).then_some(v as i64)
}

pub fn parse_bool_expr(ts: &mut TokenStream, scope: &dyn Scope) -> Result<BoolExpr, SyntaxError> {
    let mut lhs = parse_conjunction(ts, scope)?;
    while ts.eat(&Tok::Or) {
        let rhs = parse_conjunction(ts, scope)?;
        lhs = BoolExpr::Or(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_conjunction(ts: &mut TokenStream, scope: &dyn Scope) -> Result<BoolExpr, SyntaxError> {
    let mut lhs = parse_negation(ts, scope)?;
    while ts.eat(&Tok::And) {
        let rhs = parse_negation(ts, scope)?;
        lhs = BoolExpr::And(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_negation(ts: &mut TokenStream, scope: &dyn Scope) -> Result<BoolExpr, SyntaxError> {
    if ts.eat(&Tok::Not) {
        return Ok(BoolExpr::Not(Box::new(parse_negation(ts, scope)?)));
    }
    if ts.at_keyword("true") {
        ts.next();
        return Ok(BoolExpr::Const(true));
    }
    if ts.at_keyword("false") {
        ts.next();
        return Ok(BoolExpr::Const(false));
    }
    if ts.at(&Tok::LParen) {
        // `(x+1) > 2` and `(x = 1 | y = 2)` both start with a parenthesis;
        // try the comparison first and fall back to a grouped boolean.
        let mark = ts.mark();
        match parse_comparison(ts, scope) {
            Ok(e) => return Ok(e),
            Err(cmp_err) => {
                ts.reset(mark);
                ts.next();
                let inner = parse_bool_expr(ts, scope);
                return match inner {
                    Ok(e) => {
                        ts.expect(&Tok::RParen)?;
                        Ok(e)
                    }
                    Err(group_err) => Err(further(cmp_err, group_err)),
                };
            }
        }
    }
    parse_comparison(ts, scope)
}

pub fn parse_comparison(ts: &mut TokenStream, scope: &dyn Scope) -> Result<BoolExpr, SyntaxError> {
    let lhs = parse_int_expr(ts, scope)?;
    let op = match ts.peek() {
        Tok::Lt => CmpOp::Lt,
        Tok::Le => CmpOp::Le,
        Tok::Eq => CmpOp::Eq,
        Tok::Ne => CmpOp::Ne,
        Tok::Ge => CmpOp::Ge,
        Tok::Gt => CmpOp::Gt,
        _ => return Err(ts.unexpected("comparison operator")),
    };
    ts.next();
    let rhs = parse_int_expr(ts, scope)?;
    Ok(BoolExpr::Cmp(op, lhs, rhs))
}

/// Of two failed alternatives, report the one that consumed more input.
pub(crate) fn further(a: SyntaxError, b: SyntaxError) -> SyntaxError {
    if (b.pos.line, b.pos.column) >= (a.pos.line, a.pos.column) {
        b
    } else {
        a
    }
}

/// Real-valued constant expression (probabilities, `const` definitions).
pub fn parse_real_expr(ts: &mut TokenStream, scope: &dyn Scope) -> Result<f64, SyntaxError> {
    let mut acc = parse_real_term(ts, scope)?;
    loop {
        match ts.peek() {
            Tok::Plus => {
                ts.next();
                acc += parse_real_term(ts, scope)?;
            }
            Tok::Minus => {
                ts.next();
                acc -= parse_real_term(ts, scope)?;
            }
            _ => return Ok(acc),
        }
    }
}

fn parse_real_term(ts: &mut TokenStream, scope: &dyn Scope) -> Result<f64, SyntaxError> {
    let mut acc = parse_real_factor(ts, scope)?;
    loop {
        match ts.peek() {
            Tok::Star => {
                ts.next();
                acc *= parse_real_factor(ts, scope)?;
            }
            Tok::Slash => {
                let pos = ts.pos();
                ts.next();
                let d = parse_real_factor(ts, scope)?;
                if d == 0.0 {
                    return Err(SyntaxError::new(pos, "division by zero in constant expression"));
                }
                acc /= d;
            }
            _ => return Ok(acc),
        }
    }
}

fn parse_real_factor(ts: &mut TokenStream, scope: &dyn Scope) -> Result<f64, SyntaxError> {
    let pos = ts.pos();
    match ts.peek().clone() {
        Tok::Minus => {
            ts.next();
            Ok(-parse_real_factor(ts, scope)?)
        }
        Tok::Number(text) => {
            ts.next();
            text.parse::<f64>()
                .map_err(|_| SyntaxError::new(pos, format!("malformed number `{text}`")))
        }
        Tok::Ident(name) => {
            ts.next();
            match scope.resolve(&name) {
                Some(Binding::Const(v)) => Ok(v),
                Some(Binding::Var(_)) => Err(SyntaxError::new(
                    pos,
                    format!("variable `{name}` cannot appear in a constant expression"),
                )),
                None => Err(SyntaxError::new(pos, format!("unknown constant `{name}`"))),
            }
        }
        Tok::LParen => {
            ts.next();
            let v = parse_real_expr(ts, scope)?;
            ts.expect(&Tok::RParen)?;
            Ok(v)
        }
        _ => Err(ts.unexpected("number")),
    }
}
