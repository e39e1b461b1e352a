//! Bounded LTL properties and their three-valued evaluation on trace prefixes.
//!
//! Positions are indexed from 0. `G<=t f` requires `f` at positions `i..=i+t`
//! (t + 1 states), `F<=t f` at some position in that window, and `f U<=t g`
//! requires `g` at some `i+k`, `k <= t`, with `f` at every position before it.
//!
//! [`Formula::kleene_verdict`] gives a strong-Kleene verdict: positions past
//! the end of the prefix are unknown, and a connective is decided as soon as
//! its known operands force the result. Such verdicts are sound and monotone,
//! and every prefix with `horizon + 1` states is decided. Exact verdicts live
//! in [`crate::monitor`].
//!
//! Property files contain optional named definitions followed by the formula:
//!
//! ```text
//! psi := loc = 1;
//! X (psi & X (G<=4 !psi))
//! ```

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::expr::{self, Binding, BoolExpr, EvalError, Scope};
use crate::lexer::{Pos, SyntaxError, Tok, TokenStream};
use crate::model::{MdpModel, StateVector};

#[derive(Debug, Error)]
pub enum PropertyError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("at {pos}: `{op}` needs a step bound, e.g. `{op}<=10`")]
    Unbounded { op: &'static str, pos: Pos },
    #[error("at {pos}: `{name}` defined twice")]
    DuplicateDefinition { name: String, pos: Pos },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    Atom(BoolExpr),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Globally(u32, Box<Formula>),
    Finally(u32, Box<Formula>),
    Until(u32, Box<Formula>, Box<Formula>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    True,
    False,
    Undecided,
}

impl Verdict {
    fn from_bool(b: bool) -> Self {
        if b {
            Verdict::True
        } else {
            Verdict::False
        }
    }

    fn not(self) -> Self {
        match self {
            Verdict::True => Verdict::False,
            Verdict::False => Verdict::True,
            Verdict::Undecided => Verdict::Undecided,
        }
    }

    fn and(self, other: impl FnOnce() -> Result<Verdict, EvalError>) -> Result<Self, EvalError> {
        Ok(match self {
            Verdict::False => Verdict::False,
            Verdict::True => other()?,
            Verdict::Undecided => match other()? {
                Verdict::False => Verdict::False,
                _ => Verdict::Undecided,
            },
        })
    }

    fn or(self, other: impl FnOnce() -> Result<Verdict, EvalError>) -> Result<Self, EvalError> {
        Ok(match self {
            Verdict::True => Verdict::True,
            Verdict::False => other()?,
            Verdict::Undecided => match other()? {
                Verdict::True => Verdict::True,
                _ => Verdict::Undecided,
            },
        })
    }

    pub fn is_decided(self) -> bool {
        self != Verdict::Undecided
    }
}

impl Formula {
    pub fn tautology() -> Self {
        Formula::Atom(BoolExpr::Const(true))
    }

    /// Number of transitions after which the verdict is fixed.
    pub fn horizon(&self) -> u64 {
        match self {
            Formula::Atom(_) => 0,
            Formula::Not(f) => f.horizon(),
            Formula::And(l, r) | Formula::Or(l, r) => l.horizon().max(r.horizon()),
            Formula::Next(f) => 1 + f.horizon(),
            Formula::Globally(t, f) | Formula::Finally(t, f) => u64::from(*t) + f.horizon(),
            Formula::Until(t, l, r) => u64::from(*t) + l.horizon().max(r.horizon()),
        }
    }

    /// Strong-Kleene verdict at position 0 of `prefix`: positions past the end
    /// are unknown. Sound, but may stay undecided on prefixes whose outcome is
    /// already forced (e.g. `F<=1 a | G<=1 !a`); see [`crate::monitor::Monitor`]
    /// for exact verdicts.
    pub fn kleene_verdict(&self, prefix: &[StateVector]) -> Result<Verdict, EvalError> {
        self.verdict_at(prefix, 0)
    }

    fn verdict_at(&self, prefix: &[StateVector], i: usize) -> Result<Verdict, EvalError> {
        match self {
            Formula::Atom(e) => match prefix.get(i) {
                Some(s) => Ok(Verdict::from_bool(e.eval(s.values())?)),
                None => Ok(Verdict::Undecided),
            },
            Formula::Not(f) => Ok(f.verdict_at(prefix, i)?.not()),
            Formula::And(l, r) => l.verdict_at(prefix, i)?.and(|| r.verdict_at(prefix, i)),
            Formula::Or(l, r) => l.verdict_at(prefix, i)?.or(|| r.verdict_at(prefix, i)),
            Formula::Next(f) => f.verdict_at(prefix, i + 1),
            Formula::Globally(t, f) => {
                let mut acc = Verdict::True;
                for k in 0..=*t as usize {
                    acc = acc.and(|| f.verdict_at(prefix, i + k))?;
                    if acc == Verdict::False {
                        break;
                    }
                }
                Ok(acc)
            }
            Formula::Finally(t, f) => {
                let mut acc = Verdict::False;
                for k in 0..=*t as usize {
                    acc = acc.or(|| f.verdict_at(prefix, i + k))?;
                    if acc == Verdict::True {
                        break;
                    }
                }
                Ok(acc)
            }
            Formula::Until(t, l, r) => {
                // OR over k of (r at i+k AND l at i..i+k-1)
                let mut acc = Verdict::False;
                let mut guard = Verdict::True;
                for k in 0..=*t as usize {
                    let here = guard.and(|| r.verdict_at(prefix, i + k))?;
                    acc = acc.or(|| Ok(here))?;
                    if acc == Verdict::True {
                        break;
                    }
                    guard = guard.and(|| l.verdict_at(prefix, i + k))?;
                    if guard == Verdict::False {
                        break;
                    }
                }
                Ok(acc)
            }
        }
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        FormulaPrinter { formula: self, names }
    }
}

struct FormulaPrinter<'a> {
    formula: &'a Formula,
    names: &'a [String],
}

impl<'a> fmt::Display for FormulaPrinter<'a> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |g: &'a Formula| FormulaPrinter {
            formula: g,
            names: self.names,
        };
        match self.formula {
            Formula::Atom(e) => write!(f, "({})", e.display(self.names)),
            Formula::Not(g) => write!(f, "!{}", sub(g)),
            Formula::And(l, r) => write!(f, "({} & {})", sub(l), sub(r)),
            Formula::Or(l, r) => write!(f, "({} | {})", sub(l), sub(r)),
            Formula::Next(g) => write!(f, "X {}", sub(g)),
            Formula::Globally(t, g) => write!(f, "G<={t} {}", sub(g)),
            Formula::Finally(t, g) => write!(f, "F<={t} {}", sub(g)),
            Formula::Until(t, l, r) => write!(f, "({} U<={t} {})", sub(l), sub(r)),
        }
    }
}

struct PropertyScope<'a> {
    model: &'a MdpModel,
}

impl Scope for PropertyScope<'_> {
    fn resolve(&self, name: &str) -> Option<Binding> {
        self.model.variable_index(name).map(Binding::Var)
    }
}

const TEMPORAL: &[&str] = &["X", "G", "F", "U"];

struct FormulaParser<'a> {
    scope: PropertyScope<'a>,
    definitions: HashMap<String, Formula>,
}

/// Parse a property file against the variables of `model`.
pub fn parse_property(text: &str, model: &MdpModel) -> Result<Formula, PropertyError> {
    let mut ts = TokenStream::new(text)?;
    let mut parser = FormulaParser {
        scope: PropertyScope { model },
        definitions: HashMap::new(),
    };

    while matches!(ts.peek(), Tok::Ident(_)) && ts.peek_at(1) == &Tok::Define {
        let (name, pos) = ts.expect_ident()?;
        if TEMPORAL.contains(&name.as_str()) || name == "true" || name == "false" {
            return Err(SyntaxError::new(pos, format!("`{name}` is a reserved word")).into());
        }
        if parser.definitions.contains_key(&name) || model.variable_index(&name).is_some() {
            return Err(PropertyError::DuplicateDefinition { name, pos });
        }
        ts.next();
        let body = parser.formula(&mut ts)?;
        ts.expect(&Tok::Semi)?;
        parser.definitions.insert(name, body);
    }

    let formula = parser.formula(&mut ts)?;
    ts.eat(&Tok::Semi);
    if !ts.at(&Tok::Eof) {
        return Err(ts.unexpected("end of property").into());
    }
    Ok(formula)
}

impl FormulaParser<'_> {
    fn formula(&self, ts: &mut TokenStream) -> Result<Formula, PropertyError> {
        let mut lhs = self.conjunction(ts)?;
        while ts.eat(&Tok::Or) {
            let rhs = self.conjunction(ts)?;
            lhs = Formula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunction(&self, ts: &mut TokenStream) -> Result<Formula, PropertyError> {
        let mut lhs = self.until(ts)?;
        while ts.eat(&Tok::And) {
            let rhs = self.until(ts)?;
            lhs = Formula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn until(&self, ts: &mut TokenStream) -> Result<Formula, PropertyError> {
        let lhs = self.unary(ts)?;
        if ts.at_keyword("U") {
            let pos = ts.pos();
            ts.next();
            let bound = self.bound(ts, "U", pos)?;
            let rhs = self.until(ts)?;
            return Ok(Formula::Until(bound, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn bound(&self, ts: &mut TokenStream, op: &'static str, pos: Pos) -> Result<u32, PropertyError> {
        if !ts.eat(&Tok::Le) {
            return Err(PropertyError::Unbounded { op, pos });
        }
        let at = ts.pos();
        match ts.next().tok {
            Tok::Number(text) => text
                .parse::<u32>()
                .map_err(|_| SyntaxError::new(at, format!("bad step bound `{text}`")).into()),
            other => Err(SyntaxError::new(at, format!("expected step bound, found {other}")).into()),
        }
    }

    fn unary(&self, ts: &mut TokenStream) -> Result<Formula, PropertyError> {
        let pos = ts.pos();
        if ts.eat(&Tok::Not) {
            return Ok(Formula::Not(Box::new(self.unary(ts)?)));
        }
        if ts.at_keyword("X") {
            ts.next();
            return Ok(Formula::Next(Box::new(self.unary(ts)?)));
        }
        if ts.at_keyword("G") {
            ts.next();
            let t = self.bound(ts, "G", pos)?;
            return Ok(Formula::Globally(t, Box::new(self.unary(ts)?)));
        }
        if ts.at_keyword("F") {
            ts.next();
            let t = self.bound(ts, "F", pos)?;
            return Ok(Formula::Finally(t, Box::new(self.unary(ts)?)));
        }
        self.primary(ts)
    }

    fn primary(&self, ts: &mut TokenStream) -> Result<Formula, PropertyError> {
        if let Tok::Ident(name) = ts.peek() {
            if let Some(def) = self.definitions.get(name) {
                ts.next();
                return Ok(def.clone());
            }
            if name == "true" || name == "false" {
                let b = name == "true";
                ts.next();
                return Ok(Formula::Atom(BoolExpr::Const(b)));
            }
        }
        if ts.at(&Tok::LParen) {
            // either an arithmetic comparison like `(x+1) > 2` or a grouped formula
            let mark = ts.mark();
            let cmp_err = match expr::parse_comparison(ts, &self.scope) {
                Ok(e) => return Ok(Formula::Atom(e)),
                Err(e) => e,
            };
            ts.reset(mark);
            ts.next();
            return match self.formula(ts) {
                Ok(f) => {
                    ts.expect(&Tok::RParen)?;
                    Ok(f)
                }
                Err(PropertyError::Syntax(group_err)) => Err(expr::further(cmp_err, group_err).into()),
                Err(other) => Err(other),
            };
        }
        Ok(Formula::Atom(expr::parse_comparison(ts, &self.scope)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn bounce() -> MdpModel {
        parse_model(include_str!("../models/bounce.mdp")).unwrap()
    }

    fn states(locs: &[i64]) -> Vec<StateVector> {
        locs.iter().map(|&l| StateVector::new(vec![l])).collect()
    }

    fn bounce_property(model: &MdpModel) -> Formula {
        parse_property(include_str!("../models/bounce.prop"), model).unwrap()
    }

    #[test]
    fn bounce_property_structure() {
        let model = bounce();
        let psi = || Formula::Atom(parse_property("loc = 1", &model).map(|f| match f {
            Formula::Atom(e) => e,
            _ => unreachable!(),
        }).unwrap());
        let expected = Formula::Next(Box::new(Formula::And(
            Box::new(psi()),
            Box::new(Formula::Next(Box::new(Formula::Globally(
                4,
                Box::new(Formula::Not(Box::new(psi()))),
            )))),
        )));
        assert_eq!(bounce_property(&model), expected);
    }

    #[test]
    fn zero_bound_globally_is_atomic_now() {
        let model = parse_model("var x : [0..1] init 0;").unwrap();
        let g = parse_property("G<=0 (x=0)", &model).unwrap();
        let atom = parse_property("x=0", &model).unwrap();
        assert_eq!(g.horizon(), 0);
        for v in [0, 1] {
            let p = states(&[v]);
            assert_eq!(g.kleene_verdict(&p).unwrap(), atom.kleene_verdict(&p).unwrap());
        }
    }

    #[test]
    fn unbounded_operators_rejected() {
        let model = parse_model("var x : [0..1] init 0;").unwrap();
        for text in ["G (x=0)", "F x=1", "x=0 U x=1"] {
            assert!(
                matches!(parse_property(text, &model), Err(PropertyError::Unbounded { .. })),
                "{text}"
            );
        }
    }

    #[test]
    fn horizons() {
        let model = bounce();
        assert_eq!(parse_property("loc = 0", &model).unwrap().horizon(), 0);
        assert_eq!(bounce_property(&model).horizon(), 6);
        assert_eq!(parse_property("F<=10 loc = 1", &model).unwrap().horizon(), 10);
        assert_eq!(parse_property("X loc=0 U<=3 X X loc=1", &model).unwrap().horizon(), 5);
    }

    #[test]
    fn bounce_verdicts() {
        let model = bounce();
        let phi = bounce_property(&model);
        assert_eq!(phi.kleene_verdict(&states(&[0, 1, 0, 0, 0, 0, 0])).unwrap(), Verdict::True);
        assert_eq!(phi.kleene_verdict(&states(&[0, 0])).unwrap(), Verdict::False);
        assert_eq!(phi.kleene_verdict(&states(&[0, 1, 0, 0])).unwrap(), Verdict::Undecided);
        assert_eq!(phi.kleene_verdict(&states(&[0, 1, 0, 1])).unwrap(), Verdict::False);
    }

    #[test]
    fn decided_verdicts_survive_extension() {
        let model = bounce();
        let phi = bounce_property(&model);
        let trace = states(&[0, 1, 0, 0, 0, 0, 0, 1, 1, 0]);
        assert_eq!(phi.kleene_verdict(&trace[..7]).unwrap(), Verdict::True);
        for len in 7..=trace.len() {
            assert_eq!(phi.kleene_verdict(&trace[..len]).unwrap(), Verdict::True);
        }
    }

    #[test]
    fn until_semantics() {
        let model = parse_model("var x : [0..3] init 0;").unwrap();
        let f = parse_property("x < 2 U<=2 x = 3", &model).unwrap();
        assert_eq!(f.kleene_verdict(&states(&[0, 1, 3])).unwrap(), Verdict::True);
        assert_eq!(f.kleene_verdict(&states(&[0, 2, 3])).unwrap(), Verdict::False);
        assert_eq!(f.kleene_verdict(&states(&[0, 1, 1])).unwrap(), Verdict::False);
        assert_eq!(f.kleene_verdict(&states(&[3])).unwrap(), Verdict::True);
        assert_eq!(f.kleene_verdict(&states(&[0, 1])).unwrap(), Verdict::Undecided);
    }

    #[test]
    fn definitions_and_grouping() {
        let model = parse_model("var x : [0..3] init 0;").unwrap();
        let f = parse_property("low := x <= 1;\nhigh := !low;\n(x+1) > 1 | (low & X high)", &model).unwrap();
        assert_eq!(f.kleene_verdict(&states(&[0, 2])).unwrap(), Verdict::True);
        assert_eq!(f.kleene_verdict(&states(&[0, 0])).unwrap(), Verdict::False);
        assert!(matches!(
            parse_property("a := x=1; a := x=2; a", &model),
            Err(PropertyError::DuplicateDefinition { .. })
        ));
        assert!(parse_property("y = 1", &model).is_err());
    }

    #[test]
    fn printed_formula_reparses() {
        let model = bounce();
        let phi = parse_property("X (loc=1 U<=2 !(loc=0)) | F<=3 (G<=1 loc = 0 & true)", &model).unwrap();
        let printed = phi.display(model.variable_names()).to_string();
        assert_eq!(parse_property(&printed, &model).unwrap(), phi, "{printed}");
    }
}
