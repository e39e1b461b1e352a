//! MDP data model and the guarded-command modelling language.
//!
//! A model file declares bounded integer variables and guarded commands:
//!
//! ```text
//! const p1 = 0.9;
//! var loc : [0..1] init 0;
//! [a1] loc = 0 -> p1 : (loc' = 0) + 1 - p1 : (loc' = 1);
//! [a0] loc = 1 -> 1 : (loc' = 0);
//! ```
//!
//! Updates are simultaneous: every right-hand side reads the source state.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::expr::{self, Binding, BoolExpr, EvalError, IntExpr, Scope};
use crate::lexer::{Pos, SyntaxError, Tok, TokenStream};

/// Allowed deviation of a command's probabilities from 1.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("at {pos}: probabilities of command `{action}` sum to {sum}, not 1")]
    ProbabilitySum { action: String, sum: f64, pos: Pos },
    #[error("at {pos}: probability {value} of command `{action}` is outside (0, 1]")]
    ProbabilityRange { action: String, value: f64, pos: Pos },
    #[error("at {pos}: variable `{name}` declared twice")]
    DuplicateVariable { name: String, pos: Pos },
    #[error("at {pos}: variable `{name}` updated twice in one branch")]
    DuplicateUpdate { name: String, pos: Pos },
    #[error("at {pos}: initial value {init} of `{name}` is outside [{lower}..{upper}]")]
    InitOutOfRange {
        name: String,
        init: i64,
        lower: i64,
        upper: i64,
        pos: Pos,
    },
    #[error("at {pos}: empty range [{lower}..{upper}] for `{name}`")]
    EmptyRange {
        name: String,
        lower: i64,
        upper: i64,
        pos: Pos,
    },
    #[error("model declares no variables")]
    NoVariables,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("update sets `{variable}` to {value}, outside [{lower}..{upper}]")]
    RangeViolation {
        variable: String,
        value: i64,
        lower: i64,
        upper: i64,
    },
    #[error("evaluating {context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },
    #[error("command {command} / choice {choice} does not exist")]
    NoSuchChoice { command: usize, choice: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariableDecl {
    pub name: String,
    pub lower: i64,
    pub upper: i64,
    pub init: i64,
    pub width_bits: u32,
}

impl VariableDecl {
    pub fn new(name: impl Into<String>, lower: i64, upper: i64, init: i64) -> Self {
        VariableDecl {
            name: name.into(),
            lower,
            upper,
            init,
            width_bits: width_for_span(upper.abs_diff(lower)),
        }
    }

    pub fn contains(&self, value: i64) -> bool {
        (self.lower..=self.upper).contains(&value)
    }
}

/// Minimal number of bits holding `0..=span`, never less than 1.
pub fn width_for_span(span: u64) -> u32 {
    (u64::BITS - span.leading_zeros()).max(1)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateVector(Vec<i64>);

impl StateVector {
    pub fn new(values: Vec<i64>) -> Self {
        StateVector(values)
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub(crate) fn values_mut(&mut self) -> &mut [i64] {
        &mut self.0
    }
}

impl From<Vec<i64>> for StateVector {
    fn from(values: Vec<i64>) -> Self {
        StateVector(values)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilisticChoice {
    pub probability: f64,
    /// (variable index, new value expression), in source order.
    pub updates: Vec<(usize, IntExpr)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuardedCommand {
    pub action: String,
    pub guard: BoolExpr,
    pub choices: Vec<ProbabilisticChoice>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdpModel {
    variables: Vec<VariableDecl>,
    commands: Vec<GuardedCommand>,
    initial_state: StateVector,
    names: Vec<String>,
}

impl MdpModel {
    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn commands(&self) -> &[GuardedCommand] {
        &self.commands
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.initial_state
    }

    pub fn variable_names(&self) -> &[String] {
        &self.names
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Indices of commands whose guard holds in `state`, in declaration order.
    pub fn enabled_commands(&self, state: &StateVector) -> Result<Vec<usize>, StepError> {
        let mut out = Vec::new();
        self.enabled_into(state.values(), &mut out)?;
        Ok(out)
    }

    pub(crate) fn enabled_into(&self, values: &[i64], out: &mut Vec<usize>) -> Result<(), StepError> {
        out.clear();
        for (i, cmd) in self.commands.iter().enumerate() {
            let holds = cmd.guard.eval(values).map_err(|source| StepError::Eval {
                context: format!("guard of `{}`", cmd.action),
                source,
            })?;
            if holds {
                out.push(i);
            }
        }
        Ok(())
    }

    pub fn apply_choice(
        &self,
        state: &StateVector,
        command: usize,
        choice: usize,
    ) -> Result<StateVector, StepError> {
        let mut next = state.clone();
        self.apply_into(state.values(), command, choice, &mut next.0)?;
        Ok(next)
    }

    /// Writes the successor into `out`; `out` must start as a copy of `values`.
    pub(crate) fn apply_into(
        &self,
        values: &[i64],
        command: usize,
        choice: usize,
        out: &mut [i64],
    ) -> Result<(), StepError> {
        let cmd = self
            .commands
            .get(command)
            .ok_or(StepError::NoSuchChoice { command, choice })?;
        let branch = cmd
            .choices
            .get(choice)
            .ok_or(StepError::NoSuchChoice { command, choice })?;
        for (var, rhs) in &branch.updates {
            let value = rhs.eval(values).map_err(|source| StepError::Eval {
                context: format!("update of `{}` in `{}`", self.names[*var], cmd.action),
                source,
            })?;
            let decl = &self.variables[*var];
            if !decl.contains(value) {
                return Err(StepError::RangeViolation {
                    variable: decl.name.clone(),
                    value,
                    lower: decl.lower,
                    upper: decl.upper,
                });
            }
            out[*var] = value;
        }
        Ok(())
    }

    /// True when every value lies inside its declared range.
    pub fn is_valid_state(&self, state: &StateVector) -> bool {
        state.0.len() == self.variables.len()
            && self.variables.iter().zip(&state.0).all(|(d, v)| d.contains(*v))
    }
}

impl fmt::Display for MdpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.variables {
            writeln!(f, "var {} : [{}..{}] init {};", v.name, v.lower, v.upper, v.init)?;
        }
        for cmd in &self.commands {
            write!(f, "[{}] {} ->", cmd.action, cmd.guard.display(&self.names))?;
            for (i, choice) in cmd.choices.iter().enumerate() {
                if i > 0 {
                    f.write_str(" +")?;
                }
                write!(f, " {} : ", choice.probability)?;
                if choice.updates.is_empty() {
                    f.write_str("true")?;
                }
                for (j, (var, rhs)) in choice.updates.iter().enumerate() {
                    if j > 0 {
                        f.write_str(" & ")?;
                    }
                    write!(f, "({}' = {})", self.names[*var], rhs.display(&self.names))?;
                }
            }
            writeln!(f, ";")?;
        }
        Ok(())
    }
}

struct ModelScope<'a> {
    consts: &'a HashMap<String, f64>,
    vars: &'a [VariableDecl],
}

impl Scope for ModelScope<'_> {
    fn resolve(&self, name: &str) -> Option<Binding> {
        if let Some(i) = self.vars.iter().position(|v| v.name == name) {
            return Some(Binding::Var(i));
        }
        self.consts.get(name).copied().map(Binding::Const)
    }
}

const KEYWORDS: &[&str] = &["var", "const", "init", "true", "false"];

pub fn parse_model(text: &str) -> Result<MdpModel, ModelError> {
    let mut ts = TokenStream::new(text)?;
    let mut consts: HashMap<String, f64> = HashMap::new();
    let mut variables: Vec<VariableDecl> = Vec::new();
    let mut commands = Vec::new();

    loop {
        if ts.at(&Tok::Eof) {
            break;
        }
        if ts.at_keyword("const") {
            ts.next();
            let (name, pos) = declared_name(&mut ts)?;
            if consts.contains_key(&name) || variables.iter().any(|v| v.name == name) {
                return Err(SyntaxError::new(pos, format!("`{name}` already defined")).into());
            }
            ts.expect(&Tok::Eq)?;
            let value = expr::parse_real_expr(&mut ts, &ModelScope { consts: &consts, vars: &[] })?;
            ts.expect(&Tok::Semi)?;
            consts.insert(name, value);
        } else if ts.at_keyword("var") {
            ts.next();
            let decl = parse_variable(&mut ts, &consts, &variables)?;
            variables.push(decl);
        } else if ts.at(&Tok::LBracket) {
            let scope = ModelScope {
                consts: &consts,
                vars: &variables,
            };
            commands.push(parse_command(&mut ts, &scope)?);
        } else {
            return Err(ts.unexpected("`const`, `var` or `[`").into());
        }
    }

    if variables.is_empty() {
        return Err(ModelError::NoVariables);
    }
    let initial_state = StateVector(variables.iter().map(|v| v.init).collect());
    let names = variables.iter().map(|v| v.name.clone()).collect();
    Ok(MdpModel {
        variables,
        commands,
        initial_state,
        names,
    })
}

fn declared_name(ts: &mut TokenStream) -> Result<(String, Pos), SyntaxError> {
    let (name, pos) = ts.expect_ident()?;
    if KEYWORDS.contains(&name.as_str()) {
        return Err(SyntaxError::new(pos, format!("`{name}` is a reserved word")));
    }
    Ok((name, pos))
}

fn parse_bound(ts: &mut TokenStream, consts: &HashMap<String, f64>) -> Result<i64, SyntaxError> {
    let pos = ts.pos();
    let scope = ModelScope { consts, vars: &[] };
    let v = expr::parse_real_expr(ts, &scope)?;
    expr::const_to_int(v).ok_or_else(|| SyntaxError::new(pos, format!("expected an integer, got {v}")))
}

fn parse_variable(
    ts: &mut TokenStream,
    consts: &HashMap<String, f64>,
    existing: &[VariableDecl],
) -> Result<VariableDecl, ModelError> {
    let (name, pos) = declared_name(ts)?;
    if existing.iter().any(|v| v.name == name) {
        return Err(ModelError::DuplicateVariable { name, pos });
    }
    if consts.contains_key(&name) {
        return Err(SyntaxError::new(pos, format!("`{name}` already defined as a constant")).into());
    }
    ts.expect(&Tok::Colon)?;
    ts.expect(&Tok::LBracket)?;
    let lower = parse_bound(ts, consts)?;
    ts.expect(&Tok::DotDot)?;
    let upper = parse_bound(ts, consts)?;
    ts.expect(&Tok::RBracket)?;
    if lower > upper {
        return Err(ModelError::EmptyRange {
            name,
            lower,
            upper,
            pos,
        });
    }
    let init = if ts.at_keyword("init") {
        ts.next();
        parse_bound(ts, consts)?
    } else {
        lower
    };
    ts.expect(&Tok::Semi)?;
    if !(lower..=upper).contains(&init) {
        return Err(ModelError::InitOutOfRange {
            name,
            init,
            lower,
            upper,
            pos,
        });
    }
    Ok(VariableDecl::new(name, lower, upper, init))
}

fn parse_command(ts: &mut TokenStream, scope: &ModelScope<'_>) -> Result<GuardedCommand, ModelError> {
    let pos = ts.expect(&Tok::LBracket)?;
    let action = match ts.peek() {
        Tok::RBracket => String::new(),
        _ => ts.expect_ident()?.0,
    };
    ts.expect(&Tok::RBracket)?;
    let guard = expr::parse_bool_expr(ts, scope)?;
    ts.expect(&Tok::Arrow)?;

    let mut choices = Vec::new();
    loop {
        let choice_pos = ts.pos();
        // `-> (x'=1);` is shorthand for probability 1
        let probability = if is_update_start(ts) {
            1.0
        } else {
            let p = expr::parse_real_expr(ts, scope)?;
            ts.expect(&Tok::Colon)?;
            p
        };
        if !(probability > 0.0 && probability <= 1.0 + PROBABILITY_TOLERANCE) {
            return Err(ModelError::ProbabilityRange {
                action,
                value: probability,
                pos: choice_pos,
            });
        }
        let updates = parse_updates(ts, scope)?;
        choices.push(ProbabilisticChoice { probability, updates });
        if !ts.eat(&Tok::Plus) {
            break;
        }
    }
    ts.expect(&Tok::Semi)?;

    let sum: f64 = choices.iter().map(|c| c.probability).sum();
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(ModelError::ProbabilitySum { action, sum, pos });
    }
    Ok(GuardedCommand {
        action,
        guard,
        choices,
    })
}

fn is_update_start(ts: &TokenStream) -> bool {
    ts.at_keyword("true")
        || (ts.at(&Tok::LParen) && matches!(ts.peek_at(1), Tok::Ident(_)) && ts.peek_at(2) == &Tok::Prime)
}

fn parse_updates(ts: &mut TokenStream, scope: &ModelScope<'_>) -> Result<Vec<(usize, IntExpr)>, ModelError> {
    if ts.at_keyword("true") {
        ts.next();
        return Ok(Vec::new());
    }
    let mut updates: Vec<(usize, IntExpr)> = Vec::new();
    loop {
        ts.expect(&Tok::LParen)?;
        let (name, pos) = ts.expect_ident()?;
        let var = match scope.resolve(&name) {
            Some(Binding::Var(i)) => i,
            _ => return Err(SyntaxError::new(pos, format!("`{name}` is not a variable")).into()),
        };
        if updates.iter().any(|(v, _)| *v == var) {
            return Err(ModelError::DuplicateUpdate { name, pos });
        }
        ts.expect(&Tok::Prime)?;
        ts.expect(&Tok::Eq)?;
        let rhs = expr::parse_int_expr(ts, scope)?;
        ts.expect(&Tok::RParen)?;
        updates.push((var, rhs));
        if !ts.eat(&Tok::And) {
            return Ok(updates);
        }
    }
}
