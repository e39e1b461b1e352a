//! Exact prefix verdicts by formula progression.
//!
//! Every state is reduced to a letter: the bitmask of the formula's atoms that
//! hold in it. Progressing a formula through a letter leaves a residual formula
//! about the rest of the trace. After a prefix, the verdict is `True` if the
//! residual holds for every continuation, `False` if it holds for none, and
//! `Undecided` otherwise. Continuations range over the letters that some state
//! of the variable domain realises, reachable or not.
//!
//! Residuals are hash-consed and the transition table over all residuals is
//! built when the monitor is created, so stepping a trace is one lookup. Bounded
//! operators make the residual graph acyclic apart from the two constants, which
//! is what makes the up-front classification possible.
//!
//! If the table would grow past [`MAX_TABLE`] entries, or the domain is too big
//! to enumerate and the formula has more than [`MAX_FREE_ATOMS`] atoms, the
//! monitor falls back to [`Formula::kleene_verdict`], which is sound but may
//! decide later than necessary.

use std::collections::HashMap;

use crate::expr::{BoolExpr, EvalError};
use crate::model::{MdpModel, StateVector, VariableDecl};
use crate::property::{Formula, Verdict};

/// Upper bound on residuals times letters in the transition table.
pub const MAX_TABLE: usize = 1 << 21;
/// Largest variable domain whose states are enumerated to find the letters.
pub const MAX_DOMAIN: u64 = 1 << 16;
/// With a larger domain every atom combination counts as a letter, up to this many atoms.
pub const MAX_FREE_ATOMS: usize = 10;

type NodeId = u32;

const FALSE: NodeId = 0;
const TRUE: NodeId = 1;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Node {
    Const(bool),
    Atom(u32),
    Not(NodeId),
    /// Sorted, deduplicated, at least two operands.
    And(Vec<NodeId>),
    Or(Vec<NodeId>),
    Next(NodeId),
    Globally(u32, NodeId),
    Finally(u32, NodeId),
    Until(u32, NodeId, NodeId),
}

#[derive(Default)]
struct Arena {
    nodes: Vec<Node>,
    ids: HashMap<Node, NodeId>,
    atoms: Vec<BoolExpr>,
    atom_ids: HashMap<BoolExpr, u32>,
}

impl Arena {
    fn new() -> Self {
        let mut arena = Arena::default();
        arena.intern(Node::Const(false));
        arena.intern(Node::Const(true));
        arena
    }

    fn intern(&mut self, node: Node) -> NodeId {
        if let Some(&id) = self.ids.get(&node) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(node.clone());
        self.ids.insert(node, id);
        id
    }

    fn constant(b: bool) -> NodeId {
        if b {
            TRUE
        } else {
            FALSE
        }
    }

    fn not(&mut self, a: NodeId) -> NodeId {
        match self.nodes[a as usize] {
            Node::Const(b) => Self::constant(!b),
            Node::Not(x) => x,
            _ => self.intern(Node::Not(a)),
        }
    }

    fn junction(&mut self, conjunction: bool, parts: impl IntoIterator<Item = NodeId>) -> NodeId {
        let (unit, zero) = if conjunction { (TRUE, FALSE) } else { (FALSE, TRUE) };
        let mut flat = Vec::new();
        for p in parts {
            if p == zero {
                return zero;
            }
            if p == unit {
                continue;
            }
            match &self.nodes[p as usize] {
                Node::And(cs) if conjunction => flat.extend_from_slice(cs),
                Node::Or(cs) if !conjunction => flat.extend_from_slice(cs),
                _ => flat.push(p),
            }
        }
        flat.sort_unstable();
        flat.dedup();
        for &p in &flat {
            if let Node::Not(x) = self.nodes[p as usize] {
                if flat.binary_search(&x).is_ok() {
                    return zero;
                }
            }
        }
        match flat.len() {
            0 => unit,
            1 => flat[0],
            _ if conjunction => self.intern(Node::And(flat)),
            _ => self.intern(Node::Or(flat)),
        }
    }

    fn globally(&mut self, t: u32, a: NodeId) -> NodeId {
        if t == 0 || a <= TRUE {
            a
        } else {
            self.intern(Node::Globally(t, a))
        }
    }

    fn finally(&mut self, t: u32, a: NodeId) -> NodeId {
        if t == 0 || a <= TRUE {
            a
        } else {
            self.intern(Node::Finally(t, a))
        }
    }

    fn until(&mut self, t: u32, l: NodeId, r: NodeId) -> NodeId {
        if t == 0 || r == TRUE || l == FALSE {
            r
        } else {
            self.intern(Node::Until(t, l, r))
        }
    }

    fn next(&mut self, a: NodeId) -> NodeId {
        if a <= TRUE {
            a
        } else {
            self.intern(Node::Next(a))
        }
    }

    fn lower(&mut self, f: &Formula) -> NodeId {
        match f {
            Formula::Atom(BoolExpr::Const(b)) => Self::constant(*b),
            Formula::Atom(e) => {
                let next = self.atoms.len() as u32;
                let id = *self.atom_ids.entry(e.clone()).or_insert(next);
                if id == next {
                    self.atoms.push(e.clone());
                }
                self.intern(Node::Atom(id))
            }
            Formula::Not(a) => {
                let a = self.lower(a);
                self.not(a)
            }
            Formula::And(l, r) | Formula::Or(l, r) => {
                let l = self.lower(l);
                let r = self.lower(r);
                self.junction(matches!(f, Formula::And(..)), [l, r])
            }
            Formula::Next(a) => {
                let a = self.lower(a);
                self.next(a)
            }
            Formula::Globally(t, a) => {
                let a = self.lower(a);
                self.globally(*t, a)
            }
            Formula::Finally(t, a) => {
                let a = self.lower(a);
                self.finally(*t, a)
            }
            Formula::Until(t, l, r) => {
                let l = self.lower(l);
                let r = self.lower(r);
                self.until(*t, l, r)
            }
        }
    }

    /// Residual of `n` after one state with atom values `letter`.
    fn progress(&mut self, n: NodeId, letter: u64, memo: &mut HashMap<NodeId, NodeId>) -> NodeId {
        if let Some(&r) = memo.get(&n) {
            return r;
        }
        let r = match self.nodes[n as usize].clone() {
            Node::Const(_) => n,
            Node::Atom(a) => Self::constant(letter >> a & 1 == 1),
            Node::Not(x) => {
                let p = self.progress(x, letter, memo);
                self.not(p)
            }
            Node::And(cs) | Node::Or(cs) => {
                let conjunction = matches!(self.nodes[n as usize], Node::And(_));
                let parts: Vec<NodeId> = cs.iter().map(|&c| self.progress(c, letter, memo)).collect();
                self.junction(conjunction, parts)
            }
            Node::Next(x) => x,
            Node::Globally(t, x) => {
                let now = self.progress(x, letter, memo);
                let rest = self.globally(t - 1, x);
                self.junction(true, [now, rest])
            }
            Node::Finally(t, x) => {
                let now = self.progress(x, letter, memo);
                let rest = self.finally(t - 1, x);
                self.junction(false, [now, rest])
            }
            Node::Until(t, l, r) => {
                let now_r = self.progress(r, letter, memo);
                let now_l = self.progress(l, letter, memo);
                let rest = self.until(t - 1, l, r);
                let keep_going = self.junction(true, [now_l, rest]);
                self.junction(false, [now_r, keep_going])
            }
        };
        memo.insert(n, r);
        r
    }

    fn horizon(&self, n: NodeId, memo: &mut HashMap<NodeId, u64>) -> u64 {
        if let Some(&h) = memo.get(&n) {
            return h;
        }
        let h = match &self.nodes[n as usize] {
            Node::Const(_) | Node::Atom(_) => 0,
            Node::Not(x) => self.horizon(*x, memo),
            Node::And(cs) | Node::Or(cs) => cs.iter().map(|&c| self.horizon(c, memo)).max().unwrap_or(0),
            Node::Next(x) => 1 + self.horizon(*x, memo),
            Node::Globally(t, x) | Node::Finally(t, x) => u64::from(*t) + self.horizon(*x, memo),
            Node::Until(t, l, r) => u64::from(*t) + self.horizon(*l, memo).max(self.horizon(*r, memo)),
        };
        memo.insert(n, h);
        h
    }
}

/// Letters realisable by some in-range state, or every combination when the
/// domain is too large to enumerate. `None` if neither is affordable.
fn letters(decls: &[VariableDecl], atoms: &[BoolExpr]) -> Option<Vec<u64>> {
    let size = decls
        .iter()
        .try_fold(1u64, |acc, d| acc.checked_mul((d.upper - d.lower) as u64 + 1))
        .filter(|&n| n <= MAX_DOMAIN);
    if size.is_none() {
        return (atoms.len() <= MAX_FREE_ATOMS).then(|| (0..1u64 << atoms.len()).collect());
    }
    let mut seen = Vec::new();
    let mut values: Vec<i64> = decls.iter().map(|d| d.lower).collect();
    'states: loop {
        let mut mask = 0u64;
        let mut defined = true;
        for (i, atom) in atoms.iter().enumerate() {
            match atom.eval(&values) {
                Ok(b) => mask |= u64::from(b) << i,
                Err(_) => defined = false,
            }
        }
        if defined {
            seen.push(mask);
        }
        for (v, d) in values.iter_mut().zip(decls) {
            if *v < d.upper {
                *v += 1;
                continue 'states;
            }
            *v = d.lower;
        }
        break;
    }
    seen.sort_unstable();
    seen.dedup();
    Some(seen)
}

struct Table {
    atoms: Vec<BoolExpr>,
    /// Letter mask to column; masks are dense when there are few atoms.
    columns: HashMap<u64, u32>,
    width: usize,
    next: Vec<u32>,
    verdicts: Vec<Verdict>,
    start: u32,
}

/// Position of a monitor within a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cursor(u32);

/// Cursor once a state outside the letter table was seen; from there on the
/// Kleene evaluation of the whole prefix is used.
const DETACHED: u32 = u32::MAX;

pub struct Monitor {
    formula: Formula,
    table: Option<Table>,
}

impl Monitor {
    pub fn new(formula: &Formula, model: &MdpModel) -> Self {
        Monitor {
            formula: formula.clone(),
            table: Self::build(formula, model.variables()),
        }
    }

    fn build(formula: &Formula, decls: &[VariableDecl]) -> Option<Table> {
        let mut arena = Arena::new();
        let root = arena.lower(formula);
        if arena.atoms.len() > 63 {
            return None;
        }
        let letters = letters(decls, &arena.atoms)?;
        let width = letters.len().max(1);

        // residual states in discovery order; constants first so they are fixed points
        let mut index: HashMap<NodeId, u32> = HashMap::new();
        let mut order: Vec<NodeId> = Vec::new();
        for n in [FALSE, TRUE, root] {
            index.entry(n).or_insert_with(|| {
                order.push(n);
                order.len() as u32 - 1
            });
        }
        let mut next: Vec<u32> = Vec::new();
        let mut cursor = 0;
        while cursor < order.len() {
            if (cursor + 1) * width > MAX_TABLE {
                return None;
            }
            let n = order[cursor];
            for &letter in &letters {
                let r = arena.progress(n, letter, &mut HashMap::new());
                let id = *index.entry(r).or_insert_with(|| {
                    order.push(r);
                    order.len() as u32 - 1
                });
                next.push(id);
            }
            if letters.is_empty() {
                next.push(cursor as u32);
            }
            cursor += 1;
        }

        // successors have strictly smaller horizon, so classify bottom-up
        let mut memo = HashMap::new();
        let mut by_horizon: Vec<(u64, usize)> =
            order.iter().enumerate().map(|(i, &n)| (arena.horizon(n, &mut memo), i)).collect();
        by_horizon.sort_unstable();
        let mut verdicts = vec![Verdict::Undecided; order.len()];
        verdicts[0] = Verdict::False;
        verdicts[1] = Verdict::True;
        for (_, i) in by_horizon {
            if i < 2 {
                continue;
            }
            let succ = &next[i * width..(i + 1) * width];
            let all = |v: Verdict| succ.iter().all(|&s| verdicts[s as usize] == v);
            verdicts[i] = if all(Verdict::True) {
                Verdict::True
            } else if all(Verdict::False) {
                Verdict::False
            } else {
                Verdict::Undecided
            };
        }

        let columns = letters.iter().enumerate().map(|(i, &l)| (l, i as u32)).collect();
        Some(Table {
            atoms: arena.atoms,
            columns,
            width,
            next,
            verdicts,
            start: index[&root],
        })
    }

    /// Whether verdicts are exact rather than the Kleene approximation.
    pub fn is_exact(&self) -> bool {
        self.table.is_some()
    }

    /// Number of residual formulas in the transition table.
    pub fn residuals(&self) -> usize {
        self.table.as_ref().map_or(0, |t| t.verdicts.len())
    }

    pub fn start(&self) -> Cursor {
        Cursor(self.table.as_ref().map_or(DETACHED, |t| t.start))
    }

    /// Verdict of the empty prefix.
    pub fn initial_verdict(&self) -> Verdict {
        match &self.table {
            Some(t) => t.verdicts[t.start as usize],
            None => Verdict::Undecided,
        }
    }

    /// Moves `cursor` past the last state of `prefix` and returns the verdict of
    /// the whole prefix. `cursor` must have been advanced through all earlier
    /// states of the same prefix.
    pub fn advance(&self, cursor: &mut Cursor, prefix: &[StateVector]) -> Result<Verdict, EvalError> {
        let (Some(table), Some(last)) = (&self.table, prefix.last()) else {
            return self.formula.kleene_verdict(prefix);
        };
        if cursor.0 == DETACHED {
            return self.formula.kleene_verdict(prefix);
        }
        let mut mask = 0u64;
        for (i, atom) in table.atoms.iter().enumerate() {
            mask |= u64::from(atom.eval(last.values())?) << i;
        }
        match table.columns.get(&mask) {
            Some(&col) => {
                cursor.0 = table.next[cursor.0 as usize * table.width + col as usize];
                Ok(table.verdicts[cursor.0 as usize])
            }
            None => {
                cursor.0 = DETACHED;
                self.formula.kleene_verdict(prefix)
            }
        }
    }

    /// Verdict of `prefix`: decided exactly when every continuation agrees.
    pub fn evaluate(&self, prefix: &[StateVector]) -> Result<Verdict, EvalError> {
        let mut cursor = self.start();
        let mut verdict = self.initial_verdict();
        for len in 1..=prefix.len() {
            verdict = self.advance(&mut cursor, &prefix[..len])?;
        }
        if prefix.is_empty() && !self.is_exact() {
            verdict = self.formula.kleene_verdict(prefix)?;
        }
        Ok(verdict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::property::parse_property;

    fn states(locs: &[i64]) -> Vec<StateVector> {
        locs.iter().map(|&l| StateVector::new(vec![l])).collect()
    }

    fn bounce() -> MdpModel {
        parse_model(include_str!("../models/bounce.mdp")).unwrap()
    }

    #[test]
    fn bounce_verdicts() {
        let model = bounce();
        let phi = parse_property(include_str!("../models/bounce.prop"), &model).unwrap();
        let m = Monitor::new(&phi, &model);
        assert!(m.is_exact());
        assert_eq!(m.evaluate(&states(&[0, 1, 0, 0, 0, 0, 0])).unwrap(), Verdict::True);
        assert_eq!(m.evaluate(&states(&[0, 0])).unwrap(), Verdict::False);
        assert_eq!(m.evaluate(&states(&[0, 1, 0, 0])).unwrap(), Verdict::Undecided);
        assert_eq!(m.evaluate(&states(&[0, 1, 0, 1])).unwrap(), Verdict::False);
        assert_eq!(m.evaluate(&states(&[0])).unwrap(), Verdict::Undecided);
    }

    #[test]
    fn forced_outcomes_are_decided_early() {
        let model = parse_model("var x : [0..1] init 0;").unwrap();
        // over a two-valued domain one of the disjuncts must hold
        let phi = parse_property("F<=2 x = 0 | G<=2 x = 1", &model).unwrap();
        let m = Monitor::new(&phi, &model);
        assert_eq!(phi.kleene_verdict(&[]).unwrap(), Verdict::Undecided);
        assert_eq!(m.evaluate(&[]).unwrap(), Verdict::True);
        let phi = parse_property("X (x = 1 & x = 0)", &model).unwrap();
        assert_eq!(Monitor::new(&phi, &model).evaluate(&states(&[0])).unwrap(), Verdict::False);
        // both letters realisable, so nothing is forced
        let phi = parse_property("X x = 1", &model).unwrap();
        assert_eq!(Monitor::new(&phi, &model).evaluate(&states(&[0])).unwrap(), Verdict::Undecided);
    }

    #[test]
    fn unrealisable_letters_are_ignored() {
        let model = parse_model("var x : [0..3] init 0;").unwrap();
        // no state has x > 2 and x < 1 at once
        let phi = parse_property("X (x > 2 & x < 1)", &model).unwrap();
        assert_eq!(Monitor::new(&phi, &model).evaluate(&states(&[0])).unwrap(), Verdict::False);
    }

    #[test]
    fn large_domain_uses_all_atom_combinations() {
        let model = parse_model("var x : [0..1000000] init 0;").unwrap();
        let phi = parse_property("X (x > 2 & x < 1)", &model).unwrap();
        let m = Monitor::new(&phi, &model);
        assert!(m.is_exact());
        assert_eq!(m.evaluate(&states(&[0])).unwrap(), Verdict::Undecided);
        assert_eq!(m.evaluate(&states(&[0, 5])).unwrap(), Verdict::False);
    }

    #[test]
    fn decided_at_horizon() {
        let model = parse_model("var x : [0..2] init 0;").unwrap();
        let phi = parse_property("(x = 1) U<=3 (X x = 2)", &model).unwrap();
        let m = Monitor::new(&phi, &model);
        let h = phi.horizon() as usize;
        let mut rng = crate::rng::SplitMix64::new(3);
        for _ in 0..200 {
            let trace: Vec<i64> = (0..=h).map(|_| rng.uniform_index(3).unwrap() as i64).collect();
            let v = m.evaluate(&states(&trace)).unwrap();
            assert!(v.is_decided());
            assert_eq!(v, phi.kleene_verdict(&states(&trace)).unwrap());
        }
    }

    #[test]
    fn constants() {
        let model = parse_model("var x : [0..1] init 0;").unwrap();
        let m = Monitor::new(&Formula::tautology(), &model);
        assert_eq!(m.evaluate(&states(&[0])).unwrap(), Verdict::True);
        let never = parse_property("!true", &model).unwrap();
        assert_eq!(Monitor::new(&never, &model).evaluate(&states(&[0])).unwrap(), Verdict::False);
    }
}
