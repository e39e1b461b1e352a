//! Reference implementations used as test oracles. They favour obviousness
//! over speed and share no code with the library beyond parsing and guard /
//! update evaluation.
#![allow(dead_code)]

use num_bigint::BigUint;

use mdpsmc::expr::BoolExpr;
use mdpsmc::hash::HashConfig;
use mdpsmc::model::{parse_model, MdpModel, StateVector, VariableDecl};
use mdpsmc::property::{parse_property, Formula, Verdict};
use mdpsmc::simulator::{scheduler_pick, SchedulerMode};
use mdpsmc::SplitMix64;

pub const BOUNCE_MODEL: &str = include_str!("../../models/bounce.mdp");
pub const BOUNCE_PROPERTY: &str = include_str!("../../models/bounce.prop");

/// 0.5 * 0.9^4: choose a2 first, then a1 at each of the four states that must stay put.
pub const BOUNCE_GENERAL_OPTIMUM: f64 = 0.32805;
/// 0.1 * 0.9^4: a memoryless scheduler must use a1 throughout.
pub const BOUNCE_MEMORYLESS_OPTIMUM: f64 = 0.06561;

pub fn bounce() -> (MdpModel, Formula) {
    let model = parse_model(BOUNCE_MODEL).unwrap();
    let formula = parse_property(BOUNCE_PROPERTY, &model).unwrap();
    (model, formula)
}

pub fn bits_for(decl: &VariableDecl) -> u64 {
    let span = BigUint::from((i128::from(decl.upper) - i128::from(decl.lower)) as u128);
    span.bits().max(1)
}

/// `(sigma : s_0 : ... : s_n) mod m`, the concatenation built as one big integer.
pub fn big_hash(sigma: u64, states: &[StateVector], decls: &[VariableDecl], m: u64) -> u64 {
    let mut x = BigUint::from(sigma);
    for s in states {
        for (v, d) in s.values().iter().zip(decls) {
            x <<= bits_for(d);
            x += BigUint::from((i128::from(*v) - i128::from(d.lower)) as u128);
        }
    }
    let r = x % BigUint::from(m);
    r.to_u64_digits().first().copied().unwrap_or(0)
}

/// Random prime modulus of 2 to 62 bits.
pub fn random_prime(rng: &mut SplitMix64) -> u64 {
    let bits = 2 + rng.uniform_index(61).unwrap() as u32;
    let mut n = (rng.next_u64() >> (64 - bits)) | 1;
    loop {
        if let Ok(cfg) = HashConfig::new(n) {
            return cfg.modulus();
        }
        n = if n + 2 > u64::MAX / 2 { 3 } else { n + 2 };
    }
}

pub fn random_decls(rng: &mut SplitMix64) -> Vec<VariableDecl> {
    let count = 1 + rng.uniform_index(4).unwrap() as usize;
    (0..count)
        .map(|i| {
            let lower = rng.uniform_index(2001).unwrap() as i64 - 1000;
            let span_bits = rng.uniform_index(41).unwrap() as u32;
            let span = rng.next_u64() >> (64 - span_bits.max(1)) >> u32::from(span_bits == 0);
            VariableDecl::new(format!("v{i}"), lower, lower + span as i64, lower)
        })
        .collect()
}

pub fn random_state(rng: &mut SplitMix64, decls: &[VariableDecl]) -> StateVector {
    StateVector::new(
        decls
            .iter()
            .map(|d| d.lower + rng.uniform_index((d.upper - d.lower) as u64 + 1).unwrap() as i64)
            .collect(),
    )
}

pub fn oracle_horizon(f: &Formula) -> usize {
    match f {
        Formula::Atom(_) => 0,
        Formula::Not(a) => oracle_horizon(a),
        Formula::And(l, r) | Formula::Or(l, r) => oracle_horizon(l).max(oracle_horizon(r)),
        Formula::Next(a) => 1 + oracle_horizon(a),
        Formula::Globally(t, a) | Formula::Finally(t, a) => *t as usize + oracle_horizon(a),
        Formula::Until(t, l, r) => *t as usize + oracle_horizon(l).max(oracle_horizon(r)),
    }
}

/// Direct bounded-LTL semantics on a trace long enough to need no extension.
pub fn holds(f: &Formula, trace: &[StateVector], i: usize) -> bool {
    match f {
        Formula::Atom(e) => e.eval(trace[i].values()).unwrap(),
        Formula::Not(a) => !holds(a, trace, i),
        Formula::And(l, r) => holds(l, trace, i) & holds(r, trace, i),
        Formula::Or(l, r) => holds(l, trace, i) | holds(r, trace, i),
        Formula::Next(a) => holds(a, trace, i + 1),
        Formula::Globally(t, a) => (0..=*t as usize).all(|k| holds(a, trace, i + k)),
        Formula::Finally(t, a) => (0..=*t as usize).any(|k| holds(a, trace, i + k)),
        Formula::Until(t, l, r) => {
            (0..=*t as usize).any(|k| holds(r, trace, i + k) && (0..k).all(|j| holds(l, trace, i + j)))
        }
    }
}

/// Verdict by enumerating every continuation of `prefix` over `alphabet` up to
/// the horizon.
pub fn oracle_verdict(f: &Formula, prefix: &[StateVector], alphabet: &[StateVector]) -> Verdict {
    let need = oracle_horizon(f) + 1;
    let missing = need.saturating_sub(prefix.len());
    let mut trace: Vec<StateVector> = prefix.to_vec();
    trace.extend(std::iter::repeat_n(alphabet[0].clone(), missing));
    let mut digits = vec![0usize; missing];
    let (mut seen_true, mut seen_false) = (false, false);
    loop {
        for (k, &d) in digits.iter().enumerate() {
            trace[prefix.len() + k] = alphabet[d].clone();
        }
        if holds(f, &trace, 0) {
            seen_true = true;
        } else {
            seen_false = true;
        }
        if seen_true && seen_false {
            return Verdict::Undecided;
        }
        let mut k = 0;
        loop {
            if k == missing {
                return if seen_true { Verdict::True } else { Verdict::False };
            }
            digits[k] += 1;
            if digits[k] < alphabet.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// Action the scheduler `sigma` takes after `path`, by the big-integer hash.
pub fn scheduler_action(model: &MdpModel, sigma: u64, mode: SchedulerMode, m: u64, path: &[StateVector]) -> Option<usize> {
    let current = path.last().unwrap();
    let enabled = model.enabled_commands(current).unwrap();
    if enabled.is_empty() {
        return None;
    }
    let h = match mode {
        SchedulerMode::General => big_hash(sigma, path, model.variables(), m),
        SchedulerMode::Memoryless => big_hash(sigma, std::slice::from_ref(current), model.variables(), m),
    };
    Some(enabled[scheduler_pick(h, enabled.len())])
}

/// Exact probability that the property holds under scheduler `sigma`, by
/// expanding the whole probability tree to the property's horizon.
pub fn chain_probability(model: &MdpModel, formula: &Formula, sigma: u64, mode: SchedulerMode, m: u64) -> f64 {
    fn expand(
        model: &MdpModel,
        formula: &Formula,
        sigma: u64,
        mode: SchedulerMode,
        m: u64,
        need: usize,
        path: &mut Vec<StateVector>,
    ) -> f64 {
        if path.len() == need {
            return if holds(formula, path, 0) { 1.0 } else { 0.0 };
        }
        let current = path.last().unwrap().clone();
        let Some(command) = scheduler_action(model, sigma, mode, m, path) else {
            path.push(current);
            let p = expand(model, formula, sigma, mode, m, need, path);
            path.pop();
            return p;
        };
        let mut total = 0.0;
        for (i, choice) in model.commands()[command].choices.iter().enumerate() {
            path.push(model.apply_choice(&current, command, i).unwrap());
            total += choice.probability * expand(model, formula, sigma, mode, m, need, path);
            path.pop();
        }
        total
    }
    let need = oracle_horizon(formula) + 1;
    let mut path = vec![model.initial_state().clone()];
    expand(model, formula, sigma, mode, m, need, &mut path)
}

pub fn two_state_model() -> MdpModel {
    parse_model("var x : [0..1] init 0;\n[flip] true -> 0.5 : (x' = 1 - x) + 0.5 : true;").unwrap()
}

/// Random formula over `atoms` with temporal bounds at most `max_bound`.
pub fn random_formula(rng: &mut SplitMix64, depth: u32, atoms: &[BoolExpr], max_bound: u64) -> Formula {
    let pick = |rng: &mut SplitMix64, n: u64| rng.uniform_index(n).unwrap();
    if depth == 0 || pick(rng, 4) == 0 {
        return Formula::Atom(atoms[pick(rng, atoms.len() as u64) as usize].clone());
    }
    let bound = |rng: &mut SplitMix64| pick(rng, max_bound + 1) as u32;
    let sub = |rng: &mut SplitMix64| Box::new(random_formula(rng, depth - 1, atoms, max_bound));
    match pick(rng, 7) {
        0 => Formula::Not(sub(rng)),
        1 => Formula::And(sub(rng), sub(rng)),
        2 => Formula::Or(sub(rng), sub(rng)),
        3 => Formula::Next(sub(rng)),
        4 => Formula::Globally(bound(rng), sub(rng)),
        5 => Formula::Finally(bound(rng), sub(rng)),
        _ => {
            let t = bound(rng);
            Formula::Until(t, sub(rng), sub(rng))
        }
    }
}

/// Atoms over the two-state model, including ones that are complementary or
/// constant on its domain.
pub fn two_state_atoms(model: &MdpModel) -> Vec<BoolExpr> {
    ["x = 0", "x = 1", "x != 0", "x >= 0"]
        .iter()
        .map(|text| match parse_property(text, model).unwrap() {
            Formula::Atom(e) => e,
            other => panic!("not an atom: {other:?}"),
        })
        .collect()
}

/// All traces over `alphabet` with between 1 and `max_len` states.
pub fn all_traces(alphabet: &[StateVector], max_len: usize) -> Vec<Vec<StateVector>> {
    let mut out: Vec<Vec<StateVector>> = alphabet.iter().map(|s| vec![s.clone()]).collect();
    let mut frontier = out.clone();
    for _ in 1..max_len {
        let mut grown = Vec::new();
        for t in &frontier {
            for s in alphabet {
                let mut u = t.clone();
                u.push(s.clone());
                grown.push(u);
            }
        }
        out.extend(grown.iter().cloned());
        frontier = grown;
    }
    out
}

pub fn states(values: &[i64]) -> Vec<StateVector> {
    values.iter().map(|&v| StateVector::new(vec![v])).collect()
}
