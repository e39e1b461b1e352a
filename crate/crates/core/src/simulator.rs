//! Trace simulation under a hash-seeded scheduler.
//!
//! Before each step the current state is absorbed into the running trace hash,
//! the choice generator is re-seeded with the hash, and one draw picks among
//! the enabled commands. A second, independently seeded generator resolves the
//! probabilistic branch. Simulation stops as soon as the monitor decides the
//! property.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::EvalError;
use crate::hash::{HashConfig, HashError, SchedulerId, TraceHash};
use crate::model::{MdpModel, StateVector, StepError};
use crate::monitor::Monitor;
use crate::property::{Formula, Verdict};
use crate::rng::SplitMix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerMode {
    /// History-dependent: the hash covers the whole trace so far.
    General,
    /// The hash covers only the current state.
    Memoryless,
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("evaluating property: {0}")]
    Property(#[source] EvalError),
    #[error("hashing state: {0}")]
    Hash(#[from] HashError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOutcome {
    pub satisfied: bool,
    /// Number of transitions taken.
    pub steps: u64,
    /// Some state had no enabled command and was treated as absorbing.
    pub deadlocked: bool,
    pub trace: Option<Vec<StateVector>>,
}

/// Result of one trace without the trace itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct TraceSummary {
    pub satisfied: bool,
    pub steps: u64,
    pub deadlocked: bool,
}

/// Reusable buffers so a worker can run many traces without allocating.
#[derive(Default)]
pub struct Scratch {
    states: Vec<StateVector>,
    enabled: Vec<usize>,
}

/// The scheduler's decision for a given trace hash: one draw from a generator
/// seeded with the hash, mapped onto `k` enabled commands.
pub fn scheduler_pick(hash: u64, k: usize) -> usize {
    match k {
        0 | 1 => 0,
        _ => SplitMix64::new(hash).uniform_index(k as u64).expect("k > 1") as usize,
    }
}

pub struct Simulator<'a> {
    model: &'a MdpModel,
    formula: &'a Formula,
    mode: SchedulerMode,
    hash: HashConfig,
    monitor: Monitor,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a MdpModel, formula: &'a Formula, mode: SchedulerMode, hash: HashConfig) -> Self {
        Simulator {
            model,
            formula,
            mode,
            hash,
            monitor: Monitor::new(formula, model),
        }
    }

    pub fn model(&self) -> &'a MdpModel {
        self.model
    }

    pub fn formula(&self) -> &'a Formula {
        self.formula
    }

    pub fn mode(&self) -> SchedulerMode {
        self.mode
    }

    pub fn hash_config(&self) -> HashConfig {
        self.hash
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn simulate(&self, sigma: SchedulerId, prob_seed: u64, record: bool) -> Result<SimulationOutcome, SimulationError> {
        let mut scratch = Scratch::default();
        let summary = self.run(sigma, prob_seed, &mut scratch)?;
        let trace = record.then(|| {
            scratch.states.truncate(summary.steps as usize + 1);
            scratch.states
        });
        Ok(SimulationOutcome {
            satisfied: summary.satisfied,
            steps: summary.steps,
            deadlocked: summary.deadlocked,
            trace,
        })
    }

    pub(crate) fn run(&self, sigma: SchedulerId, prob_seed: u64, scratch: &mut Scratch) -> Result<TraceSummary, SimulationError> {
        let model = self.model;
        let decls = model.variables();
        let Scratch { states, enabled } = scratch;

        if states.is_empty() {
            states.push(model.initial_state().clone());
        } else {
            states[0].values_mut().copy_from_slice(model.initial_state().values());
        }
        let mut len = 1usize;
        let mut cursor = self.monitor.start();
        let mut verdict = self
            .monitor
            .advance(&mut cursor, &states[..len])
            .map_err(SimulationError::Property)?;
        let mut prob = SplitMix64::new(prob_seed);
        let mut hash = TraceHash::init(sigma, &self.hash);
        let mut deadlocked = false;

        while verdict == Verdict::Undecided {
            if states.len() == len {
                states.push(states[len - 1].clone());
            }
            let (done, rest) = states.split_at_mut(len);
            let current = done[len - 1].values();
            let next = rest[0].values_mut();
            next.copy_from_slice(current);

            hash = match self.mode {
                SchedulerMode::General => hash.absorb_values(current, decls)?,
                SchedulerMode::Memoryless => TraceHash::init(sigma, &self.hash).absorb_values(current, decls)?,
            };
            model.enabled_into(current, enabled)?;
            if enabled.is_empty() {
                deadlocked = true;
            } else {
                let command = enabled[scheduler_pick(hash.value(), enabled.len())];
                let choices = &model.commands()[command].choices;
                let choice = if choices.len() == 1 {
                    0
                } else {
                    let u = prob.uniform_unit();
                    let mut cumulative = 0.0;
                    choices
                        .iter()
                        .position(|c| {
                            cumulative += c.probability;
                            u < cumulative
                        })
                        .unwrap_or(choices.len() - 1)
                };
                model.apply_into(current, command, choice, next)?;
            }

            len += 1;
            verdict = self
                .monitor
                .advance(&mut cursor, &states[..len])
                .map_err(SimulationError::Property)?;
        }

        Ok(TraceSummary {
            satisfied: verdict == Verdict::True,
            steps: len as u64 - 1,
            deadlocked,
        })
    }

    /// Fraction of `n` traces satisfying the property, using the first `n`
    /// probabilistic seeds from `seeds`.
    pub fn estimate_under_scheduler(
        &self,
        sigma: SchedulerId,
        n: u64,
        seeds: impl IntoIterator<Item = u64>,
    ) -> Result<f64, SimulationError> {
        assert!(n >= 1, "estimate needs at least one trace");
        let mut scratch = Scratch::default();
        let mut hits = 0u64;
        let mut used = 0u64;
        for seed in seeds.into_iter().take(n as usize) {
            hits += u64::from(self.run(sigma, seed, &mut scratch)?.satisfied);
            used += 1;
        }
        assert_eq!(used, n, "seed stream ended early");
        Ok(hits as f64 / n as f64)
    }
}

/// Probabilistic seed of trace `trace_index` of scheduler `scheduler_index`:
/// the trace hash of `master : scheduler_index : trace_index`, each a 64-bit
/// field. Depends on nothing else, so results do not depend on worker count or
/// execution order.
pub fn derive_prob_seed(master: u64, scheduler_index: u64, trace_index: u64, config: &HashConfig) -> u64 {
    ProbSeeds::new(master, scheduler_index, config).seed(trace_index)
}

/// [`derive_prob_seed`] for a fixed scheduler, with the scheduler prefix
/// already shifted into place.
#[derive(Clone, Copy, Debug)]
pub struct ProbSeeds {
    shifted_prefix: u64,
    modulus: u64,
}

impl ProbSeeds {
    pub fn new(master: u64, scheduler_index: u64, config: &HashConfig) -> Self {
        let prefix = TraceHash::init(SchedulerId(master), config)
            .absorb_value(scheduler_index, 64)
            .expect("64-bit field")
            .absorb_value(0, 64)
            .expect("64-bit field");
        ProbSeeds {
            shifted_prefix: prefix.value(),
            modulus: config.modulus(),
        }
    }

    #[inline]
    pub fn seed(&self, trace_index: u64) -> u64 {
        let sum = self.shifted_prefix + trace_index % self.modulus;
        if sum >= self.modulus {
            sum - self.modulus
        } else {
            sum
        }
    }
}

/// Trace dump: a `#` header naming the variables, then one line per state,
/// `step<TAB>v1<TAB>v2...`.
pub fn format_trace(model: &MdpModel, trace: &[StateVector]) -> String {
    let mut out = String::from("# step");
    for name in model.variable_names() {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for (step, state) in trace.iter().enumerate() {
        let _ = write!(out, "{step}");
        for v in state.values() {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}
