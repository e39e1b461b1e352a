//! Statistical model checking of Markov decision processes.
//!
//! Schedulers are never stored. A scheduler is an integer `sigma`; its action
//! at a history is chosen by a PRNG seeded with a modular hash of `sigma`
//! concatenated with the history, which is updated incrementally in O(1)
//! memory. Sampling many such schedulers, with confidence levels corrected for
//! the number of schedulers, gives extremal probability estimates and
//! existence tests for bounded temporal properties.

pub mod engine;
pub mod expr;
pub mod hash;
pub mod lexer;
pub mod model;
pub mod monitor;
pub mod property;
pub mod report;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use engine::{Engine, EstimationResult, Hypothesis, HypothesisOutcome, HypothesisReport, HypothesisSpec, RunConfig};
pub use hash::{HashConfig, SchedulerId, TraceHash};
pub use model::{parse_model, MdpModel, StateVector};
pub use monitor::Monitor;
pub use property::{parse_property, Formula, Verdict};
pub use rng::SplitMix64;
pub use simulator::{SchedulerMode, SimulationOutcome, Simulator};
