//! Multi-scheduler algorithms: extremal probability estimation and sequential
//! hypothesis testing over randomly sampled schedulers.
//!
//! Scheduler ids come from a generator seeded with the master seed. Every
//! trace's probabilistic seed is derived from `(master, scheduler index, trace
//! index)` alone, and traces are cut into fixed-size chunks independent of the
//! worker count, so results are bit-identical for any number of workers.

use std::ops::Range;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{HashConfig, SchedulerId};
use crate::model::MdpModel;
use crate::property::Formula;
use crate::rng::SplitMix64;
use crate::simulator::{ProbSeeds, SchedulerMode, Scratch, SimulationError, Simulator};
use crate::stats::{ChernoffPlan, SprtDecision, SprtPlan, StatsError};

/// Traces per parallel work unit.
const CHUNK: u64 = 2048;
/// First SPRT batch; later batches double up to [`SPRT_MAX_BATCH`].
const SPRT_FIRST_BATCH: u64 = 64;
const SPRT_MAX_BATCH: u64 = 16_384;
/// Per-scheduler SPRT budget; a test still undecided here counts as not accepted.
pub const DEFAULT_SPRT_TRACE_CAP: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("scheduler {scheduler_index}, trace {trace_index}: {source}")]
    Simulation {
        scheduler_index: u64,
        trace_index: u64,
        #[source]
        source: SimulationError,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub master_seed: u64,
    pub workers: usize,
    pub mode: SchedulerMode,
    pub hash: HashConfig,
}

/// Traces `traces` of scheduler number `scheduler_index` (id `sigma`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkBatch {
    pub scheduler_index: u64,
    pub sigma: SchedulerId,
    pub traces: Range<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceCounts {
    pub traces: u64,
    pub satisfied: u64,
    pub deadlocked: u64,
}

impl TraceCounts {
    fn add(&mut self, other: &TraceCounts) {
        self.traces += other.traces;
        self.satisfied += other.satisfied;
        self.deadlocked += other.deadlocked;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerEstimate {
    pub sigma: SchedulerId,
    pub p_hat: f64,
    pub truecount: u64,
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub plan: ChernoffPlan,
    pub per_scheduler: Vec<SchedulerEstimate>,
    /// Smallest nonzero estimate; `None` when no scheduler satisfied the property.
    pub p_hat_min: Option<f64>,
    pub p_hat_max: f64,
    pub sigma_min: Option<SchedulerId>,
    pub sigma_max: Option<SchedulerId>,
    pub none_satisfied: bool,
    pub deadlock_traces: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// `P >= threshold + theta`
    H0,
    /// `P <= threshold - theta`
    H1,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSpec {
    pub hypothesis: Hypothesis,
    pub threshold: f64,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub max_schedulers: u64,
    pub trace_cap: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SprtVerdict {
    AcceptH0,
    AcceptH1,
    /// Hit the per-scheduler trace cap without crossing either threshold.
    Capped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SprtRow {
    pub scheduler_index: u64,
    pub sigma: SchedulerId,
    pub verdict: SprtVerdict,
    pub traces: u64,
    pub satisfied: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum HypothesisOutcome {
    Accepted {
        sigma: SchedulerId,
        scheduler_index: u64,
        traces_used: u64,
        total_traces: u64,
    },
    NotAccepted {
        total_traces: u64,
    },
}

impl HypothesisOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, HypothesisOutcome::Accepted { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub spec: HypothesisSpec,
    pub plan: SprtPlan,
    pub outcome: HypothesisOutcome,
    pub schedulers: Vec<SprtRow>,
    pub deadlock_traces: u64,
}

pub struct Engine<'a> {
    sim: Simulator<'a>,
    run: RunConfig,
    pool: rayon::ThreadPool,
}

impl<'a> Engine<'a> {
    pub fn new(model: &'a MdpModel, formula: &'a Formula, run: RunConfig) -> Result<Self, EngineError> {
        if run.workers == 0 {
            return Err(EngineError::NoWorkers);
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(run.workers).build()?;
        Ok(Engine {
            sim: Simulator::new(model, formula, run.mode, run.hash),
            run,
            pool,
        })
    }

    pub fn run_config(&self) -> &RunConfig {
        &self.run
    }

    /// The scheduler ids the algorithms iterate, in order.
    pub fn scheduler_ids(&self) -> impl Iterator<Item = SchedulerId> {
        let mut seeds = SplitMix64::new(self.run.master_seed);
        std::iter::repeat_with(move || SchedulerId(seeds.next_u64()))
    }

    /// Simulate every trace of every batch and count outcomes per batch.
    pub fn run_parallel(&self, batches: &[WorkBatch]) -> Result<Vec<TraceCounts>, EngineError> {
        let chunks: Vec<(usize, Range<u64>)> = batches
            .iter()
            .enumerate()
            .flat_map(|(b, batch)| chunked(batch.traces.clone()).map(move |r| (b, r)))
            .collect();
        let master = self.run.master_seed;
        let hash = self.run.hash;

        let partial: Vec<Result<(usize, TraceCounts), EngineError>> = self.pool.install(|| {
            chunks
                .par_iter()
                .map_init(Scratch::default, |scratch, (b, range)| {
                    let batch = &batches[*b];
                    let seeds = ProbSeeds::new(master, batch.scheduler_index, &hash);
                    let mut counts = TraceCounts::default();
                    for t in range.clone() {
                        let s = self.sim.run(batch.sigma, seeds.seed(t), scratch).map_err(|source| {
                            EngineError::Simulation {
                                scheduler_index: batch.scheduler_index,
                                trace_index: t,
                                source,
                            }
                        })?;
                        counts.traces += 1;
                        counts.satisfied += u64::from(s.satisfied);
                        counts.deadlocked += u64::from(s.deadlocked);
                    }
                    Ok((*b, counts))
                })
                .collect()
        });

        let mut totals = vec![TraceCounts::default(); batches.len()];
        for item in partial {
            // chunks are in batch/trace order, so the first error is the earliest
            let (b, counts) = item?;
            totals[b].add(&counts);
        }
        Ok(totals)
    }

    /// Ordered per-trace outcomes `(satisfied, deadlocked)` for one scheduler.
    fn outcomes(&self, batch: &WorkBatch) -> Result<Vec<(bool, bool)>, EngineError> {
        let chunks: Vec<Range<u64>> = chunked_by(batch.traces.clone(), 256).collect();
        let seeds = ProbSeeds::new(self.run.master_seed, batch.scheduler_index, &self.run.hash);
        let parts: Vec<Result<Vec<(bool, bool)>, EngineError>> = self.pool.install(|| {
            chunks
                .par_iter()
                .map_init(Scratch::default, |scratch, range| {
                    range
                        .clone()
                        .map(|t| {
                            self.sim
                                .run(batch.sigma, seeds.seed(t), scratch)
                                .map(|s| (s.satisfied, s.deadlocked))
                                .map_err(|source| EngineError::Simulation {
                                    scheduler_index: batch.scheduler_index,
                                    trace_index: t,
                                    source,
                                })
                        })
                        .collect()
                })
                .collect()
        });
        let mut out = Vec::with_capacity((batch.traces.end - batch.traces.start) as usize);
        for part in parts {
            out.extend(part?);
        }
        Ok(out)
    }

    /// Estimate the property under `schedulers` sampled schedulers with enough
    /// traces each that all estimates are within `epsilon` with confidence
    /// `1 - delta`, and report the extremes.
    pub fn estimate_extrema(&self, epsilon: f64, delta: f64, schedulers: u64) -> Result<EstimationResult, EngineError> {
        let plan = ChernoffPlan::two_sided(epsilon, delta, schedulers)?;
        let n = plan.samples;
        let batches: Vec<WorkBatch> = self
            .scheduler_ids()
            .take(schedulers as usize)
            .enumerate()
            .map(|(i, sigma)| WorkBatch {
                scheduler_index: i as u64,
                sigma,
                traces: 0..n,
            })
            .collect();
        info!("estimating with {schedulers} schedulers x {n} traces");
        let counts = self.run_parallel(&batches)?;

        let mut result = EstimationResult {
            plan,
            per_scheduler: Vec::with_capacity(batches.len()),
            p_hat_min: None,
            p_hat_max: 0.0,
            sigma_min: None,
            sigma_max: None,
            none_satisfied: true,
            deadlock_traces: 0,
        };
        for (batch, c) in batches.iter().zip(&counts) {
            let p_hat = c.satisfied as f64 / n as f64;
            if p_hat > result.p_hat_max {
                result.p_hat_max = p_hat;
                result.sigma_max = Some(batch.sigma);
            }
            if p_hat > 0.0 && result.p_hat_min.is_none_or(|min| p_hat < min) {
                result.p_hat_min = Some(p_hat);
                result.sigma_min = Some(batch.sigma);
            }
            result.deadlock_traces += c.deadlocked;
            result.per_scheduler.push(SchedulerEstimate {
                sigma: batch.sigma,
                p_hat,
                truecount: c.satisfied,
                samples: n,
            });
        }
        result.none_satisfied = result.p_hat_max == 0.0;
        if result.none_satisfied {
            warn!("no schedulers were found to satisfy the property");
        }
        if result.deadlock_traces > 0 {
            warn!("{} traces reached a deadlock", result.deadlock_traces);
        }
        Ok(result)
    }

    /// Test schedulers one after another until one of them accepts the
    /// hypothesis of interest, or `max_schedulers` have been tried.
    pub fn hypothesis_test(&self, spec: &HypothesisSpec) -> Result<HypothesisReport, EngineError> {
        let plan = SprtPlan::new(spec.threshold, spec.theta, spec.alpha, spec.beta, spec.max_schedulers)?;
        let mut rows = Vec::new();
        let mut total_traces = 0u64;
        let mut deadlock_traces = 0u64;
        let mut outcome = None;

        for (i, sigma) in self.scheduler_ids().take(spec.max_schedulers as usize).enumerate() {
            let i = i as u64;
            let mut state = plan.fresh();
            let mut satisfied = 0u64;
            let mut decision = SprtDecision::Continue;
            let mut next = 0u64;
            let mut batch = SPRT_FIRST_BATCH;

            'sprt: while next < spec.trace_cap {
                let end = (next + batch).min(spec.trace_cap);
                let work = WorkBatch {
                    scheduler_index: i,
                    sigma,
                    traces: next..end,
                };
                for (sat, dead) in self.outcomes(&work)? {
                    plan.update(&mut state, sat);
                    satisfied += u64::from(sat);
                    deadlock_traces += u64::from(dead);
                    decision = plan.decide(&state);
                    if decision != SprtDecision::Continue {
                        break 'sprt;
                    }
                }
                next = end;
                batch = (batch * 2).min(SPRT_MAX_BATCH);
            }

            let traces = state.traces_seen();
            total_traces += traces;
            let verdict = match decision {
                SprtDecision::AcceptH0 => SprtVerdict::AcceptH0,
                SprtDecision::AcceptH1 => SprtVerdict::AcceptH1,
                SprtDecision::Continue => {
                    warn!("scheduler {i} ({}) undecided after {traces} traces", sigma.0);
                    SprtVerdict::Capped
                }
            };
            rows.push(SprtRow {
                scheduler_index: i,
                sigma,
                verdict,
                traces,
                satisfied,
            });

            let accepted = matches!(
                (verdict, spec.hypothesis),
                (SprtVerdict::AcceptH0, Hypothesis::H0) | (SprtVerdict::AcceptH1, Hypothesis::H1)
            );
            if accepted {
                outcome = Some(HypothesisOutcome::Accepted {
                    sigma,
                    scheduler_index: i,
                    traces_used: traces,
                    total_traces,
                });
                break;
            }
            if verdict != SprtVerdict::Capped {
                info!("scheduler {i} ({}) accepted the opposite hypothesis after {traces} traces", sigma.0);
            }
        }

        Ok(HypothesisReport {
            spec: *spec,
            plan,
            outcome: outcome.unwrap_or(HypothesisOutcome::NotAccepted { total_traces }),
            schedulers: rows,
            deadlock_traces,
        })
    }
}

fn chunked(range: Range<u64>) -> impl Iterator<Item = Range<u64>> {
    chunked_by(range, CHUNK)
}

fn chunked_by(range: Range<u64>, size: u64) -> impl Iterator<Item = Range<u64>> {
    let end = range.end;
    (range.start..end)
        .step_by(size as usize)
        .map(move |s| s..(s + size).min(end))
}
