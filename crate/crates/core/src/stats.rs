//! Sample sizes and stopping rules for testing many schedulers at once.
//!
//! Running `M` independent tests at level `x` each fails somewhere with
//! probability `1 - (1 - x)^M`, so every per-scheduler level is corrected to
//! `x_M = 1 - (1 - x)^(1/M)`. Roots are taken as `exp(ln(1 - x) / M)` in the
//! `expm1`/`ln_1p` form, and ceilings are applied last.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("{name} = {value} must lie strictly between 0 and 1")]
    OutOfUnitInterval { name: &'static str, value: f64 },
    #[error("number of schedulers must be at least 1")]
    NoSchedulers,
    #[error("indifference region {threshold} ± {theta} must lie strictly inside (0, 1) with theta > 0")]
    Indifference { threshold: f64, theta: f64 },
}

fn unit(name: &'static str, value: f64) -> Result<f64, StatsError> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(StatsError::OutOfUnitInterval { name, value })
    }
}

/// `1 - (1 - x)^(1/m)`.
pub fn per_test_level(x: f64, m: u64) -> f64 {
    -f64::exp_m1(f64::ln_1p(-x) / m as f64)
}

/// Samples for `P(|p̂ - p| >= ε) <= δ` on one estimate: `⌈(ln 2 - ln δ) / 2ε²⌉`.
pub fn chernoff_single_n(epsilon: f64, delta: f64) -> Result<u64, StatsError> {
    let epsilon = unit("epsilon", epsilon)?;
    let delta = unit("delta", delta)?;
    Ok(((2f64.ln() - delta.ln()) / (2.0 * epsilon * epsilon)).ceil() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    /// Bounds only the upper (or only the lower) deviation of every estimate.
    OneSided,
    /// Bounds `|p̂_i - p_i|` for every estimate.
    TwoSided,
}

/// Samples per scheduler so that all `m` estimates are within `ε` with
/// probability at least `1 - δ`.
pub fn chernoff_multi_n(epsilon: f64, delta: f64, m: u64, sides: Sidedness) -> Result<u64, StatsError> {
    let epsilon = unit("epsilon", epsilon)?;
    let delta = unit("delta", delta)?;
    if m == 0 {
        return Err(StatsError::NoSchedulers);
    }
    let per_test = per_test_level(delta, m);
    let numerator = match sides {
        Sidedness::OneSided => -per_test.ln(),
        Sidedness::TwoSided => 2f64.ln() - per_test.ln(),
    };
    Ok((numerator / (2.0 * epsilon * epsilon)).ceil() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernoffPlan {
    pub epsilon: f64,
    pub delta: f64,
    pub schedulers: u64,
    pub samples: u64,
}

impl ChernoffPlan {
    pub fn two_sided(epsilon: f64, delta: f64, schedulers: u64) -> Result<Self, StatsError> {
        Ok(ChernoffPlan {
            epsilon,
            delta,
            schedulers,
            samples: chernoff_multi_n(epsilon, delta, schedulers, Sidedness::TwoSided)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SprtLevels {
    pub alpha_m: f64,
    pub beta_m: f64,
    /// H1 is accepted once the ratio reaches this.
    pub accept_a: f64,
    /// H0 is accepted once the ratio falls to this.
    pub accept_b: f64,
}

pub fn sprt_levels(alpha: f64, beta: f64, m: u64) -> Result<SprtLevels, StatsError> {
    let alpha = unit("alpha", alpha)?;
    let beta = unit("beta", beta)?;
    if m == 0 {
        return Err(StatsError::NoSchedulers);
    }
    let alpha_m = per_test_level(alpha, m);
    let beta_m = per_test_level(beta, m);
    Ok(SprtLevels {
        alpha_m,
        beta_m,
        accept_a: (1.0 - beta_m) / alpha_m,
        accept_b: beta_m / (1.0 - alpha_m),
    })
}

/// Wald's test of `H0: P >= p + θ` against `H1: P <= p - θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SprtPlan {
    pub threshold: f64,
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub schedulers: u64,
    pub p0: f64,
    pub p1: f64,
    pub levels: SprtLevels,
}

impl SprtPlan {
    pub fn new(threshold: f64, theta: f64, alpha: f64, beta: f64, schedulers: u64) -> Result<Self, StatsError> {
        let p0 = threshold + theta;
        let p1 = threshold - theta;
        if !(theta > 0.0 && p1 > 0.0 && p0 < 1.0) {
            return Err(StatsError::Indifference { threshold, theta });
        }
        Ok(SprtPlan {
            threshold,
            theta,
            alpha,
            beta,
            schedulers,
            p0,
            p1,
            levels: sprt_levels(alpha, beta, schedulers)?,
        })
    }

    pub fn fresh(&self) -> SprtState {
        SprtState::default()
    }

    pub fn update(&self, state: &mut SprtState, satisfied: bool) {
        state.update(satisfied, self.p0, self.p1);
    }

    pub fn decide(&self, state: &SprtState) -> SprtDecision {
        state.decide(self.levels.accept_a, self.levels.accept_b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SprtDecision {
    AcceptH1,
    AcceptH0,
    Continue,
}

/// Likelihood ratio `Π (p1/p0)^[sat] ((1-p1)/(1-p0))^[unsat]`, stored as a log.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SprtState {
    log_ratio: f64,
    traces_seen: u64,
}

impl SprtState {
    pub fn ratio(&self) -> f64 {
        self.log_ratio.exp()
    }

    pub fn log_ratio(&self) -> f64 {
        self.log_ratio
    }

    pub fn traces_seen(&self) -> u64 {
        self.traces_seen
    }

    pub fn update(&mut self, satisfied: bool, p0: f64, p1: f64) {
        self.log_ratio += if satisfied {
            p1.ln() - p0.ln()
        } else {
            f64::ln_1p(-p1) - f64::ln_1p(-p0)
        };
        self.traces_seen += 1;
    }

    pub fn decide(&self, accept_a: f64, accept_b: f64) -> SprtDecision {
        if self.log_ratio >= accept_a.ln() {
            SprtDecision::AcceptH1
        } else if self.log_ratio <= accept_b.ln() {
            SprtDecision::AcceptH0
        } else {
            SprtDecision::Continue
        }
    }
}
