//! Block-coordinate Frank-Wolfe solvers.
//!
//! One engine covers uniform or gap-proportional block sampling, plain
//! Frank-Wolfe, pairwise or away block steps, and an optional per-block
//! corner cache that skips the max oracle when a cached corner has a large
//! enough gap.

mod cache;
mod engine;
mod sampler;
pub mod steps;

pub use cache::{cache_lookup, cache_threshold, CacheDecision};
pub use engine::{
    lagrange_dual, PrimalState, SolveOutcome, Solver, SolverCounters, SolverState, StepAction, StepReport, StopReason,
};
pub use sampler::BlockSampler;

use crate::error::{Error, Result};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    Uniform,
    /// Proportional to the stale block-gap estimates.
    Gap,
    /// Proportional to exact block gaps, recomputed before every draw with
    /// one oracle call per block. For experiments only.
    ExactGap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Fw,
    Pairwise,
    Away,
}

/// Extra convergence checks driven by the stale gap estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StaleCheck {
    /// Only the periodic full gap passes can stop the run.
    Off,
    /// When the estimates sum to at most `tol`, run a full gap pass early
    /// (at most once per pass over the data).
    Verify,
    /// Stop as soon as the estimates sum to at most `tol`.
    Trust,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub sampling: Sampling,
    pub step_kind: StepKind,
    pub cache_enabled: bool,
    pub cache_f: f64,
    pub cache_nu: f64,
    /// Per-block cache size limit; active corners are never evicted.
    pub cache_max_size: Option<usize>,
    /// Full gap pass every this many passes over the data.
    pub gap_check_every: usize,
    pub tol: f64,
    pub max_passes: usize,
    pub seed: u64,
    pub stale_check: StaleCheck,
    /// Keep dual coefficients even when the step kind does not need them.
    pub track_duals: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.01,
            sampling: Sampling::Uniform,
            step_kind: StepKind::Fw,
            cache_enabled: false,
            cache_f: 0.25,
            cache_nu: 0.01,
            cache_max_size: None,
            gap_check_every: 10,
            tol: 1e-3,
            max_passes: 200,
            seed: 0,
            stale_check: StaleCheck::Verify,
            track_duals: false,
        }
    }
}

impl SolverConfig {
    pub fn needs_duals(&self) -> bool {
        self.step_kind != StepKind::Fw || self.cache_enabled || self.track_duals
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be positive and finite");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_passes == 0 || self.gap_check_every == 0 {
            return bad("max_passes and gap_check_every must be positive");
        }
        if n == 0 {
            return bad("dataset has no examples");
        }
        if self.cache_enabled {
            if !(self.cache_f > 0.0) || !(self.cache_nu > 0.0) {
                return bad("cache F and nu must be positive");
            }
            if self.cache_nu / n as f64 > 1.0 {
                return bad("cache nu / n must not exceed 1");
            }
            if self.cache_max_size == Some(0) {
                return bad("cache size limit must be positive");
            }
        }
        Ok(())
    }

    /// Short descriptor such as `pairwise-gap-cache`.
    pub fn method_name(&self) -> String {
        let mut s = format!("{}-{}", self.step_kind, self.sampling);
        if self.cache_enabled {
            s.push_str("-cache");
        }
        s
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Uniform => "uniform",
            Sampling::Gap => "gap",
            Sampling::ExactGap => "exactgap",
        })
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepKind::Fw => "fw",
            StepKind::Pairwise => "pairwise",
            StepKind::Away => "away",
        })
    }
}
