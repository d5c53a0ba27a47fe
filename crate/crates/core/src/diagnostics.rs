//! Convergence traces and the measurements used to study them:
//! non-uniformity of gap vectors, curvature bounds, pairwise gaps and the
//! per-step descent inequality.

use crate::error::{Error, Result};
use crate::linalg::SparseVec;
use crate::models::StructuredModel;
use crate::state::DualBlockState;
use std::fmt::Write as _;

pub const TRACE_HEADER: &str = "pass,oracle_calls,cache_hits,gap,primal,dual,time_s";

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    /// Block iterations divided by `n`.
    pub pass: f64,
    pub oracle_calls: u64,
    pub cache_hits: u64,
    pub gap: f64,
    pub primal: f64,
    pub dual: Option<f64>,
    pub time_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub method: String,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
}

/// Shortest text that parses back to the same double; never locale dependent.
pub fn format_number(x: f64) -> String {
    format!("{x:?}")
}

impl ConvergenceTrace {
    pub fn new(method: impl Into<String>, seed: u64) -> Self {
        ConvergenceTrace { method: method.into(), seed, records: Vec::new() }
    }

    pub fn push(&mut self, rec: TraceRecord) {
        if let Some(last) = self.records.last() {
            debug_assert!(rec.pass > last.pass && rec.oracle_calls >= last.oracle_calls);
        }
        self.records.push(rec);
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// CSV text. With `wall_time` off the time column is written as `0` so
    /// that reruns are byte-identical.
    pub fn to_csv(&self, wall_time: bool) -> String {
        let mut s = String::from(TRACE_HEADER);
        s.push('\n');
        for r in &self.records {
            let dual = r.dual.map(format_number).unwrap_or_default();
            let time = if wall_time { format_number(r.time_s) } else { "0".to_string() };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                format_number(r.pass),
                r.oracle_calls,
                r.cache_hits,
                format_number(r.gap),
                format_number(r.primal),
                dual,
                time
            );
        }
        s
    }
}

/// `sqrt(1 + n^2 Var[p])` for `p = x / |x|_1`, with the population variance.
pub fn nonuniformity_chi(x: &[f64]) -> Result<f64> {
    let total: f64 = x.iter().sum();
    if x.is_empty() || x.iter().any(|&v| v < 0.0 || !v.is_finite()) || !(total > 0.0) {
        return Err(Error::InvalidWeights);
    }
    let n = x.len() as f64;
    let mean = 1.0 / n;
    let var = x.iter().map(|&v| (v / total - mean).powi(2)).sum::<f64>() / n;
    Ok((1.0 + n * n * var).sqrt())
}

/// `chi(gaps)^3 / chi(curvatures)`
pub fn improvement_factor(gaps: &[f64], curvatures: &[f64]) -> Result<f64> {
    Ok(nonuniformity_chi(gaps)?.powi(3) / nonuniformity_chi(curvatures)?)
}

/// `4 R^2 / (lambda n^2)` with `R` the largest observed `|psi_i(y)|`.
pub fn curvature_bound<'a>(lambda: f64, n: usize, observed: impl IntoIterator<Item = &'a SparseVec>) -> Result<f64> {
    let mut radius_sq: Option<f64> = None;
    for psi in observed {
        let r = psi.norm_sq();
        radius_sq = Some(radius_sq.map_or(r, |m: f64| m.max(r)));
    }
    let r2 = radius_sq.ok_or_else(|| Error::Degenerate("no observed corners".into()))?;
    Ok(curvature_from_radius(r2.sqrt(), lambda, n))
}

pub fn curvature_from_radius(radius: f64, lambda: f64, n: usize) -> f64 {
    let nf = n as f64;
    4.0 * radius * radius / (lambda * nf * nf)
}

/// Exact block curvature `max_{y,y'} |psi_i(y) - psi_i(y')|^2 / (lambda n^2)`
/// for models that can list their labels.
pub fn exact_curvature<M: StructuredModel + ?Sized>(model: &M, i: usize, lambda: f64) -> Result<Option<f64>> {
    let Some(labels) = model.enumerate(i) else {
        return Ok(None);
    };
    let psis = labels.iter().map(|y| model.feature_diff(i, y)).collect::<Result<Vec<_>>>()?;
    let mut best: f64 = 0.0;
    for a in 0..psis.len() {
        for b in a + 1..psis.len() {
            best = best.max(SparseVec::sub(&psis[a], &psis[b]).norm_sq());
        }
    }
    let nf = model.num_examples() as f64;
    Ok(Some(best / (lambda * nf * nf)))
}

/// Pairwise Frank-Wolfe block gap
/// `(1/n) (max_y H_i(y; w) - min_{y in S_i} H_i(y; w))`.
pub fn pfw_block_gap<M: StructuredModel + ?Sized>(
    model: &M,
    duals: &DualBlockState,
    i: usize,
    w: &[f64],
) -> Result<f64> {
    let worst = duals.blocks[i].active().map(|e| e.corner.hinge(w)).fold(f64::INFINITY, f64::min);
    if worst == f64::INFINITY {
        return Err(Error::EmptyActiveSet(i));
    }
    let best = model.max_oracle(i, w)?.value;
    Ok((best - worst) / model.num_examples() as f64)
}

/// Sum of the pairwise block gaps.
pub fn pfw_gap<M: StructuredModel + ?Sized>(model: &M, duals: &DualBlockState, w: &[f64]) -> Result<f64> {
    (0..model.num_examples()).map(|i| pfw_block_gap(model, duals, i, w)).sum()
}

/// One executed block step, for checking the descent inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub block: usize,
    pub f_before: f64,
    pub f_after: f64,
    pub gap: f64,
}

pub const DESCENT_STEPS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const DESCENT_TOL: f64 = 1e-9;

/// `f_after <= f_before - g t + t^2 C / 2` for every `t` in
/// [`DESCENT_STEPS`], up to [`DESCENT_TOL`].
pub fn descent_check(rec: &StepRecord, curvature: f64) -> bool {
    DESCENT_STEPS.iter().all(|&t| rec.f_after <= rec.f_before - t * rec.gap + 0.5 * t * t * curvature + DESCENT_TOL)
}
