//! Primal and dual objectives and duality gaps.

use crate::error::Result;
use crate::linalg::{dot, norm_sq, SparseVec};
use crate::models::{OracleResult, StructuredModel};
use crate::state::{clamp_gap, DualBlockState, GapEstimates, WeightState};
use rayon::prelude::*;

/// Below this many blocks, gap passes run sequentially.
const PARALLEL_MIN_BLOCKS: usize = 32;

/// `lambda/2 |w|^2 + (1/n) sum_i max_y H_i(y; w)`
pub fn primal_objective<M: StructuredModel + ?Sized>(model: &M, lambda: f64, w: &[f64]) -> Result<f64> {
    let n = model.num_examples();
    let hinge: f64 = oracle_all(model, w)?.iter().map(|r| r.value).sum();
    Ok(0.5 * lambda * norm_sq(w) + hinge / n as f64)
}

/// Block gap `lambda (w_i - w_s)^T w - ell_i + ell_s` for the corner
/// `(psi_s, loss_s)`, with `w_s = psi_s / (lambda n)` and `ell_s = loss_s / n`.
pub fn block_gap(lambda: f64, n: usize, w: &[f64], w_i: &[f64], ell_i: f64, psi_s: &SparseVec, loss_s: f64) -> f64 {
    let nf = n as f64;
    lambda * dot(w_i, w) - psi_s.dot(w) / nf - ell_i + loss_s / nf
}

/// Block gap written through hinge scores:
/// `(1/n) (max_y H_i(y; w) - sum_{y in S_i} alpha_i(y) H_i(y; w))`.
pub fn block_gap_from_duals<M: StructuredModel + ?Sized>(
    model: &M,
    duals: &DualBlockState,
    i: usize,
    w: &[f64],
) -> Result<f64> {
    let n = model.num_examples() as f64;
    let best = model.max_oracle(i, w)?.value;
    let avg: f64 = duals.blocks[i].active().map(|e| e.alpha * e.corner.hinge(w)).sum();
    Ok((best - avg) / n)
}

/// Result of evaluating every block gap at one point.
#[derive(Clone, Debug)]
pub struct GapPass {
    pub per_block: Vec<f64>,
    pub total: f64,
    /// Primal objective at the evaluation point.
    pub primal: f64,
    pub corners: Vec<OracleResult>,
}

pub(crate) fn oracle_all<M: StructuredModel + ?Sized>(model: &M, w: &[f64]) -> Result<Vec<OracleResult>> {
    let n = model.num_examples();
    if n >= PARALLEL_MIN_BLOCKS {
        (0..n).into_par_iter().map(|i| model.max_oracle(i, w)).collect()
    } else {
        (0..n).map(|i| model.max_oracle(i, w)).collect()
    }
}

/// One max-oracle call per block at `eval_w`; block gaps use the per-block
/// parts of `weights`. In the unconstrained case `eval_w` is `weights.w`.
/// Gaps are clamped the same way as stored estimates.
pub fn evaluate_gaps<M: StructuredModel + ?Sized>(
    model: &M,
    lambda: f64,
    eval_w: &[f64],
    weights: &WeightState,
) -> Result<GapPass> {
    let n = model.num_examples();
    let corners = oracle_all(model, eval_w)?;
    let per_block: Vec<f64> = corners
        .iter()
        .enumerate()
        .map(|(i, r)| {
            clamp_gap(block_gap(lambda, n, eval_w, &weights.per_block_w[i], weights.per_block_ell[i], &r.psi, r.loss))
        })
        .collect();
    let total = per_block.iter().sum();
    let hinge: f64 = corners.iter().map(|r| r.value).sum();
    let primal = 0.5 * lambda * norm_sq(eval_w) + hinge / n as f64;
    Ok(GapPass { per_block, total, primal, corners })
}

/// Re-sync `w`, evaluate every block gap and store them with stamp `k`.
/// Returns the pass; its total equals `gaps.global`.
pub fn full_gap_pass<M: StructuredModel + ?Sized>(
    model: &M,
    lambda: f64,
    weights: &mut WeightState,
    gaps: &mut GapEstimates,
    k: u64,
) -> Result<GapPass> {
    weights.resync();
    let pass = evaluate_gaps(model, lambda, &weights.w, weights)?;
    gaps.set_all(&pass.per_block, k);
    Ok(pass)
}

/// Duality gap certified by a primal point `w` together with the loss term
/// `ell = b^T alpha` of a dual point with `A alpha = w`:
/// `lambda |w|^2 + (1/n) sum_i max_y H_i(y; w) - ell`.
pub fn certified_gap<M: StructuredModel + ?Sized>(model: &M, lambda: f64, w: &[f64], ell: f64) -> Result<f64> {
    let n = model.num_examples() as f64;
    let hinge: f64 = oracle_all(model, w)?.iter().map(|r| r.value).sum();
    Ok(lambda * norm_sq(w) + hinge / n - ell)
}
