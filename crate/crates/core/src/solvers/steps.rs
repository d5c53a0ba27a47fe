//! Block step computations.
//!
//! Each step reads the evaluation point `w` (the truncated point in box
//! mode), the block's parts `(w_i, ell_i)` and one or two corners, and
//! returns the new block parts. Applying them to the accumulators and the
//! dual coefficients is the caller's job.

use crate::linalg::{norm_sq, SparseVec};
use crate::objective::block_gap;
use crate::state::{BlockCorners, Corner};

/// Directions shorter than this, measured in difference-map units
/// (`lambda n` times the weight-space length), count as zero.
pub const DEGENERATE_DIRECTION: f64 = 1e-12;

/// Both gaps of an away-step block at or below this skip the block.
pub const SKIP_GAP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockUpdate {
    pub w_i: Vec<f64>,
    pub ell_i: f64,
    pub gamma: f64,
    /// Upper clip bound the step size was limited to.
    pub gamma_max: f64,
}

impl BlockUpdate {
    pub fn at_bound(&self) -> bool {
        self.gamma > 0.0 && self.gamma == self.gamma_max
    }
}

/// Exact line search of the quadratic dual along a direction with
/// directional decrease `num` and squared weight-space length `dir_norm_sq`,
/// clipped to `[0, max]`. On a degenerate direction the objective is linear,
/// so the step goes to the bound whenever it decreases.
pub fn line_search(num: f64, lambda: f64, n: usize, dir_norm_sq: f64, max: f64) -> f64 {
    let lambda_n = lambda * n as f64;
    if dir_norm_sq * lambda_n * lambda_n < DEGENERATE_DIRECTION {
        return if num > 0.0 { max } else { 0.0 };
    }
    if num <= 0.0 {
        return 0.0;
    }
    (num / (lambda * dir_norm_sq)).min(max)
}

/// Frank-Wolfe step toward corner `s`, whose gap is `gap`.
pub fn fw_update(lambda: f64, n: usize, w_i: &[f64], ell_i: f64, s: &Corner, gap: f64) -> BlockUpdate {
    let w_s = s.corner_w(lambda, n, w_i.len());
    let ell_s = s.corner_ell(n);
    let dir: Vec<f64> = w_s.iter().zip(w_i).map(|(a, b)| a - b).collect();
    let gamma = line_search(gap, lambda, n, norm_sq(&dir), 1.0);
    if gamma == 1.0 {
        return BlockUpdate { w_i: w_s, ell_i: ell_s, gamma, gamma_max: 1.0 };
    }
    let new_w: Vec<f64> = w_i.iter().zip(&dir).map(|(a, d)| a + gamma * d).collect();
    BlockUpdate { w_i: new_w, ell_i: ell_i + gamma * (ell_s - ell_i), gamma, gamma_max: 1.0 }
}

/// Move up to `alpha_a` of mass from the away corner `a` to `s`.
#[allow(clippy::too_many_arguments)]
pub fn pairwise_update(
    lambda: f64,
    n: usize,
    w: &[f64],
    w_i: &[f64],
    ell_i: f64,
    s: &Corner,
    a: &Corner,
    alpha_a: f64,
) -> BlockUpdate {
    let nf = n as f64;
    let lambda_n = lambda * nf;
    let diff = SparseVec::sub(&s.psi, &a.psi);
    let dir_norm_sq = diff.norm_sq() / (lambda_n * lambda_n);
    let num = (s.hinge(w) - a.hinge(w)) / nf;
    let gamma = line_search(num, lambda, n, dir_norm_sq, alpha_a);
    let mut new_w = w_i.to_vec();
    diff.axpy_into(gamma / lambda_n, &mut new_w);
    let ell_d = (s.loss - a.loss) / nf;
    BlockUpdate { w_i: new_w, ell_i: ell_i + gamma * ell_d, gamma, gamma_max: alpha_a }
}

/// Gap of moving away from corner `a`:
/// `lambda (w_a - w_i)^T w + ell_i - ell_a`.
pub fn away_gap(lambda: f64, n: usize, w: &[f64], w_i: &[f64], ell_i: f64, a: &Corner) -> f64 {
    -block_gap(lambda, n, w, w_i, ell_i, &a.psi, a.loss)
}

/// Step away from corner `a` with mass `alpha_a < 1`, along `w_i - w_a`.
pub fn away_update(
    lambda: f64,
    n: usize,
    w_i: &[f64],
    ell_i: f64,
    a: &Corner,
    alpha_a: f64,
    gap_a: f64,
) -> BlockUpdate {
    let w_a = a.corner_w(lambda, n, w_i.len());
    let ell_a = a.corner_ell(n);
    let dir: Vec<f64> = w_i.iter().zip(&w_a).map(|(x, y)| x - y).collect();
    let gamma_max = alpha_a / (1.0 - alpha_a);
    let gamma = line_search(gap_a, lambda, n, norm_sq(&dir), gamma_max);
    let new_w: Vec<f64> = w_i.iter().zip(&dir).map(|(x, d)| x + gamma * d).collect();
    BlockUpdate { w_i: new_w, ell_i: ell_i + gamma * (ell_i - ell_a), gamma, gamma_max }
}

/// `alpha <- (1 - gamma) alpha + gamma e_s`.
pub fn fw_duals(block: &mut BlockCorners, s: &Corner, gamma: f64, stamp: u64) {
    if gamma == 0.0 {
        return;
    }
    let key = s.key();
    if gamma == 1.0 {
        block.scale_alphas(0.0);
        block.ensure(s, stamp).alpha = 1.0;
        return;
    }
    block.scale_alphas(1.0 - gamma);
    block.ensure(s, stamp);
    block.get_mut(&key).expect("just inserted").alpha += gamma;
}

/// Move `gamma` of mass from `a_key` to `s`; a step at the bound zeroes `a`.
pub fn pairwise_duals(block: &mut BlockCorners, s: &Corner, a_key: &str, update: &BlockUpdate, stamp: u64) {
    if update.gamma == 0.0 {
        return;
    }
    let a = block.get_mut(a_key).expect("away corner is active");
    if update.at_bound() {
        a.alpha = 0.0;
    } else {
        a.alpha -= update.gamma;
    }
    block.ensure(s, stamp).alpha += update.gamma;
}

/// `alpha <- (1 + gamma) alpha - gamma e_a`; a step at the bound zeroes `a`.
pub fn away_duals(block: &mut BlockCorners, a_key: &str, update: &BlockUpdate) {
    if update.gamma == 0.0 {
        return;
    }
    block.scale_alphas(1.0 + update.gamma);
    let a = block.get_mut(a_key).expect("away corner is active");
    if update.at_bound() {
        a.alpha = 0.0;
    } else {
        a.alpha -= update.gamma;
    }
}

/// Active corner with the smallest hinge score; ties go to the earliest
/// inserted.
pub fn away_corner<'a>(block: &'a BlockCorners, w: &[f64]) -> Option<(&'a Corner, f64)> {
    let mut best: Option<(&Corner, f64, f64)> = None;
    for e in block.active() {
        let h = e.corner.hinge(w);
        if best.is_none_or(|(_, bh, _)| h < bh) {
            best = Some((&e.corner, h, e.alpha));
        }
    }
    best.map(|(c, _, alpha)| (c, alpha))
}
