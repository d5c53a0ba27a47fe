//! Box constraints `l <= w <= u` on the weight vector.
//!
//! The solvers keep the untruncated accumulator `v = A alpha` (with its
//! per-block parts) and use `w = clamp(v, l, u)` as the primal point. The
//! multipliers of the box are implied by `v`: `beta_u = [v - u]_+` and
//! `beta_l = [l - v]_+`.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::models::StructuredModel;
use crate::objective::{block_gap, oracle_all};
use crate::solvers::steps::{fw_update, line_search, BlockUpdate};
use crate::state::{Corner, WeightState};

#[derive(Clone, Debug, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if let Some(j) = (0..lower.len()).find(|&j| !(lower[j] <= upper[j])) {
            return Err(Error::InfeasibleBounds(j));
        }
        Ok(BoxBounds { lower, upper })
    }

    pub fn unbounded(d: usize) -> Self {
        BoxBounds { lower: vec![f64::NEG_INFINITY; d], upper: vec![f64::INFINITY; d] }
    }

    /// Same interval on the coordinates selected by `mask`, free elsewhere.
    pub fn masked(mask: &[bool], lower: f64, upper: f64) -> Result<Self> {
        let lo = mask.iter().map(|&m| if m { lower } else { f64::NEG_INFINITY }).collect();
        let hi = mask.iter().map(|&m| if m { upper } else { f64::INFINITY }).collect();
        BoxBounds::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Componentwise projection of `v` onto the box.
pub fn box_truncate(v: &[f64], bounds: &BoxBounds) -> Vec<f64> {
    v.iter().zip(bounds.lower.iter().zip(&bounds.upper)).map(|(&x, (&l, &u))| x.max(l).min(u)).collect()
}

/// `([v - u]_+, [l - v]_+)`
pub fn implied_multipliers(v: &[f64], bounds: &BoxBounds) -> (Vec<f64>, Vec<f64>) {
    let beta_u = v.iter().zip(&bounds.upper).map(|(&x, &u)| (x - u).max(0.0)).collect();
    let beta_l = v.iter().zip(&bounds.lower).map(|(&x, &l)| (l - x).max(0.0)).collect();
    (beta_u, beta_l)
}

/// `sum_j beta_j c_j` skipping zero multipliers, so that infinite bounds
/// contribute nothing.
fn weighted_bound(beta: &[f64], bound: &[f64]) -> f64 {
    beta.iter().zip(bound).filter(|(&b, _)| b > 0.0).map(|(&b, &c)| b * c).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxWeightState {
    /// Untruncated accumulators `v`, `v_i`, `ell`, `ell_i`.
    pub v: WeightState,
    /// `clamp(v, l, u)`
    pub w: Vec<f64>,
    pub bounds: BoxBounds,
}

impl BoxWeightState {
    pub fn new(v: WeightState, bounds: BoxBounds) -> Result<Self> {
        if bounds.dim() != v.dim() {
            return Err(Error::DimensionMismatch { expected: v.dim(), got: bounds.dim() });
        }
        let w = box_truncate(&v.w, &bounds);
        Ok(BoxWeightState { v, w, bounds })
    }

    pub fn retruncate(&mut self) {
        self.w = box_truncate(&self.v.w, &self.bounds);
    }

    pub fn multipliers(&self) -> (Vec<f64>, Vec<f64>) {
        implied_multipliers(&self.v.w, &self.bounds)
    }

    /// `(beta_u^T (u - w), beta_l^T (w - l))`; both are zero by construction.
    pub fn slackness(&self) -> (f64, f64) {
        let (bu, bl) = self.multipliers();
        let upper =
            (0..self.w.len()).filter(|&j| bu[j] > 0.0).map(|j| bu[j] * (self.bounds.upper[j] - self.w[j])).sum();
        let lower =
            (0..self.w.len()).filter(|&j| bl[j] > 0.0).map(|j| bl[j] * (self.w[j] - self.bounds.lower[j])).sum();
        (upper, lower)
    }

    /// `f(alpha, beta) = lambda/2 |w|^2 - b^T alpha + lambda (beta_u^T u - beta_l^T l)`
    /// with the implied multipliers; the minimized dual objective.
    pub fn dual_objective(&self, lambda: f64) -> f64 {
        let (bu, bl) = self.multipliers();
        0.5 * lambda * norm_sq(&self.w) - self.v.ell
            + lambda * (weighted_bound(&bu, &self.bounds.upper) - weighted_bound(&bl, &self.bounds.lower))
    }

    pub fn is_feasible(&self) -> bool {
        (0..self.w.len()).all(|j| self.bounds.lower[j] <= self.w[j] && self.w[j] <= self.bounds.upper[j])
    }
}

/// Block Frank-Wolfe step in box mode toward corner `s`, which must come
/// from an oracle call at the truncated point. The step size uses the
/// `v`-direction against the truncated `w`.
pub fn box_bcfw_step(state: &mut BoxWeightState, i: usize, s: &Corner, lambda: f64) -> BlockUpdate {
    let n = state.v.num_blocks();
    let gap = block_gap(lambda, n, &state.w, &state.v.per_block_w[i], state.v.per_block_ell[i], &s.psi, s.loss);
    let update = fw_update(lambda, n, &state.v.per_block_w[i], state.v.per_block_ell[i], s, gap);
    state.v.set_block(i, update.w_i.clone(), update.ell_i);
    state.retruncate();
    update
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchStep {
    pub gamma: f64,
    /// Batch gap before the step.
    pub gap: f64,
}

/// Full Frank-Wolfe step: one oracle call per block at the truncated point,
/// a single step size for the aggregate corner.
pub fn box_fw_batch_step<M: StructuredModel + ?Sized>(
    state: &mut BoxWeightState,
    model: &M,
    lambda: f64,
) -> Result<BatchStep> {
    let n = model.num_examples();
    let d = state.w.len();
    let corners = oracle_all(model, &state.w)?;
    let block_corners: Vec<Corner> = corners.iter().map(Corner::from_oracle).collect();
    let mut v_s = vec![0.0; d];
    let mut ell_s = 0.0;
    for c in &block_corners {
        c.psi.axpy_into(1.0 / (lambda * n as f64), &mut v_s);
        ell_s += c.corner_ell(n);
    }
    state.v.resync();
    let dir: Vec<f64> = v_s.iter().zip(&state.v.w).map(|(s, v)| s - v).collect();
    let gap = -lambda * dot(&dir, &state.w) - state.v.ell + ell_s;
    let gamma = line_search(gap, lambda, n, norm_sq(&dir), 1.0);
    for (i, c) in block_corners.iter().enumerate() {
        let w_s = c.corner_w(lambda, n, d);
        let w_i: Vec<f64> = state.v.per_block_w[i].iter().zip(&w_s).map(|(a, b)| a + gamma * (b - a)).collect();
        let e = state.v.per_block_ell[i];
        state.v.per_block_w[i] = w_i;
        state.v.per_block_ell[i] = e + gamma * (c.corner_ell(n) - e);
    }
    state.v.resync();
    state.retruncate();
    Ok(BatchStep { gamma, gap })
}
