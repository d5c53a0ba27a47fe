//! Primal accumulators, dual active sets and gap estimates.

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm_sq, sum_rows, SparseVec};
use crate::models::{hinge_value, Labeling, OracleResult, StructuredModel};
use indexmap::IndexMap;

/// Gaps in `[-GAP_CLAMP, 0)` are rounding noise and are stored as zero.
pub const GAP_CLAMP: f64 = 1e-10;

pub fn clamp_gap(g: f64) -> f64 {
    if (-GAP_CLAMP..0.0).contains(&g) {
        0.0
    } else {
        g
    }
}

/// `w = sum_i w_i` and `ell = sum_i ell_i`, where block `i` contributes
/// `w_i = sum_y alpha_i(y) psi_i(y) / (lambda n)` and
/// `ell_i = sum_y alpha_i(y) L_i(y) / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightState {
    pub w: Vec<f64>,
    pub per_block_w: Vec<Vec<f64>>,
    pub ell: f64,
    pub per_block_ell: Vec<f64>,
}

impl WeightState {
    pub fn zeros(n: usize, d: usize) -> Self {
        WeightState { w: vec![0.0; d], per_block_w: vec![vec![0.0; d]; n], ell: 0.0, per_block_ell: vec![0.0; n] }
    }

    pub fn num_blocks(&self) -> usize {
        self.per_block_w.len()
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Recompute the sums from the per-block parts.
    pub fn resync(&mut self) {
        self.w = sum_rows(&self.per_block_w, self.w.len());
        self.ell = self.per_block_ell.iter().sum();
    }

    /// Replace block `i` and move the sums by the difference.
    pub fn set_block(&mut self, i: usize, w_i: Vec<f64>, ell_i: f64) {
        for ((w, new), old) in self.w.iter_mut().zip(&w_i).zip(&self.per_block_w[i]) {
            *w += new - old;
        }
        self.ell += ell_i - self.per_block_ell[i];
        self.per_block_w[i] = w_i;
        self.per_block_ell[i] = ell_i;
    }

    /// `f(alpha) = lambda/2 |w|^2 - ell`, the minimized dual objective.
    pub fn dual_objective(&self, lambda: f64) -> f64 {
        0.5 * lambda * norm_sq(&self.w) - self.ell
    }
}

/// A vertex of a block simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Corner {
    pub labeling: Labeling,
    pub psi: SparseVec,
    /// Unscaled task loss `L_i(y)`.
    pub loss: f64,
}

impl Corner {
    pub fn from_oracle(r: &OracleResult) -> Self {
        Corner { labeling: r.labeling.clone(), psi: r.psi.clone(), loss: r.loss }
    }

    pub fn ground_truth<M: StructuredModel + ?Sized>(model: &M, i: usize) -> Result<Self> {
        let labeling = model.ground_truth(i).clone();
        let loss = model.loss(i, &labeling)?;
        if loss != 0.0 {
            return Err(Error::NonzeroGroundTruthLoss { example: i, loss });
        }
        Ok(Corner { psi: model.feature_diff(i, &labeling)?, labeling, loss })
    }

    /// Dense `psi / (lambda n)`.
    pub fn corner_w(&self, lambda: f64, n: usize, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        self.psi.axpy_into(1.0 / (lambda * n as f64), &mut out);
        out
    }

    /// `L / n`
    pub fn corner_ell(&self, n: usize) -> f64 {
        self.loss / n as f64
    }

    pub fn hinge(&self, w: &[f64]) -> f64 {
        hinge_value(&self.psi, self.loss, w)
    }

    pub fn key(&self) -> String {
        self.labeling.key()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CornerEntry {
    pub corner: Corner,
    /// Dual coefficient; zero for cache-only entries.
    pub alpha: f64,
    /// Iteration of the last insert or cache hit.
    pub last_used: u64,
}

/// Per-block corner store. Entries with positive `alpha` form the active
/// set; when caching is on, entries with zero `alpha` stay as cached corners.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlockCorners {
    entries: IndexMap<String, CornerEntry>,
}

impl BlockCorners {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CornerEntry> {
        self.entries.values()
    }

    pub fn active(&self) -> impl Iterator<Item = &CornerEntry> {
        self.entries.values().filter(|e| e.alpha > 0.0)
    }

    pub fn get(&self, key: &str) -> Option<&CornerEntry> {
        self.entries.get(key)
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut CornerEntry> {
        self.entries.get_mut(key)
    }

    pub fn alpha(&self, key: &str) -> f64 {
        self.entries.get(key).map_or(0.0, |e| e.alpha)
    }

    /// Insert with zero mass unless already present.
    pub fn ensure(&mut self, corner: &Corner, stamp: u64) -> &mut CornerEntry {
        self.entries.entry(corner.key()).or_insert_with(|| CornerEntry {
            corner: corner.clone(),
            alpha: 0.0,
            last_used: stamp,
        })
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.shift_remove(key);
    }

    pub fn scale_alphas(&mut self, factor: f64) {
        for e in self.entries.values_mut() {
            e.alpha *= factor;
        }
    }

    /// Drop zero-mass entries (used when there is no cache to keep them).
    pub fn prune_inactive(&mut self) {
        self.entries.retain(|_, e| e.alpha > 0.0);
    }

    /// Evict least recently used zero-mass entries down to `max_len`.
    pub fn evict_to(&mut self, max_len: usize) {
        while self.entries.len() > max_len {
            let victim = self
                .entries
                .iter()
                .filter(|(_, e)| e.alpha == 0.0)
                .min_by_key(|(_, e)| e.last_used)
                .map(|(k, _)| k.clone());
            match victim {
                Some(k) => self.remove(&k),
                None => break,
            }
        }
    }

    pub fn alpha_sum(&self) -> f64 {
        self.entries.values().map(|e| e.alpha).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualBlockState {
    pub blocks: Vec<BlockCorners>,
}

impl DualBlockState {
    /// All mass on the ground truth of every block.
    pub fn at_ground_truth<M: StructuredModel + ?Sized>(model: &M) -> Result<Self> {
        let blocks = (0..model.num_examples())
            .map(|i| {
                let mut b = BlockCorners::default();
                b.ensure(&Corner::ground_truth(model, i)?, 0).alpha = 1.0;
                Ok(b)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DualBlockState { blocks })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn ground_truth_present<M: StructuredModel + ?Sized>(&self, model: &M, i: usize) -> bool {
        self.blocks[i].alpha(&model.ground_truth(i).key()) > 0.0
    }

    /// `w_i` rebuilt from the coefficients.
    pub fn block_weight(&self, i: usize, lambda: f64, d: usize) -> Vec<f64> {
        let n = self.blocks.len();
        let mut out = vec![0.0; d];
        for e in self.blocks[i].active() {
            e.corner.psi.axpy_into(e.alpha / (lambda * n as f64), &mut out);
        }
        out
    }

    /// `ell_i` rebuilt from the coefficients.
    pub fn block_ell(&self, i: usize) -> f64 {
        let n = self.blocks.len();
        self.blocks[i].active().map(|e| e.alpha * e.corner.corner_ell(n)).sum()
    }

    /// `b^T alpha`
    pub fn loss_term(&self) -> f64 {
        (0..self.blocks.len()).map(|i| self.block_ell(i)).sum()
    }

    /// Largest deviation of a block's coefficient sum from one.
    pub fn simplex_error(&self) -> f64 {
        self.blocks.iter().map(|b| (b.alpha_sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Weight state implied by the coefficients.
    pub fn to_weights(&self, lambda: f64, d: usize) -> WeightState {
        let n = self.blocks.len();
        let mut ws = WeightState::zeros(n, d);
        for i in 0..n {
            ws.per_block_w[i] = self.block_weight(i, lambda, d);
            ws.per_block_ell[i] = self.block_ell(i);
        }
        ws.resync();
        ws
    }
}

/// `w(alpha) = A alpha`
pub fn weight_from_duals(duals: &DualBlockState, lambda: f64, d: usize) -> Vec<f64> {
    let mut w = vec![0.0; d];
    for i in 0..duals.num_blocks() {
        axpy(1.0, &duals.block_weight(i, lambda, d), &mut w);
    }
    w
}

/// `f(alpha) = lambda/2 |A alpha|^2 - b^T alpha`
pub fn dual_objective(duals: &DualBlockState, lambda: f64, d: usize) -> f64 {
    0.5 * lambda * norm_sq(&weight_from_duals(duals, lambda, d)) - duals.loss_term()
}

/// Last computed block gaps with the iteration they were computed at.
#[derive(Clone, Debug, PartialEq)]
pub struct GapEstimates {
    pub g: Vec<f64>,
    pub stamps: Vec<u64>,
    /// Iteration of the last full gap pass.
    pub k0: u64,
    /// Total from the last full gap pass, `+inf` before the first one.
    pub global: f64,
}

impl GapEstimates {
    pub fn fresh(n: usize) -> Self {
        GapEstimates { g: vec![f64::INFINITY; n], stamps: vec![0; n], k0: 0, global: f64::INFINITY }
    }

    pub fn set(&mut self, i: usize, gap: f64, stamp: u64) {
        self.g[i] = clamp_gap(gap);
        self.stamps[i] = stamp;
    }

    /// Store a complete set of block gaps.
    pub fn set_all(&mut self, gaps: &[f64], stamp: u64) {
        for (i, &g) in gaps.iter().enumerate() {
            self.set(i, g, stamp);
        }
        self.k0 = stamp;
        self.global = self.g.iter().sum();
    }

    pub fn sum(&self) -> f64 {
        self.g.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.g.iter().all(|g| g.is_finite())
    }
}
