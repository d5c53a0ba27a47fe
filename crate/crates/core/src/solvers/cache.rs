//! Cache-hit test on the per-block corner store.

use crate::objective::block_gap;
use crate::state::{BlockCorners, Corner};

#[derive(Clone, Debug, PartialEq)]
pub enum CacheDecision {
    Hit {
        corner: Corner,
        /// Gap of the cached corner at the current point.
        gap: f64,
        threshold: f64,
    },
    Miss,
}

/// `max(F g_i, (nu / n) g_global)`
pub fn cache_threshold(cache_f: f64, cache_nu: f64, n: usize, g_i: f64, g_global: f64) -> f64 {
    (cache_f * g_i).max(cache_nu / n as f64 * g_global)
}

/// Best cached corner by hinge score; a hit when its gap clears the
/// threshold. An empty store always misses.
#[allow(clippy::too_many_arguments)]
pub fn cache_lookup(
    block: &BlockCorners,
    lambda: f64,
    n: usize,
    w: &[f64],
    w_i: &[f64],
    ell_i: f64,
    threshold: f64,
) -> CacheDecision {
    let mut best: Option<(&Corner, f64)> = None;
    for e in block.entries() {
        let h = e.corner.hinge(w);
        if best.is_none_or(|(_, bh)| h > bh) {
            best = Some((&e.corner, h));
        }
    }
    let Some((corner, _)) = best else {
        return CacheDecision::Miss;
    };
    let gap = block_gap(lambda, n, w, w_i, ell_i, &corner.psi, corner.loss);
    if gap >= threshold {
        CacheDecision::Hit { corner: corner.clone(), gap, threshold }
    } else {
        CacheDecision::Miss
    }
}
