//! Block selection: uniform or proportional to stale gap estimates.

use super::Sampling;
use crate::state::GapEstimates;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct BlockSampler {
    mode: Sampling,
    rng: ChaCha8Rng,
}

impl BlockSampler {
    pub fn new(mode: Sampling, seed: u64) -> Self {
        BlockSampler { mode, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn mode(&self) -> Sampling {
        self.mode
    }

    /// Blocks whose estimate is still `+inf` come first, uniformly among
    /// themselves. Otherwise blocks are drawn proportionally to their
    /// estimates (negatives count as zero), falling back to uniform when all
    /// are zero.
    pub fn sample(&mut self, gaps: &GapEstimates) -> usize {
        let n = gaps.g.len();
        assert!(n > 0, "cannot sample from zero blocks");
        if self.mode == Sampling::Uniform {
            return self.rng.gen_range(0..n);
        }
        let fresh: Vec<usize> = (0..n).filter(|&i| gaps.g[i] == f64::INFINITY).collect();
        if !fresh.is_empty() {
            return fresh[self.rng.gen_range(0..fresh.len())];
        }
        let weight = |g: f64| if g > 0.0 { g } else { 0.0 };
        let total: f64 = gaps.g.iter().map(|&g| weight(g)).sum();
        if !(total > 0.0) {
            return self.rng.gen_range(0..n);
        }
        let target = self.rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &g) in gaps.g.iter().enumerate() {
            let wgt = weight(g);
            if wgt > 0.0 {
                acc += wgt;
                last_positive = i;
                if target < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}
