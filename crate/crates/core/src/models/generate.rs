//! Synthetic chain data from a planted model.
//!
//! Each label owns a binary prototype over the unary features; a position
//! with label `l` activates the prototype of `l` with every bit flipped
//! independently with probability `noise`. Labels follow a random Markov
//! chain. With `noise = 0` the prototypes are distinct, so a nearest-prototype
//! rule (which is linear in the emission and bias weights) labels every
//! position correctly.

use super::{ChainInstance, ChainModel, Labeling};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainGenConfig {
    pub n: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub d_u: usize,
    pub num_labels: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for ChainGenConfig {
    fn default() -> Self {
        ChainGenConfig { n: 100, t_min: 6, t_max: 10, d_u: 16, num_labels: 5, noise: 0.1, seed: 0 }
    }
}

pub fn gen_synthetic_chain(cfg: &ChainGenConfig) -> Result<ChainModel> {
    if cfg.n == 0 || cfg.t_min == 0 || cfg.t_max < cfg.t_min || cfg.d_u == 0 || cfg.num_labels == 0 {
        return Err(Error::Config("generator sizes must be positive with t_min <= t_max".into()));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::Config("noise must lie in [0, 1]".into()));
    }
    let distinct_possible = cfg.d_u >= 63 || (1u64 << cfg.d_u) >= cfg.num_labels as u64;
    if !distinct_possible {
        return Err(Error::Config("too few unary features for distinct label prototypes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut prototypes: Vec<Vec<bool>> = Vec::with_capacity(cfg.num_labels);
    while prototypes.len() < cfg.num_labels {
        let p: Vec<bool> = (0..cfg.d_u).map(|_| rng.gen_bool(0.3)).collect();
        if !prototypes.contains(&p) {
            prototypes.push(p);
        }
    }
    let transitions: Vec<Vec<f64>> = (0..cfg.num_labels)
        .map(|a| {
            let raw: Vec<f64> = (0..cfg.num_labels)
                .map(|b| {
                    let stay = if a == b { 1.5 } else { 0.0 };
                    (stay + 2.0 * rng.gen::<f64>()).exp()
                })
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|r| r / total).collect()
        })
        .collect();

    let mut instances = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let t_len = rng.gen_range(cfg.t_min..=cfg.t_max);
        let mut labels: Vec<usize> = Vec::with_capacity(t_len);
        let mut features = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let l = if t == 0 { rng.gen_range(0..cfg.num_labels) } else { draw(&transitions[labels[t - 1]], &mut rng) };
            let active: Vec<usize> = (0..cfg.d_u)
                .filter(|&u| {
                    let flip = cfg.noise > 0.0 && rng.gen_bool(cfg.noise);
                    prototypes[l][u] != flip
                })
                .collect();
            labels.push(l);
            features.push(active);
        }
        instances.push(ChainInstance { features, labels: Labeling(labels) });
    }
    ChainModel::new(cfg.d_u, cfg.num_labels, instances)
}

fn draw(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}
