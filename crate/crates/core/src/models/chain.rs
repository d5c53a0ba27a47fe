//! Chain-structured sequence labeling with a Viterbi max oracle.
//!
//! Weight layout, for `d_u` unary features and `L` labels:
//! emission `[l * d_u + u]`, then transition `[d_u*L + prev*L + next]`, then
//! three bias counters per label `[d_u*L + L*L + 3*l + k]` with
//! `k = 0` (every position), `1` (first position), `2` (last position).

use super::{check_dim, Labeling, OracleMode, OracleResult, StructuredModel};
use crate::error::{Error, Result};
use crate::linalg::SparseVec;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainInstance {
    /// Active unary feature indices per position.
    pub features: Vec<Vec<usize>>,
    pub labels: Labeling,
}

impl ChainInstance {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct ChainModel {
    d_u: usize,
    num_labels: usize,
    instances: Vec<ChainInstance>,
}

fn emission(d_u: usize, l: usize, u: usize) -> usize {
    l * d_u + u
}

fn transition(d_u: usize, nl: usize, prev: usize, next: usize) -> usize {
    d_u * nl + prev * nl + next
}

fn bias(d_u: usize, nl: usize, l: usize, k: usize) -> usize {
    d_u * nl + nl * nl + 3 * l + k
}

fn check_labeling(inst: &ChainInstance, y: &Labeling, num_labels: usize) -> Result<()> {
    if y.len() != inst.len() {
        return Err(Error::LengthMismatch { expected: inst.len(), got: y.len() });
    }
    if let Some(&label) = y.0.iter().find(|&&l| l >= num_labels) {
        return Err(Error::LabelOutOfRange { label, num_labels });
    }
    Ok(())
}

/// Joint feature map `phi(x, y)` of one chain.
pub fn chain_feature_map(inst: &ChainInstance, y: &Labeling, d_u: usize, num_labels: usize) -> Result<SparseVec> {
    check_labeling(inst, y, num_labels)?;
    let t_len = inst.len();
    let mut pairs = Vec::new();
    for (t, &l) in y.0.iter().enumerate() {
        for &u in &inst.features[t] {
            pairs.push((emission(d_u, l, u), 1.0));
        }
        pairs.push((bias(d_u, num_labels, l, 0), 1.0));
        if t == 0 {
            pairs.push((bias(d_u, num_labels, l, 1), 1.0));
        }
        if t + 1 == t_len {
            pairs.push((bias(d_u, num_labels, l, 2), 1.0));
        }
        if t > 0 {
            pairs.push((transition(d_u, num_labels, y.0[t - 1], l), 1.0));
        }
    }
    Ok(SparseVec::from_pairs(pairs))
}

/// Normalized Hamming distance between the true labels and `y`.
pub fn chain_loss(inst: &ChainInstance, y: &Labeling) -> Result<f64> {
    if y.len() != inst.len() {
        return Err(Error::LengthMismatch { expected: inst.len(), got: y.len() });
    }
    let wrong = inst.labels.0.iter().zip(&y.0).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / inst.len() as f64)
}

impl ChainModel {
    pub fn new(d_u: usize, num_labels: usize, instances: Vec<ChainInstance>) -> Result<Self> {
        if d_u == 0 || num_labels == 0 {
            return Err(Error::Config("chain model needs d_u >= 1 and at least one label".into()));
        }
        for inst in &instances {
            if inst.is_empty() {
                return Err(Error::Config("chain of length zero".into()));
            }
            if inst.features.len() != inst.len() {
                return Err(Error::LengthMismatch { expected: inst.len(), got: inst.features.len() });
            }
            check_labeling(inst, &inst.labels, num_labels)?;
            if inst.features.iter().flatten().any(|&u| u >= d_u) {
                return Err(Error::Config(format!("unary feature index outside [0, {d_u})")));
            }
        }
        Ok(ChainModel { d_u, num_labels, instances })
    }

    pub fn d_u(&self) -> usize {
        self.d_u
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn instances(&self) -> &[ChainInstance] {
        &self.instances
    }

    pub fn feature_map(&self, i: usize, y: &Labeling) -> Result<SparseVec> {
        chain_feature_map(self.instance(i)?, y, self.d_u, self.num_labels)
    }

    fn instance(&self, i: usize) -> Result<&ChainInstance> {
        self.instances.get(i).ok_or(Error::ExampleOutOfRange(i))
    }

    /// Highest-scoring labeling under `w`, optionally adding the per-position
    /// Hamming loss. Ties go to the smallest label at every backpointer and at
    /// the final position.
    pub fn viterbi(&self, i: usize, w: &[f64], with_loss: bool) -> Result<Labeling> {
        check_dim(self.feature_dim(), w)?;
        let inst = self.instance(i)?;
        let (d_u, nl) = (self.d_u, self.num_labels);
        let t_len = inst.len();
        let unary = |t: usize, l: usize| -> f64 {
            let mut s: f64 = inst.features[t].iter().map(|&u| w[emission(d_u, l, u)]).sum();
            s += w[bias(d_u, nl, l, 0)];
            if t == 0 {
                s += w[bias(d_u, nl, l, 1)];
            }
            if t + 1 == t_len {
                s += w[bias(d_u, nl, l, 2)];
            }
            if with_loss && inst.labels.0[t] != l {
                s += 1.0 / t_len as f64;
            }
            s
        };

        let mut score: Vec<f64> = (0..nl).map(|l| unary(0, l)).collect();
        let mut back = vec![vec![0usize; nl]; t_len];
        for t in 1..t_len {
            let mut next = vec![0.0; nl];
            for l in 0..nl {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for p in 0..nl {
                    let s = score[p] + w[transition(d_u, nl, p, l)];
                    if s > best {
                        best = s;
                        arg = p;
                    }
                }
                back[t][l] = arg;
                next[l] = best + unary(t, l);
            }
            score = next;
        }
        let mut last = 0;
        for l in 1..nl {
            if score[l] > score[last] {
                last = l;
            }
        }
        let mut y = vec![0; t_len];
        y[t_len - 1] = last;
        for t in (1..t_len).rev() {
            y[t - 1] = back[t][y[t]];
        }
        Ok(Labeling(y))
    }
}

impl StructuredModel for ChainModel {
    fn num_examples(&self) -> usize {
        self.instances.len()
    }

    fn feature_dim(&self) -> usize {
        self.d_u * self.num_labels + self.num_labels * self.num_labels + 3 * self.num_labels
    }

    fn ground_truth(&self, i: usize) -> &Labeling {
        &self.instances[i].labels
    }

    fn feature_diff(&self, i: usize, y: &Labeling) -> Result<SparseVec> {
        let truth = self.feature_map(i, &self.instance(i)?.labels)?;
        let other = self.feature_map(i, y)?;
        Ok(SparseVec::sub(&truth, &other))
    }

    fn loss(&self, i: usize, y: &Labeling) -> Result<f64> {
        chain_loss(self.instance(i)?, y)
    }

    fn oracle(&self, i: usize, w: &[f64], mode: OracleMode) -> Result<OracleResult> {
        let y = self.viterbi(i, w, mode == OracleMode::LossAugmented)?;
        let psi = self.feature_diff(i, &y)?;
        let loss = self.loss(i, &y)?;
        Ok(OracleResult::assemble(y, psi, loss, w, mode))
    }

    fn enumerate(&self, i: usize) -> Option<Vec<Labeling>> {
        let t_len = self.instances.get(i)?.len();
        let total = (self.num_labels as f64).powi(t_len as i32);
        if total > 4096.0 {
            return None;
        }
        let mut out = Vec::with_capacity(total as usize);
        let mut cur = vec![0usize; t_len];
        loop {
            out.push(Labeling(cur.clone()));
            let mut t = t_len;
            loop {
                if t == 0 {
                    return Some(out);
                }
                t -= 1;
                cur[t] += 1;
                if cur[t] < self.num_labels {
                    break;
                }
                cur[t] = 0;
            }
        }
    }
}
