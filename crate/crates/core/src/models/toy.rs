//! A two-type instance separating gap sampling from uniform sampling.
//!
//! Block 0 is hard: label `k >= 1` has `phi = -e_k / sqrt(2)` (coordinate
//! `k - 1`). Every other block is easy: all wrong labels share
//! `phi = -e_{K+1}` (coordinate `K`). Label 0 is the ground truth with
//! `phi = 0`, the loss is zero-one and the regularizer is `1/n`.

use super::{check_dim, Labeling, OracleMode, OracleResult, StructuredModel};
use crate::error::{Error, Result};
use crate::linalg::SparseVec;

#[derive(Clone, Debug)]
pub struct ToyModel {
    n: usize,
    k: usize,
    strict: bool,
    truth: Labeling,
}

impl ToyModel {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n < 2 || k < 1 {
            return Err(Error::Config("toy model needs n >= 2 and K >= 1".into()));
        }
        Ok(ToyModel { n, k, strict: true, truth: Labeling::single(0) })
    }

    /// Accept any regularizer, not only `1/n`.
    pub fn relaxed(mut self) -> Self {
        self.strict = false;
        self
    }

    pub fn num_wrong_labels(&self) -> usize {
        self.k
    }

    /// The regularizer the construction is built for.
    pub fn lambda(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn is_hard(&self, i: usize) -> bool {
        i == 0
    }

    fn diff(&self, i: usize, label: usize) -> SparseVec {
        if label == 0 {
            SparseVec::new()
        } else if self.is_hard(i) {
            SparseVec::from_pairs(vec![(label - 1, std::f64::consts::FRAC_1_SQRT_2)])
        } else {
            SparseVec::from_pairs(vec![(self.k, 1.0)])
        }
    }

    fn label_of(&self, y: &Labeling) -> Result<usize> {
        if y.len() != 1 {
            return Err(Error::LengthMismatch { expected: 1, got: y.len() });
        }
        if y.0[0] > self.k {
            return Err(Error::LabelOutOfRange { label: y.0[0], num_labels: self.k + 1 });
        }
        Ok(y.0[0])
    }
}

impl StructuredModel for ToyModel {
    fn num_examples(&self) -> usize {
        self.n
    }

    fn feature_dim(&self) -> usize {
        self.k + 1
    }

    fn ground_truth(&self, _i: usize) -> &Labeling {
        &self.truth
    }

    fn feature_diff(&self, i: usize, y: &Labeling) -> Result<SparseVec> {
        if i >= self.n {
            return Err(Error::ExampleOutOfRange(i));
        }
        Ok(self.diff(i, self.label_of(y)?))
    }

    fn loss(&self, _i: usize, y: &Labeling) -> Result<f64> {
        Ok(if self.label_of(y)? == 0 { 0.0 } else { 1.0 })
    }

    fn oracle(&self, i: usize, w: &[f64], mode: OracleMode) -> Result<OracleResult> {
        check_dim(self.feature_dim(), w)?;
        if i >= self.n {
            return Err(Error::ExampleOutOfRange(i));
        }
        let mut best: Option<OracleResult> = None;
        for label in 0..=self.k {
            let loss = if label == 0 { 0.0 } else { 1.0 };
            let r = OracleResult::assemble(Labeling::single(label), self.diff(i, label), loss, w, mode);
            if best.as_ref().is_none_or(|b| r.value > b.value) {
                best = Some(r);
            }
        }
        Ok(best.expect("label 0 always exists"))
    }

    fn enumerate(&self, _i: usize) -> Option<Vec<Labeling>> {
        Some((0..=self.k).map(Labeling::single).collect())
    }

    fn check_lambda(&self, lambda: f64) -> Result<()> {
        let expected = self.lambda();
        if self.strict && (lambda - expected).abs() > 1e-12 * expected {
            return Err(Error::Config(format!("toy model is built for lambda = 1/n = {expected}, got {lambda}")));
        }
        Ok(())
    }
}
