//! Multiclass classification as a structured model with an exhaustive
//! oracle. The joint feature map places `x` in the block of its class.

use super::{check_dim, Labeling, OracleMode, OracleResult, StructuredModel};
use crate::error::{Error, Result};
use crate::linalg::SparseVec;

#[derive(Clone, Debug, PartialEq)]
pub struct MulticlassExample {
    pub x: Vec<f64>,
    pub label: usize,
}

#[derive(Clone, Debug)]
pub struct MulticlassModel {
    num_classes: usize,
    dim_x: usize,
    examples: Vec<MulticlassExample>,
    truths: Vec<Labeling>,
}

impl MulticlassModel {
    /// Label spaces larger than this are refused; the oracle enumerates.
    pub const MAX_CLASSES: usize = 256;

    pub fn new(num_classes: usize, examples: Vec<MulticlassExample>) -> Result<Self> {
        if num_classes == 0 || num_classes > Self::MAX_CLASSES {
            return Err(Error::Config(format!("multiclass model needs between 1 and {} classes", Self::MAX_CLASSES)));
        }
        let dim_x = examples.first().map_or(0, |e| e.x.len());
        for e in &examples {
            if e.x.len() != dim_x {
                return Err(Error::DimensionMismatch { expected: dim_x, got: e.x.len() });
            }
            if e.label >= num_classes {
                return Err(Error::LabelOutOfRange { label: e.label, num_labels: num_classes });
            }
        }
        let truths = examples.iter().map(|e| Labeling::single(e.label)).collect();
        Ok(MulticlassModel { num_classes, dim_x, examples, truths })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn examples(&self) -> &[MulticlassExample] {
        &self.examples
    }

    fn class_of(&self, y: &Labeling) -> Result<usize> {
        if y.len() != 1 {
            return Err(Error::LengthMismatch { expected: 1, got: y.len() });
        }
        if y.0[0] >= self.num_classes {
            return Err(Error::LabelOutOfRange { label: y.0[0], num_labels: self.num_classes });
        }
        Ok(y.0[0])
    }

    fn diff(&self, i: usize, c: usize) -> SparseVec {
        let e = &self.examples[i];
        if c == e.label {
            return SparseVec::new();
        }
        let mut pairs = Vec::with_capacity(2 * self.dim_x);
        for (u, &v) in e.x.iter().enumerate() {
            pairs.push((e.label * self.dim_x + u, v));
            pairs.push((c * self.dim_x + u, -v));
        }
        SparseVec::from_pairs(pairs)
    }
}

impl StructuredModel for MulticlassModel {
    fn num_examples(&self) -> usize {
        self.examples.len()
    }

    fn feature_dim(&self) -> usize {
        self.dim_x * self.num_classes
    }

    fn ground_truth(&self, i: usize) -> &Labeling {
        &self.truths[i]
    }

    fn feature_diff(&self, i: usize, y: &Labeling) -> Result<SparseVec> {
        if i >= self.examples.len() {
            return Err(Error::ExampleOutOfRange(i));
        }
        Ok(self.diff(i, self.class_of(y)?))
    }

    fn loss(&self, i: usize, y: &Labeling) -> Result<f64> {
        let e = self.examples.get(i).ok_or(Error::ExampleOutOfRange(i))?;
        Ok(if self.class_of(y)? == e.label { 0.0 } else { 1.0 })
    }

    fn oracle(&self, i: usize, w: &[f64], mode: OracleMode) -> Result<OracleResult> {
        check_dim(self.feature_dim(), w)?;
        let e = self.examples.get(i).ok_or(Error::ExampleOutOfRange(i))?;
        let mut best: Option<OracleResult> = None;
        for c in 0..self.num_classes {
            let loss = if c == e.label { 0.0 } else { 1.0 };
            let r = OracleResult::assemble(Labeling::single(c), self.diff(i, c), loss, w, mode);
            if best.as_ref().is_none_or(|b| r.value > b.value) {
                best = Some(r);
            }
        }
        Ok(best.expect("at least one class"))
    }

    fn enumerate(&self, _i: usize) -> Option<Vec<Labeling>> {
        Some((0..self.num_classes).map(Labeling::single).collect())
    }
}
