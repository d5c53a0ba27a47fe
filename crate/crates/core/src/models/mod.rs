//! Structured models: joint feature maps, task losses and max oracles.
//!
//! Every model works in terms of the difference map
//! `psi_i(y) = phi(x_i, y_i) - phi(x_i, y)` and the hinge scores
//! `H_i(y; w) = L_i(y) - <w, psi_i(y)>`.

mod chain;
mod generate;
mod multiclass;
mod toy;

pub use chain::{chain_feature_map, chain_loss, ChainInstance, ChainModel};
pub use generate::{gen_synthetic_chain, ChainGenConfig};
pub use multiclass::{MulticlassExample, MulticlassModel};
pub use toy::ToyModel;

use crate::error::Result;
use crate::linalg::SparseVec;
use std::fmt;

/// A structured output. Chains use one label per position, multiclass and
/// toy models use a single label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Labeling(pub Vec<usize>);

impl Labeling {
    pub fn single(label: usize) -> Self {
        Labeling(vec![label])
    }

    /// Canonical text key, e.g. `"0,2,1"`. Used to identify corners in
    /// active sets and caches.
    pub fn key(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        parts.join(",")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Labeling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.key())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMode {
    /// argmax of `L_i(y) - <w, psi_i(y)>`
    LossAugmented,
    /// argmax of `-<w, psi_i(y)>`, the loss channel switched off
    ScoreOnly,
}

/// Answer of a max oracle.
#[derive(Clone, Debug)]
pub struct OracleResult {
    pub labeling: Labeling,
    /// Maximized objective in the requested mode.
    pub value: f64,
    pub psi: SparseVec,
    /// Task loss `L_i(y*)`, reported in both modes.
    pub loss: f64,
}

impl OracleResult {
    /// Assembles a result, recomputing the value from the pieces so that it
    /// is consistent with `psi` and `loss` to rounding.
    pub fn assemble(labeling: Labeling, psi: SparseVec, loss: f64, w: &[f64], mode: OracleMode) -> Self {
        let score = -psi.dot(w);
        let value = match mode {
            OracleMode::LossAugmented => loss + score,
            OracleMode::ScoreOnly => score,
        };
        OracleResult { labeling, value, psi, loss }
    }
}

/// `H_i(y; w)` from a corner's difference map and loss.
pub fn hinge_value(psi: &SparseVec, loss: f64, w: &[f64]) -> f64 {
    loss - psi.dot(w)
}

pub trait StructuredModel: Send + Sync {
    fn num_examples(&self) -> usize;

    fn feature_dim(&self) -> usize;

    fn ground_truth(&self, i: usize) -> &Labeling;

    /// `psi_i(y)`
    fn feature_diff(&self, i: usize, y: &Labeling) -> Result<SparseVec>;

    /// `L_i(y)`
    fn loss(&self, i: usize, y: &Labeling) -> Result<f64>;

    fn oracle(&self, i: usize, w: &[f64], mode: OracleMode) -> Result<OracleResult>;

    fn max_oracle(&self, i: usize, w: &[f64]) -> Result<OracleResult> {
        self.oracle(i, w, OracleMode::LossAugmented)
    }

    /// All labelings of example `i` when the label space is small enough to
    /// list.
    fn enumerate(&self, _i: usize) -> Option<Vec<Labeling>> {
        None
    }

    /// Lets a model refuse regularization values it was not built for.
    fn check_lambda(&self, _lambda: f64) -> Result<()> {
        Ok(())
    }
}

pub(crate) fn check_dim(expected: usize, w: &[f64]) -> Result<()> {
    if w.len() != expected {
        return Err(crate::Error::DimensionMismatch { expected, got: w.len() });
    }
    Ok(())
}
