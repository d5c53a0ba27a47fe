use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("weight vector has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {num_labels} labels")]
    LabelOutOfRange { label: usize, num_labels: usize },
    #[error("labeling has length {got}, example has {expected} positions")]
    LengthMismatch { expected: usize, got: usize },
    #[error("example index {0} out of range")]
    ExampleOutOfRange(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("ground-truth loss of example {example} is {loss}, must be 0")]
    NonzeroGroundTruthLoss { example: usize, loss: f64 },
    #[error("empty active set on block {0}")]
    EmptyActiveSet(usize),
    #[error("lower bound exceeds upper bound at coordinate {0}")]
    InfeasibleBounds(usize),
    #[error("vector must be non-negative with positive sum")]
    InvalidWeights,
    #[error("lambda {0} is below the last breakpoint of the path")]
    OutOfRange(f64),
    #[error("inner solver missed its tolerance: gap sum {gap_sum} leaves no room below epsilon {epsilon}")]
    SolverTolerance { gap_sum: f64, epsilon: f64 },
    #[error("degenerate data: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
