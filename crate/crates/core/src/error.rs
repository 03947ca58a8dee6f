use alloc::string::String;
use core::fmt;

/// One block of the BCD iterate, used to locate failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    OutputWeights,
    OutputAux,
    HiddenWeights(usize),
    HiddenAux(usize),
    FirstWeights,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::OutputWeights => write!(f, "W_L"),
            Block::OutputAux => write!(f, "V_(L-1)"),
            Block::HiddenWeights(j) => write!(f, "W_{j}"),
            Block::HiddenAux(j) => write!(f, "V_{j}"),
            Block::FirstWeights => write!(f, "W_1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("svd did not converge within {sweeps} sweeps on a {rows}x{cols} matrix")]
    SvdNoConvergence { rows: usize, cols: usize, sweeps: usize },

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { context: &'static str, expected: (usize, usize), actual: (usize, usize) },

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "data matrix is rank deficient: smallest singular value {smallest:e} \
         (largest {largest:e}, n = {samples}, d_in = {d_in})"
    )]
    RankDeficient { smallest: f64, largest: f64, samples: usize, d_in: usize },

    #[error("training diverged at outer iteration {iteration} in block {block} (loss {loss:e})")]
    Divergence { iteration: usize, block: Block, loss: f64 },

    #[error(
        "output row has no entries of both signs after {attempts} draws; a non-negative \
         solution of W_L v = y is not guaranteed"
    )]
    MixedSignUnavailable { attempts: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
