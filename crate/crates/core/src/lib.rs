//! Layer-wise block coordinate descent (BCD) for deep feedforward networks.
//!
//! The network `f(x) = W_L σ(W_{L-1} σ(… σ(W_1 x)))` is trained without
//! backpropagation: every hidden layer output is replaced by a free auxiliary
//! vector `V_{j,i}` per sample, and the objective
//!
//! ```text
//! F(W, V) = Σ_i [ (W_L V_{L-1,i} − y_i)² + γ Σ_j ‖σ(W_j V_{j-1,i}) − V_{j,i}‖² ]
//! ```
//!
//! is minimized one block at a time, from the output layer backwards.
//!
//! Two algorithms are provided:
//!
//! - [`monotone`]: strictly monotone activations (leaky ReLU, identity), with
//!   a trainable output row and singular value bounding at initialization.
//! - [`relu`]: ReLU networks with skip connections `v ↦ σ(W v) + v`,
//!   non-negative projections of the auxiliary variables and a fixed output row.
//!
//! [`schedule`] turns measured instance quantities into step sizes and
//! iteration counts that carry a convergence certificate, and [`bound`]
//! evaluates the Rademacher generalization-gap bound for trained weights.
//!
//! The crate is `no_std` and only needs `alloc`. Enable the `std` feature to
//! let the GEMM kernels detect CPU features at runtime.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod activation;
pub mod bound;
mod error;
pub mod grad;
pub mod init;
pub mod matrix;
pub mod monotone;
pub mod network;
pub mod relu;
pub mod schedule;
pub mod step;
pub mod trace;

pub use activation::{Activation, AssumptionCheck};
pub use error::{Block, Error, Result};
pub use init::SvbBounds;
pub use matrix::{Matrix, Svd};
pub use network::{LossBreakdown, NetworkShape, NetworkState};
pub use schedule::{InstanceStats, TrainSchedule};
pub use step::StepScaling;
pub use trace::{LossTrace, TraceObserver};
