//! Adaptive LQR with low-dimensional system representations: structured
//! estimation, certainty-equivalent control, multi-task pretraining of the
//! representation, and the experiment driver that emits regret traces.

// Argument checks of the form `!(x >= 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod error;
pub mod estimator;
pub mod labrun;
pub mod matkit;
pub mod pretrain;
pub mod riccati;
pub mod sysrep;

pub use error::{LabError, Result};
pub use matkit::{Matrix, Vector};
