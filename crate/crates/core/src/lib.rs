//! Search for low-rank decompositions of matrix-multiplication tensors.
//!
//! The pipeline: [`synth`] builds synthetic demonstrations (tensor plus a
//! known factor list), [`model`] trains a policy/value network on them, and
//! [`search`] runs network-guided MCTS that peels one rank-one factor off the
//! residual tensor per step until it reaches zero. [`oracle`] solves tiny
//! instances exactly and serves as ground truth in tests.

pub mod certificate;
pub mod dataset;
pub mod error;
pub mod fixtures;
mod linalg;
pub mod model;
pub mod oracle;
pub mod render;
pub mod rng;
pub mod search;
pub mod synth;
pub mod tensor;
pub mod tensor_file;

pub use error::{Error, Result};
pub use tensor::{Factor, MatmulShape, Tensor3};
