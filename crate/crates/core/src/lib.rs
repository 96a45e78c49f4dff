//! CECT: a controllable-ensemble CNN/transformer binary image classifier.
//!
//! Three convolutional sub-encoders capture local features at 1/8, 1/4 and
//! 1/2 of the input resolution. Three transposed-convolution sub-decoders
//! bring them back to full resolution, where they are blended with convex
//! ensemble coefficients. A shifted-window transformer classifies the fused
//! map.
//!
//! The crate carries its own small tensor engine ([`tensor`]) with
//! reverse-mode differentiation, plus data ingestion, training, evaluation
//! and reporting.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod par;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{CectError, ErrorClass, Result};
pub use rng::Rng;
pub use tensor::{Graph, Real, Tensor, Var};
