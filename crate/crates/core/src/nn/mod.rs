//! Differentiable building blocks with hand-written reverse passes.
//!
//! Activations are batch-major `ndarray` matrices (one row per sample).
//! Parameters carry their own gradient buffers; every `backward` accumulates
//! into them, and [`Adam::step`] consumes and clears them.

mod adam;
mod layers;
mod loss;
mod lstm;
mod param;

pub use adam::{Adam, AdamConfig};
pub use layers::{relu, relu_backward, Embedding, Linear};
pub use loss::huber;
pub use lstm::{Lstm, LstmCache, LstmLayer};
pub use param::ParamTensor;
