//! Small hand-rolled neural-network kernels: dense networks, LSTM stacks with
//! backpropagation through time, a categorical policy head and Adam.
//!
//! Everything is written against [`Scalar`](crate::Scalar) so the same code
//! runs in `f32` and `f64`. Parameters of every model are exposed as a flat
//! list of named [`Tensor`]s, which is what the optimizer and the checkpoint
//! format operate on.

mod adam;
mod categorical;
mod checkpoint;
mod dense;
mod init;
mod lstm;
mod tensor;

pub use adam::Adam;
pub use categorical::Categorical;
pub use checkpoint::{load_tensors, read_tensors, save_tensors, write_tensors, CHECKPOINT_MAGIC};
pub use dense::{DenseCache, DenseNet};
pub use init::{orthogonal, uniform_fan_in};
pub use lstm::{LstmCache, LstmStack, LstmState};
pub use tensor::{global_norm, scale_all, zeros_like, Tensor};
