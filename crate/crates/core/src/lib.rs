pub mod charging;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod power;
pub mod predictor;
mod rng;
mod scalar;
pub mod scenario;
pub mod srl;
mod tables;
pub mod traffic;

pub use error::{Error, Result};
pub use rng::stream_rng;
pub use scalar::Scalar;

/// Double-precision instantiations of the generic numeric kernels.
pub type Tensor64 = nn::Tensor<f64>;
pub type DenseNet64 = nn::DenseNet<f64>;
pub type LstmStack64 = nn::LstmStack<f64>;
pub type Adam64 = nn::Adam<f64>;
pub type Seq2Seq64 = predictor::Seq2Seq<f64>;
pub type PfSolution64 = power::PfSolution<f64>;
