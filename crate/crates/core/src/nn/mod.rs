//! A small double-precision neural-network substrate with hand-written
//! backward passes.

pub mod blocks;
pub mod gemm;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod params;
pub mod tensor;

pub use blocks::{Mlp, MlpCache, Trunk, TrunkCache, TrunkConfig};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use layers::{Conv2d, Dense, MaxPool2d};
pub use loss::{argmax, batch_cross_entropy, softmax, softmax_cross_entropy};
pub use optim::{Optimizer, OptimizerKind, TrainConfig};
pub use params::{ParamId, ParamStore};
pub use tensor::RealTensor;
