//! Minimal CPU CNN engine: SAME/VALID convolution, max/average pooling,
//! dense layers, ReLU, softmax cross-entropy and plain SGD, plus the
//! Gaussian and Xavier initializers.
//!
//! Everything is generic over [`Real`] so the same code trains in `f32` and
//! is checked against finite differences in `f64`.

mod model;
pub mod ops;
pub mod spec;
mod tensor;
mod train;

pub use model::{
    backward_and_step, forward, gaussian_init, init_weights, loss_and_gradients, predict,
    xavier_bound, xavier_init, Cache, LayerParams, WeightSet,
};
pub use ops::{conv_forward, pool_forward};
pub use spec::{ConvType, Init, LayerSpec, NetworkSpec, PoolType, Shape3};
pub use tensor::{Real, Tensor};
pub use train::{batch_errors, classification_error, train_epochs, TrainConfig};
