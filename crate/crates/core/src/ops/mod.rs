//! Forward and backward kernels for every layer of the network.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod pool;

pub use activation::{relu, relu_backward, relu_grad, relu_tensor, sigmoid, sigmoid_grad, sigmoid_tensor};
pub use conv::{conv2d, conv2d_backward, conv2d_grad, ConvGrads, ConvSpec};
pub use dense::{dense, dense_grad, dense_param_count};
pub use dropout::{dropout, dropout_scale, splitmix64, Mode};
pub use pool::{maxpool2d, maxpool2d_grad, ArgmaxMap, PoolSpec};
