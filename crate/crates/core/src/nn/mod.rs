//! A small CPU neural-network engine: dense tensors, layers with hand-written
//! backward passes, and an adaptive-moment optimizer.

mod layers;
mod optim;
mod param;
mod tensor;

pub use layers::{
    global_avg_pool, global_avg_pool_backward, leaky_relu, leaky_relu_backward, relu, relu_backward, sigmoid,
    softmax_rows, BatchNorm2d, BatchNormCache, Conv2d, ConvCache, Linear, MaxPool2d, Mode, PoolCache,
};
pub use optim::{Adam, AdamConfig};
pub use param::{Param, Parameterized};
pub use tensor::{Matrix, Tensor};
