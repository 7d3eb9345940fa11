//! Dense tensors and the accelerator's operator set: 3x3 convolution, ReLU,
//! 2x2 max pooling, plus softmax for host-side score decoding.

mod ops;
pub mod reference;
mod tensor;

pub(crate) use ops::relu_in_place;
pub use ops::{
    conv3x3, conv3x3_direct, conv3x3_shape, conv3x3_with, maxpool2x2, maxpool2x2_shape,
    maxpool2x2_with, relu, softmax, ConvKernel, Padding,
};
pub use tensor::{Shape, Tensor};
