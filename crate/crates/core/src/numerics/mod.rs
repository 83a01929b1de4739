//! Dense linear algebra, parameter containers, SGD and gradient checking.

mod gradcheck;
mod matrix;
mod params;
pub mod tensor_io;

pub use gradcheck::{grad_check, GradCheckReport};
pub use matrix::{dot, sigmoid, softmax, squared_distance, Matrix};
pub use params::{sgd_step, xavier_uniform, ParamId, ParamSet, SgdConfig, Tensors};
pub use tensor_io::TensorFile;
