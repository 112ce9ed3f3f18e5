//! Forward and backward kernels for the fixed network.
//!
//! Every kernel is a pure function of its arguments. Backward kernels take the
//! cached forward input rather than holding state, so they can run on any
//! thread.

mod activation;
mod conv;
mod gemm;
mod linear;
mod loss;
mod pool;

pub use activation::{relu_backward, relu_forward};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, KERNEL_SIZE};
pub use linear::{linear_backward, linear_forward, LinearGrads};
pub use loss::{cross_entropy_loss, softmax, ScalarLoss, PROB_FLOOR};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward};
