//! Dense tensors and a define-by-run reverse-mode differentiation tape.
//!
//! The op set is exactly what the classifier needs: matrix products,
//! sigmoid/tanh/ReLU, element-wise add/mul, row-bias broadcast, concatenation and
//! slicing, row gathers (embedding lookups), a masked same-padded 1-D convolution,
//! masked max-over-time pooling, reductions, and a clamped binary cross-entropy.
//!
//! ```
//! use baitnet::autodiff::{Tape, Tensor};
//!
//! let x = Tensor::scalar(0.0).with_grad(true);
//! let mut tape = Tape::new();
//! let xv = tape.leaf(&x);
//! let y = tape.sigmoid(xv).unwrap();
//! assert_eq!(tape.value(y), &[0.5]);
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(xv).unwrap(), &[0.25]);
//! ```

mod kernels;
mod tape;
mod tensor;

pub use tape::{Elementwise, Gradients, Tape, Var};
pub use tensor::Tensor;
