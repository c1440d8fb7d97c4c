//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Values are
//! reached through [`Var`] handles, and [`Tape::backward`] returns the
//! gradient of a scalar root with respect to every recorded node.
//!
//! ```
//! use mmnas::autodiff::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.param(Tensor::vector(vec![1.0, 2.0]).unwrap());
//! let root = x.mul(x).unwrap().sum().unwrap();
//! let grads = tape.backward(root).unwrap();
//! assert_eq!(grads.get(x).data(), &[2.0, 4.0]);
//! ```

pub mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, relative_error, GradCheckReport};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
