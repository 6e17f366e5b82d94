//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! The engine records every operation on a [`Graph`] tape as it is
//! evaluated. Calling [`Graph::backward`] on a scalar node walks the tape
//! in reverse and accumulates gradients into every node that depends on a
//! trainable leaf.
//!
//! The operator set is deliberately narrow: exactly what a coded-capture
//! model and a plain convolutional reconstruction network need. There is no
//! implicit broadcasting; every binary operator requires equal shapes.
//!
//! ```
//! use dynlf_autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.param(Tensor::scalar(3.0));
//! let y = g.mul(x, x).unwrap();
//! g.backward(y).unwrap();
//! assert_eq!(g.value(y).item(), 9.0);
//! assert_eq!(g.grad(x).unwrap().item(), 6.0);
//! ```

pub mod catalog;
mod error;
pub mod gradcheck;
mod graph;
pub mod kernels;
mod scalar;
mod tensor;

pub use error::AdError;
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{Graph, Var};
pub use scalar::Scalar;
pub use tensor::Tensor;
