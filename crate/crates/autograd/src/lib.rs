//! Reverse-mode automatic differentiation over dense NCHW tensors.
//!
//! Operations are recorded on a [`Tape`]; [`Tape::backward`] walks the tape
//! once in reverse and accumulates gradients into parameter leaves. The
//! operator set is deliberately small: exactly what encoder–decoder
//! generators, patch discriminators and a compact classifier need.
//!
//! ```
//! use cartogan_autograd::{Shape, Tape, Tensor};
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.param(Tensor::full(Shape::new(1, 1, 2, 2), 3.0));
//! let zero = tape.constant(Tensor::zeros(Shape::new(1, 1, 2, 2)));
//! let loss = tape.mse_loss(x, zero).unwrap();
//! tape.backward(loss).unwrap();
//! // d/dx mean(x^2) = 2x / 4
//! assert_eq!(tape.grad(x).unwrap().data(), &[1.5; 4]);
//! ```

pub mod blob;
mod element;
mod error;
pub mod gradcheck;
mod kernels;
mod optim;
mod params;
mod tape;
mod tensor;

pub use element::Element;
pub use error::{AutogradError, Result};
pub use optim::{Adam, AdamConfig};
pub use params::Params;
pub use tape::{Tape, Var};
pub use tensor::{Shape, Tensor};
