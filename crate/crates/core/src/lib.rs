//! Numerical toolkit for the process matrix formalism.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: labelled complex linear algebra (tensor products, partial traces,
//!   depolarizing projectors, Choi matrices, PSD projection).
//! - [`process`]: process matrices, their validity, fixed-order processes and the
//!   quantum switch.
//! - [`instruments`]: quantum instruments and the generalized Born rule, with an
//!   independent sequential circuit simulator as a cross-check.
//! - [`causality`]: causal games, causal bounds by strategy enumeration and causal
//!   polytope membership.
//! - [`separability`]: causal separability certificates and witnesses.
//! - [`io`]: JSON and CSV exchange formats.

pub mod causality;
pub mod error;
pub mod instruments;
pub mod io;
pub mod process;
pub mod random;
pub mod separability;
pub mod tensor;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
