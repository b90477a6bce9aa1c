//! Heterogeneous graph learning with dimension-level attention.
//!
//! The crate is organised bottom-up:
//!
//! - [`hetgraph`]: typed nodes and relations, CSR adjacency, CSV I/O and
//!   subgraph induction.
//! - [`nn`]: dense tensors, the differentiable operations the model needs
//!   (with hand-written backward rules), AdamW, the cosine schedule and a
//!   finite-difference gradient checker.
//! - [`model`]: the dimension-attention network and the plain
//!   graph-convolution base it can be plugged onto.
//! - [`trainer`]: full-batch training with validation-based model selection.
//! - [`distshift`]: entropy-based edge importance with unbalanced subgraph
//!   sampling, plus the leave-one-out baseline.
//! - [`eval`]: classification and clustering metrics and edge delete/add
//!   curves.

pub mod distshift;
pub mod error;
pub mod eval;
pub mod hetgraph;
pub mod model;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
