//! k-MIP attention for graph transformers.
//!
//! The crate provides an exact, memory-lean row-wise top-k inner-product
//! kernel ([`mipkernel`]), dense and k-MIP multi-head attention with
//! backward passes ([`attention`]), a GPS graph transformer with a training
//! loop ([`gps`]), Weisfeiler-Leman style colour refinement ([`wl`]) and the
//! command line front end ([`cli`]).

pub mod attention;
pub mod cli;
pub mod error;
pub mod gps;
pub mod graph;
pub mod matrix;
pub mod mipkernel;
pub mod rng;
pub mod stats;
pub mod wl;
pub mod workspace;

pub use error::{Error, Result};
pub use graph::Graph;
pub use matrix::{Matrix, Scalar};
pub use rng::Rng;
pub use workspace::Workspace;
