//! Adaptive single-level stochastic collocation finite elements for
//! parametric elliptic problems `-∇·(a(x, y) ∇u) = f` on polygonal domains.

pub mod driver;
pub mod error;
pub mod estimation;
pub mod fem;
pub mod index_set;
pub mod mesh;
pub mod nodes;
pub mod output;
pub mod problems;
pub mod sparse_grid;

pub use error::{Error, Result};
