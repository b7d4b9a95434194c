//! Exact, quadrature and Monte-Carlo evaluation of n-dimensional iterated
//! integrals over membranes, with machine checks of their algebraic identities.

pub mod combinatorics;
pub mod error;
pub mod exact;
pub mod forms;
pub mod integrate;
pub mod membranes;
pub mod poly;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
