//! Numerical laboratory for the randomized energy-critical cubic NLS on a
//! periodic four-dimensional box.

pub mod error;
pub mod fft;
pub mod fit;
pub mod grid;
pub mod norms;
pub mod projections;
pub mod propagate;
pub mod randomize;
pub mod rng;
pub mod snapshot;
pub mod solver;
pub mod estimates;
pub mod montecarlo;

pub use error::{DlabError, Result};
