pub mod dual_lnn;
pub mod error;
pub mod geometry;
pub mod landscape;
pub mod linear_net;
pub mod matrix;
pub mod multibranch;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use linear_net::{LinearNetFactors, ProblemInstance};
pub use matrix::{Matrix, SvdResult};
