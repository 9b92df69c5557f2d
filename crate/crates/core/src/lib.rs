//! Tolerant testing of linear juntas over Gaussian space.

pub mod averaging;
pub mod error;
pub mod gaussian;
pub mod hermite;
pub mod linalg;
pub mod nets;
pub mod oracle;
pub mod projection;
pub mod rng;
pub mod smoothing;
pub mod tester;

pub use error::{JuntaError, Result};
pub use gaussian::McEstimate;
pub use oracle::{CorruptionSpec, FunctionSpec, QueryOracle};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type Subspace = linalg::Subspace<f64>;
