pub mod acquisition;
pub mod benchmarks;
pub mod density;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod kdtree;
pub mod planner;
pub mod linalg;
pub mod sampling;
pub mod scalar;
pub mod transition;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Gmm = density::GaussianMixture<f64>;
