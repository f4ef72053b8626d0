pub mod error;
pub mod estimate;
pub mod identifiability;
pub mod intervention;
pub mod linalg;
pub mod models;
pub mod moments;
pub mod ode;
pub mod optim;
pub mod rng;
pub mod scenarios;
pub mod simulate;

pub use error::{Error, Result};
