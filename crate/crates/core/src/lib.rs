//! Order-restricted inference for marginal log-linear parameters of
//! contingency tables: chi-bar-square weights, constrained maximum
//! likelihood fits and three-hypothesis testing procedures.

pub mod analysis;
pub mod chibar;
pub mod cli;
pub mod error;
pub mod fit;
pub mod linalg;
pub mod mvn;
pub mod params;
pub mod procedures;
mod roots;
pub mod sim;
pub mod table;

pub use error::{Error, Result};
