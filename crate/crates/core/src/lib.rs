//! Hard-instance distributions, exact risk algebra and learners for agnostic
//! linear prediction under the squared loss, with a Monte Carlo harness that
//! measures expected excess risk against the minimax rates
//! `min{Y², (B² + dY²)/m, BY/√m}`.

pub mod cli;
pub mod distributions;
pub mod divergence;
pub mod error;
pub mod harness;
pub mod learners;
pub mod par;
pub mod risk;
pub mod rng;
pub mod vector;
pub mod verify;

pub use error::{Error, Result};
pub use vector::{Point, WeightVector};
