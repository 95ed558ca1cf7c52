//! Distracted-driving simulation, latent driver-trait learning and
//! HMI intervention training.

pub mod actions;
pub mod cli;
pub mod cognitive;
pub mod dataset;
pub mod driver;
pub mod env;
pub mod eval;
pub mod error;
pub mod intervention;
pub mod nn;
pub mod ppo;
pub mod run;
pub mod seeding;
pub mod traits;
pub mod traffic;

pub use error::{Error, Result};
