pub mod decomp;
pub mod densities;
pub mod eigen;
pub mod error;
pub mod harness;
pub mod num;
pub mod pathsim;
pub mod ppp;
pub mod rng;
pub mod spec;
pub mod stats;
pub mod vervaat;

pub use error::{Error, Result};
