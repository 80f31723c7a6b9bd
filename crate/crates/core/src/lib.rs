pub mod dtwa;
pub mod error;
pub mod bench;
pub mod cli;
pub mod config;
pub mod exact;
pub mod fit;
pub mod gap;
pub mod krylov;
pub mod lattice;
pub mod ode;
pub mod oracles;
pub mod phase;
pub mod rng;
pub mod series;
pub mod squeezing;

pub use error::{Error, Result};
