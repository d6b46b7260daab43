pub mod autoencoder;
pub mod csp;
pub mod error;
pub mod eval;
pub mod features;
pub mod fuzzy;
pub mod pipeline;
pub mod regress;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
