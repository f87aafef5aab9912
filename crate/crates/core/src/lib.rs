pub mod adversary;
pub mod cli;
pub mod engine;
pub mod error;
pub mod invariance;
pub mod io;
pub mod model;
pub mod numerics;
pub mod regulation;
pub mod scenario;
pub mod vehicle;

pub use error::{Error, Result};
