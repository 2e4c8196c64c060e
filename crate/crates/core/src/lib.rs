pub mod env;
pub mod error;
pub mod fitting;
pub mod harness;
pub mod losses;
pub mod nn;
pub mod numerics;
pub mod ppo;
pub mod symmetry;

pub use error::{Error, Result};
