//! Networks, optimizer and parameter checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod policy;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use mlp::{ForwardCache, MlpParams};
pub use policy::{GaussianPolicy, PolicyGrad, PolicySnapshot, SnapshotTag, ValueFunction};
