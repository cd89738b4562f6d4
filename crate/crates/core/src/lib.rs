//! Deep belief networks trained adversarially against a neural critic,
//! with score-function gradients through the discrete sampler.

pub mod adversarial;
pub mod beliefnet;
pub mod container;
pub mod datasets;
pub mod discriminator;
pub mod error;
pub mod metrics;
pub mod numcore;
pub mod optim;

pub use error::{Error, Result};
