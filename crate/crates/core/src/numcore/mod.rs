//! Dense matrices, binary state vectors, logistic primitives and
//! reproducible random streams.

mod bits;
mod logistic;
mod mat;
mod rng;

pub use bits::BitVec;
pub use logistic::{log_sigmoid_pair, softplus, stable_sigmoid};
pub use mat::Mat;
pub use rng::{bernoulli_vec, RngStream};
