//! Softmax gradient trees, the finite-learning-rate boosting chain, the
//! signed-measure view of tree functions, and the vanishing-learning-rate
//! ODE limit with its Monte-Carlo operator estimator.
//!
//! Everything downstream of a seed is deterministic: randomness is drawn
//! from hierarchical [`rng::RngStream`] coordinates (step, tree, node), so
//! runs reproduce bit-for-bit at any thread count.

pub mod boosting;
pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod infinitesimal;
pub mod loss;
pub mod measure;
pub mod rng;
pub mod tree;

pub use config::Config;
pub use dataset::{generate_sine_dataset, Dataset};
pub use ensemble::Ensemble;
pub use error::{Error, Result};
pub use loss::Loss;
pub use rng::RngStream;
pub use tree::{FittedTree, TreePartition};
