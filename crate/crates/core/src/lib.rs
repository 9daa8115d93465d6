//! Approximating-martingale-process (AMP) control variates for policy-gradient
//! reinforcement learning.
//!
//! The crate bundles two environments (a uniformized Criss-Cross queueing
//! network and a small ride-hailing dispatch MDP), plain and AMP value-target
//! estimators, small MLP approximators with explicit gradients, a clipped-PPO
//! training loop, and exact solvers used as ground truth on tiny instances.
//!
//! Numerical code is generic over [`Scalar`]; the `*64` aliases below fix the
//! scalar to `f64`, which is what the training loop and the harness use.

pub mod approximator;
pub mod dynamics;
pub mod env_mqn;
pub mod env_ridehail;
pub mod error;
pub mod estimators;
pub mod oracle;
pub mod policy;
pub mod ppo;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mlp64 = approximator::Mlp<f64>;
pub type ValueNet64 = approximator::ValueNet<f64>;
pub type PolicyHead64 = approximator::PolicyHead<f64>;
pub type TargetSet64 = estimators::TargetSet<f64>;
pub type TruncatedMqn64 = oracle::TruncatedMqn;
pub type TinyMdp64 = oracle::TinyMdp<f64>;
