//! Learning a reward from expert demonstrations with successor representations.
//!
//! The crate is organised bottom-up:
//!
//! - [`nnkit`]: tensors, reverse-mode differentiation, MLPs and Adam.
//! - [`dataset`]: demonstration trajectories and SARSA transitions.
//! - [`srreward`]: the successor-representation reward model and its training.
//! - [`tabular`]: exact successor matrices and occupancy measures on finite MDPs.
//! - [`agents`]: behavioral cloning and an expectile-regression offline agent.
//! - [`envs`]: a continuous 2-D maze, a gridworld and scripted experts.

pub mod agents;
pub mod dataset;
pub mod envs;
pub mod error;
pub mod nnkit;
pub mod rng;
pub mod srreward;
pub mod tabular;

pub use error::{Error, Result};
pub use rng::SplitRng;
