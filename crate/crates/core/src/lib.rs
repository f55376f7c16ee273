//! Multi-agent power allocation for an indoor hybrid RF/VLC downlink.
//!
//! One RF access point and several VLC access points each run an
//! independent learner (tabular Q-learning or a DQN) that chooses per-user
//! transmit powers. All agents receive the same reward: the sum over users
//! of the target band minus the distance between actual and target rate.
//!
//! - [`channel`]: Lambertian VLC and log-distance RF link models.
//! - [`environment`]: room, association, bandwidth sharing, rewards.
//! - [`tabular`]: discretised states, action enumeration, Q-tables.
//! - [`dqn`]: MLP Q-network, Adam, experience replay.
//! - [`harness`]: episodes, convergence, Monte Carlo batches, CSV.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod channel;
pub mod dqn;
pub mod environment;
pub mod error;
pub mod exploration;
pub mod harness;
pub mod tabular;

pub use agent::PowerAgent;
pub use error::{Error, Result};
