//! Interface shared by the per-access-point learners.

use std::path::Path;

use crate::environment::NetworkState;
use crate::error::Result;
use crate::tabular::ActionSpace;

/// A non-cooperative power allocator. It observes only the network state
/// and the shared reward; it never sees another agent.
pub trait PowerAgent {
    /// Picks an action index for the observed state with exploration rate `eps`.
    fn select(&mut self, state: &NetworkState, eps: f64) -> usize;

    /// Feeds back the reward of the last selected action and the state it led to.
    fn learn(&mut self, reward: f64, next_state: &NetworkState);

    fn action_space(&self) -> &ActionSpace;

    /// Writes the learned parameters (Q-table or network weights) as CSV.
    fn dump(&self, path: &Path) -> Result<()>;
}
