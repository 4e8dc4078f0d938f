//! Comparison agents: linear contextual bandits, a context-free UCB rule and
//! per-arm bootstrapped tree models.

mod bootstrap;
mod linear;
mod ucb1;

pub use bootstrap::{BootstrapConfig, BootstrapModel, TreeBootstrapAgent};
pub use linear::{lints_sample, linucb_score, LinearAgent, LinearArmModel, LinearRule, LinearState};
pub use ucb1::{ucb1_normal_score, Ucb1NormalAgent};

#[cfg(test)]
mod tests;
