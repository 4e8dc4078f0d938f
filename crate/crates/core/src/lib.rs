//! Tree-ensemble contextual bandits.
//!
//! Regression-tree ensembles whose leaves carry the mean, sample variance and
//! count of the per-sample contributions routed to them. Summing those over the
//! visited leaves gives a Gaussian reward estimate per arm, which drives an
//! upper-confidence-bound rule (TEUCB) or Thompson sampling (TETS). The same
//! scores feed a shortest-path oracle for combinatorial semi-bandits.
//!
//! Module map:
//! - [`tree`]: CART regression trees with `(o, s², c)` leaves and incremental updates.
//! - [`ensemble`]: bagged and boosted trainers, leaf-value assignment, posterior.
//! - [`policy`]: scoring rules, arm and super-arm selection, rebuild schedule, the agent.
//! - [`baselines`]: LinUCB, LinTS, UCB1-Normal, TreeBootstrap.
//! - [`env`]: classification-to-bandit conversion, road-network simulator, Dijkstra.
//! - [`harness`]: experiment configs, runner, summaries and plot data.

pub mod baselines;
pub mod ensemble;
pub mod env;
mod error;
pub mod exec;
pub mod harness;
pub mod policy;
pub mod rng;
pub mod tree;

pub use error::{Error, Result};
