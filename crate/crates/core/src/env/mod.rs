//! Bandit environments: classification tasks replayed as contextual bandits,
//! and origin–destination routing on a stochastic road network with
//! semi-bandit feedback.

mod classification;
mod navigation;
mod paths;
mod road;
mod trace;

pub use classification::{
    class_reward, encode_disjoint, encode_hybrid, ClassificationBanditEnv, Dataset, DisjointEncoder,
    HybridEncoder,
};
pub use navigation::{nav_env_step, NavFeedback, NavState, NavigationEnv};
pub use paths::{
    path_cost, score_weights, shortest_path, simple_paths, Digraph, PathOracle, MIN_EDGE_WEIGHT,
};
pub use road::{generate_grid, Edge, GridSpec, Peak, RoadNetwork, Vertex, EDGE_CONTEXT_LEN};
pub use trace::{RegretTrace, TraceStep, REGRET_TOLERANCE};
