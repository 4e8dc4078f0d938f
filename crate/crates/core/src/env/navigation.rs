use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::paths::{path_cost, shortest_path, Digraph, PathOracle};
use super::road::RoadNetwork;
use crate::rng::RandomSource;
use crate::tree::{FeatureSchema, FeatureVector};
use crate::{Error, Result};

/// Semi-bandit feedback for one traversed path.
#[derive(Debug, Clone, PartialEq)]
pub struct NavFeedback {
    /// Sampled travel time of every edge on the chosen path, in path order.
    pub times: Vec<f64>,
    pub expected_chosen: f64,
    pub expected_best: f64,
    /// `expected_chosen − expected_best`.
    pub regret: f64,
    pub best_path: Vec<usize>,
}

/// Samples feedback for `path` and scores it against the expected-time oracle
/// at `time_of_day`.
pub fn nav_env_step(
    net: &RoadNetwork,
    graph: &Digraph,
    path: &[usize],
    origin: usize,
    dest: usize,
    time_of_day: f64,
    rng: &mut RandomSource,
) -> Result<NavFeedback> {
    if !graph.is_path(path, origin, dest) {
        return Err(Error::InvalidArgument(format!(
            "edges {path:?} do not form a path from {origin} to {dest}"
        )));
    }
    let expected = net.expected_times(time_of_day);
    let best_path = shortest_path(graph, &expected, origin, dest)?;
    let expected_best = path_cost(&expected, &best_path);
    let expected_chosen = path_cost(&expected, path);
    let times = path
        .iter()
        .map(|&e| net.sample_travel_time(e, time_of_day, rng))
        .collect();
    Ok(NavFeedback {
        times,
        expected_chosen,
        expected_best,
        regret: expected_chosen - expected_best,
        best_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub hour_rng: RandomSource,
    pub noise_rng: RandomSource,
    pub hour: f64,
}

/// Repeated origin–destination routing on a road network. The time of day is
/// drawn uniformly each round from its own stream, so every agent faces the
/// same sequence of hours for a given seed.
#[derive(Debug, Clone)]
pub struct NavigationEnv {
    net: Arc<RoadNetwork>,
    graph: Digraph,
    schema: FeatureSchema,
    pub origin: usize,
    pub dest: usize,
    hour_rng: RandomSource,
    noise_rng: RandomSource,
    hour: f64,
}

impl NavigationEnv {
    pub fn new(
        net: Arc<RoadNetwork>,
        origin: usize,
        dest: usize,
        hour_rng: RandomSource,
        noise_rng: RandomSource,
    ) -> Result<Self> {
        let graph = net.graph();
        if origin >= graph.vertices || dest >= graph.vertices || origin == dest {
            return Err(Error::InvalidArgument(format!(
                "origin {origin} and destination {dest} must be distinct vertices of the network"
            )));
        }
        shortest_path(&graph, &net.expected_times(12.0), origin, dest)?;
        Ok(Self {
            net,
            graph,
            schema: RoadNetwork::context_schema(),
            origin,
            dest,
            hour_rng,
            noise_rng,
            hour: 0.0,
        })
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.net
    }

    pub fn graph(&self) -> &Digraph {
        &self.graph
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn arms(&self) -> usize {
        self.graph.edges.len()
    }

    pub fn oracle(&self) -> PathOracle {
        PathOracle {
            graph: self.graph.clone(),
            origin: self.origin,
            dest: self.dest,
        }
    }

    /// Starts a round and returns its time of day in `[0, 24)`.
    pub fn begin_round(&mut self) -> f64 {
        self.hour = self.hour_rng.random_range(0.0..24.0);
        self.hour
    }

    pub fn time_of_day(&self) -> f64 {
        self.hour
    }

    /// Context of every edge at the current time of day, indexed by edge id.
    pub fn contexts(&self) -> Vec<FeatureVector> {
        (0..self.arms())
            .map(|e| self.net.edge_context(e, self.hour, &self.schema))
            .collect()
    }

    /// Generator streams and current hour, for checkpoints.
    pub fn state(&self) -> NavState {
        NavState {
            hour_rng: self.hour_rng.clone(),
            noise_rng: self.noise_rng.clone(),
            hour: self.hour,
        }
    }

    pub fn restore_state(&mut self, state: NavState) {
        self.hour_rng = state.hour_rng;
        self.noise_rng = state.noise_rng;
        self.hour = state.hour;
    }

    pub fn step(&mut self, path: &[usize]) -> Result<NavFeedback> {
        nav_env_step(
            &self.net,
            &self.graph,
            path,
            self.origin,
            self.dest,
            self.hour,
            &mut self.noise_rng,
        )
    }
}
