//! Decision rules on top of ensemble posteriors: UCB and Thompson scores,
//! arm and super-arm selection, and the rebuild schedule.

mod agent;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::ArmPosterior;
use crate::rng::RandomSource;
use crate::tree::Sample;
use crate::{Error, Result};

pub use agent::{Agent, Observation, TreeEnsembleAgent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ucb,
    Ts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub method: Method,
    /// Exploration factor ν.
    pub exploration: f64,
    /// Rounds of uniformly random play before the first fit (T_I). `None`
    /// lets the caller apply its default (ten per arm, or ten paths).
    pub initial_rounds: Option<u64>,
    /// Rebuild whenever ⌈coef · ln t⌉ increases.
    pub rebuild_coefficient: f64,
    /// Refit after every feedback batch instead of following the schedule.
    pub refit_every_round: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            method: Method::Ucb,
            exploration: 1.0,
            initial_rounds: None,
            rebuild_coefficient: 8.0,
            refit_every_round: false,
        }
    }
}

impl PolicyConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.exploration.is_finite() && self.exploration >= 0.0) {
            out.push(format!("exploration: {} must be finite and >= 0", self.exploration));
        }
        if !(self.rebuild_coefficient.is_finite() && self.rebuild_coefficient > 0.0) {
            out.push(format!("rebuild_coefficient: {} must be > 0", self.rebuild_coefficient));
        }
        out
    }
}

/// Score of one candidate arm in one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmScore {
    pub arm: usize,
    pub score: f64,
    pub posterior: Option<ArmPosterior>,
}

/// `μ̃ + sqrt(ν² σ̃² ln(t−1) / c)`.
pub fn ucb_score(p: &ArmPosterior, t: u64, nu: f64) -> Result<f64> {
    if t < 2 {
        return Err(Error::InvalidArgument(format!("ucb_score needs t >= 2, got {t}")));
    }
    if p.count == 0 {
        return Err(Error::InvalidArgument("ucb_score needs a posterior with c >= 1".into()));
    }
    if p.var < 0.0 || !p.var.is_finite() || !p.mu.is_finite() {
        return Err(Error::NonFinite(format!("posterior {p:?}")));
    }
    let bonus = (nu * nu * p.var * ((t - 1) as f64).ln() / p.count as f64).sqrt();
    Ok(p.mu + bonus)
}

/// One draw from `N(μ̃, ν² σ̃²)`. A degenerate normal returns `μ̃` without
/// touching the generator.
pub fn ts_sample(p: &ArmPosterior, nu: f64, rng: &mut RandomSource) -> Result<f64> {
    if p.var < 0.0 || !p.var.is_finite() || !p.mu.is_finite() {
        return Err(Error::NonFinite(format!("posterior {p:?}")));
    }
    let sd = nu.abs() * p.var.sqrt();
    if sd == 0.0 {
        return Ok(p.mu);
    }
    let z: f64 = rng.sample(StandardNormal);
    Ok(p.mu + sd * z)
}

/// Arm with the largest score; exact ties are broken uniformly at random.
pub fn select_arm(scores: &[ArmScore], rng: &mut RandomSource) -> Result<usize> {
    let best = scores
        .iter()
        .map(|s| s.score)
        .fold(f64::NEG_INFINITY, f64::max);
    if scores.is_empty() {
        return Err(Error::EmptyChoice);
    }
    if best.is_nan() || scores.iter().any(|s| s.score.is_nan()) {
        return Err(Error::NonFinite("NaN arm score".into()));
    }
    let tied: Vec<usize> = scores
        .iter()
        .filter(|s| s.score == best)
        .map(|s| s.arm)
        .collect();
    if tied.len() == 1 {
        return Ok(tied[0]);
    }
    Ok(tied[rng.random_range(0..tied.len())])
}

/// Feasible set of super arms, searched for the largest summed score.
pub trait CombinatorialOracle {
    /// Base arms of the best super arm given one score per base arm.
    fn best_super_arm(&self, scores: &[f64]) -> Result<Vec<usize>>;
}

/// Oracle over an explicitly listed feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedOracle {
    pub super_arms: Vec<Vec<usize>>,
}

impl CombinatorialOracle for EnumeratedOracle {
    fn best_super_arm(&self, scores: &[f64]) -> Result<Vec<usize>> {
        let mut best: Option<(f64, &Vec<usize>)> = None;
        for s in &self.super_arms {
            let mut total = 0.0;
            for &a in s {
                total += *scores
                    .get(a)
                    .ok_or_else(|| Error::InvalidArgument(format!("base arm {a} has no score")))?;
            }
            if best.map_or(true, |(b, _)| total > b) {
                best = Some((total, s));
            }
        }
        best.map(|(_, s)| s.clone()).ok_or(Error::EmptyChoice)
    }
}

/// Super arm maximizing the summed scores within the oracle's feasible set.
pub fn select_super_arm(scores: &[ArmScore], oracle: &dyn CombinatorialOracle) -> Result<Vec<usize>> {
    let n = scores.iter().map(|s| s.arm + 1).max().unwrap_or(0);
    let mut by_arm = vec![f64::NEG_INFINITY; n];
    for s in scores {
        by_arm[s.arm] = s.score;
    }
    oracle.best_super_arm(&by_arm)
}

/// `⌈coef · ln t⌉`, the value the rebuild schedule tracks.
pub fn rebuild_value(t: u64, coef: f64) -> i64 {
    (coef * (t.max(1) as f64).ln()).ceil() as i64
}

/// True once `⌈8 ln t⌉` has grown past `last`.
pub fn should_rebuild(t: u64, last: i64) -> bool {
    rebuild_value(t, 8.0) > last
}

pub(crate) fn should_rebuild_with(t: u64, last: i64, coef: f64) -> bool {
    rebuild_value(t, coef) > last
}

/// Context/reward pairs observed so far, plus the decision round counter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub samples: Vec<Sample>,
    /// Decision rounds elapsed.
    pub t: u64,
}

impl History {
    pub fn push(&mut self, sample: Sample) {
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
