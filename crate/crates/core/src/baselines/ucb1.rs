use serde::{Deserialize, Serialize};

use crate::policy::{Agent, ArmScore, Observation};
use crate::rng::{derive_seed, source, RandomSource};
use crate::tree::{FeatureVector, LeafStats};
use crate::{Error, Result};

/// `μ̃ + sqrt(16 σ̃² ln(t−1) / m)`.
pub fn ucb1_normal_score(sample_mean: f64, sample_var: f64, m: u64, t: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::ArmPlayedTooFew(m));
    }
    if t.is_nan() || t < 2.0 {
        return Err(Error::InvalidArgument(format!("ucb1_normal_score needs t >= 2, got {t}")));
    }
    if !sample_mean.is_finite() || !sample_var.is_finite() || sample_var < 0.0 {
        return Err(Error::NonFinite(format!("mean {sample_mean}, variance {sample_var}")));
    }
    Ok(sample_mean + (16.0 * sample_var * (t - 1.0).ln() / m as f64).sqrt())
}

/// Context-free reference agent. Arms played fewer than twice score `+∞`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ucb1NormalAgent {
    arms: Vec<LeafStats>,
    rng: RandomSource,
}

impl Ucb1NormalAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            arms: Vec::new(),
            rng: source(derive_seed(seed, 0x17)),
        }
    }

    pub fn stats(&self, arm: usize) -> Option<&LeafStats> {
        self.arms.get(arm)
    }
}

impl Agent for Ucb1NormalAgent {
    fn scores(&mut self, t: u64, contexts: &[FeatureVector]) -> Result<Vec<ArmScore>> {
        (0..contexts.len())
            .map(|arm| {
                let score = match self.arms.get(arm) {
                    Some(s) if s.count >= 2 => {
                        let var = s.variance()?.unwrap_or(0.0);
                        ucb1_normal_score(s.mean(), var, s.count, t.max(2) as f64)?
                    }
                    _ => f64::INFINITY,
                };
                Ok(ArmScore {
                    arm,
                    score,
                    posterior: None,
                })
            })
            .collect()
    }

    fn observe_batch(&mut self, _t: u64, batch: &[Observation]) -> Result<()> {
        for o in batch {
            if !o.reward.is_finite() {
                return Err(Error::NonFinite(format!("reward {}", o.reward)));
            }
            if self.arms.len() <= o.arm {
                self.arms.resize(o.arm + 1, LeafStats::default());
            }
            self.arms[o.arm].push(o.reward);
        }
        Ok(())
    }

    fn rng(&mut self) -> &mut RandomSource {
        &mut self.rng
    }

    fn fits(&self) -> u64 {
        0
    }

    fn fit_seconds(&self) -> f64 {
        0.0
    }
}
