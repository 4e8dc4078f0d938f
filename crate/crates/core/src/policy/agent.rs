use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rebuild_value, should_rebuild_with, ts_sample, ucb_score, ArmScore, History, Method, PolicyConfig};
use crate::ensemble::{EnsembleConfig, EnsembleModel};
use crate::exec;
use crate::rng::{derive_seed, source, RandomSource};
use crate::tree::{FeatureVector, Sample, MIN_LEAF};
use crate::{Error, Result};

/// Below this many candidate arms, posteriors are computed inline.
const PARALLEL_ARMS: usize = 16;

/// Feedback for one played base arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub arm: usize,
    pub context: FeatureVector,
    pub reward: f64,
}

/// A learner that scores candidate arms and absorbs (possibly delayed) feedback.
pub trait Agent: Send {
    /// Scores for decision round `t` (1-based); `contexts[a]` is arm `a`'s context.
    fn scores(&mut self, t: u64, contexts: &[FeatureVector]) -> Result<Vec<ArmScore>>;

    /// Feedback for every round up to and including `t`.
    fn observe_batch(&mut self, t: u64, batch: &[Observation]) -> Result<()>;

    fn observe(&mut self, t: u64, obs: Observation) -> Result<()> {
        self.observe_batch(t, std::slice::from_ref(&obs))
    }

    /// Generator used for tie-breaking among equal scores.
    fn rng(&mut self) -> &mut RandomSource;

    /// Number of model fits so far.
    fn fits(&self) -> u64;

    /// Wall-clock seconds spent fitting.
    fn fit_seconds(&self) -> f64;
}

/// TEUCB / TETS: one tree ensemble over all arms' contexts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeEnsembleAgent {
    pub policy: PolicyConfig,
    pub ensemble: EnsembleConfig,
    /// Resolved T_I.
    pub initial_rounds: u64,
    pub seed: u64,
    rng: RandomSource,
    history: History,
    model: Option<EnsembleModel>,
    last_rebuild: i64,
    rebuilds: u64,
    #[serde(skip)]
    fit_secs: f64,
}

impl TreeEnsembleAgent {
    pub fn new(policy: PolicyConfig, ensemble: EnsembleConfig, initial_rounds: u64, seed: u64) -> Result<Self> {
        let mut problems = policy.problems();
        problems.extend(ensemble.problems());
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self {
            policy,
            ensemble,
            initial_rounds,
            seed,
            rng: source(derive_seed(seed, 0x7e)),
            history: History::default(),
            model: None,
            last_rebuild: i64::MIN,
            rebuilds: 0,
            fit_secs: 0.0,
        })
    }

    pub fn model(&self) -> Option<&EnsembleModel> {
        self.model.as_ref()
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Value of `⌈8 ln t⌉` at the last rebuild.
    pub fn last_rebuild(&self) -> i64 {
        self.last_rebuild
    }

    /// Serialized history, model dump and generator state.
    pub fn checkpoint(&self) -> String {
        serde_json::to_string(self).expect("agent serialization cannot fail")
    }

    pub fn restore(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn refit(&mut self, t: u64) -> Result<()> {
        let start = Instant::now();
        let config = EnsembleConfig {
            seed: derive_seed(self.seed, 1 + self.rebuilds),
            ..self.ensemble.clone()
        };
        self.model = Some(EnsembleModel::fit(&self.history.samples, &config)?);
        self.fit_secs += start.elapsed().as_secs_f64();
        self.last_rebuild = rebuild_value(t + 1, self.policy.rebuild_coefficient);
        self.rebuilds += 1;
        Ok(())
    }
}

impl Agent for TreeEnsembleAgent {
    fn scores(&mut self, t: u64, contexts: &[FeatureVector]) -> Result<Vec<ArmScore>> {
        let Some(model) = &self.model else {
            // Initial phase: uniformly random play.
            return Ok((0..contexts.len())
                .map(|arm| ArmScore {
                    arm,
                    score: -self.rng.random::<f64>(),
                    posterior: None,
                })
                .collect());
        };
        let posteriors: Vec<_> = if contexts.len() >= PARALLEL_ARMS {
            exec::map_slice(contexts, |x| model.posterior(x))
        } else {
            contexts.iter().map(|x| model.posterior(x)).collect()
        };
        let nu = self.policy.exploration;
        let mut out = Vec::with_capacity(contexts.len());
        for (arm, p) in posteriors.into_iter().enumerate() {
            let p = p?;
            let score = match self.policy.method {
                Method::Ucb => ucb_score(&p, t.max(2), nu)?,
                Method::Ts => ts_sample(&p, nu, &mut self.rng)?,
            };
            out.push(ArmScore {
                arm,
                score,
                posterior: Some(p),
            });
        }
        Ok(out)
    }

    fn observe_batch(&mut self, t: u64, batch: &[Observation]) -> Result<()> {
        for o in batch {
            if !o.reward.is_finite() {
                return Err(Error::NonFinite(format!("reward {} for arm {}", o.reward, o.arm)));
            }
        }
        for o in batch {
            self.history.push(Sample::new(o.context.clone(), o.reward)?);
        }
        self.history.t = t;
        let enough = self.history.len() >= 2 * MIN_LEAF;
        let due = match &self.model {
            None => t >= self.initial_rounds && enough,
            Some(_) => {
                self.policy.refit_every_round
                    || should_rebuild_with(t + 1, self.last_rebuild, self.policy.rebuild_coefficient)
            }
        };
        if due {
            return self.refit(t);
        }
        if let Some(model) = &mut self.model {
            for o in batch {
                model.update(&o.context, o.reward)?;
            }
        }
        Ok(())
    }

    fn rng(&mut self) -> &mut RandomSource {
        &mut self.rng
    }

    fn fits(&self) -> u64 {
        self.rebuilds
    }

    fn fit_seconds(&self) -> f64 {
        self.fit_secs
    }
}
