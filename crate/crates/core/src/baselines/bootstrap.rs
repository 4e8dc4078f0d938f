use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleConfig, EnsembleModel};
use crate::exec;
use crate::policy::{Agent, ArmScore, Observation};
use crate::rng::{derive_seed, source, RandomSource};
use crate::tree::matrix::FeatureMatrix;
use crate::tree::{feature_subset, fit_on_matrix, FeatureVector, RegressionTree, Sample, TreeConfig};
use crate::{Error, Result};

/// Ensembles need this many resampled points; smaller histories score by
/// the resample mean.
const MIN_ENSEMBLE_SAMPLES: usize = 4;

/// Per-arm reward model refitted on a bootstrap resample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum BootstrapModel {
    /// Single CART tree grown to `max_depth` with one-sample leaves allowed.
    Tree { max_depth: usize },
    /// Bagged forest or boosted ensemble, chosen by the config's trainer.
    Ensemble { ensemble: EnsembleConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub model: BootstrapModel,
    /// Refit every `refit_stride` rounds; 1 refits every round.
    pub refit_stride: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            model: BootstrapModel::Tree { max_depth: 64 },
            refit_stride: 1,
        }
    }
}

impl BootstrapConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.refit_stride == 0 {
            out.push("refit_stride must be >= 1".to_string());
        }
        match &self.model {
            BootstrapModel::Tree { max_depth } if *max_depth == 0 => {
                out.push("tree max_depth must be >= 1".to_string())
            }
            BootstrapModel::Ensemble { ensemble } => out.extend(ensemble.problems()),
            _ => {}
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ArmFit {
    Constant { value: f64 },
    Tree { tree: RegressionTree },
    Ensemble { model: EnsembleModel },
}

impl ArmFit {
    fn predict(&self, x: &FeatureVector) -> Result<f64> {
        match self {
            ArmFit::Constant { value } => Ok(*value),
            ArmFit::Tree { tree } => {
                tree.shape.check(x)?;
                Ok(tree.value(x))
            }
            ArmFit::Ensemble { model } => model.predict(x),
        }
    }
}

/// One tree model per arm, refitted on a bootstrap resample of that arm's
/// own history. Unplayed arms score `+∞`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeBootstrapAgent {
    pub config: BootstrapConfig,
    histories: Vec<Vec<Sample>>,
    fitted: Vec<Option<ArmFit>>,
    last_refit: u64,
    rng: RandomSource,
    fits: u64,
    #[serde(skip)]
    matrices: Vec<Option<Arc<FeatureMatrix>>>,
    #[serde(skip)]
    fit_secs: f64,
}

impl TreeBootstrapAgent {
    pub fn new(config: BootstrapConfig, seed: u64) -> Result<Self> {
        let problems = config.problems();
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self {
            config,
            histories: Vec::new(),
            fitted: Vec::new(),
            last_refit: 0,
            rng: source(derive_seed(seed, 0xb0)),
            fits: 0,
            matrices: Vec::new(),
            fit_secs: 0.0,
        })
    }

    pub fn history(&self, arm: usize) -> &[Sample] {
        self.histories.get(arm).map_or(&[], Vec::as_slice)
    }

    fn grow(&mut self, arms: usize) {
        if self.histories.len() < arms {
            self.histories.resize(arms, Vec::new());
        }
        if self.fitted.len() < self.histories.len() {
            self.fitted.resize(self.histories.len(), None);
        }
        if self.matrices.len() < self.histories.len() {
            self.matrices.resize(self.histories.len(), None);
        }
    }

    fn refit(&mut self, t: u64, arms: usize) -> Result<()> {
        let due = t >= self.last_refit + self.config.refit_stride || self.last_refit == 0;
        let jobs: Vec<(usize, u64, Option<Arc<FeatureMatrix>>)> = (0..arms)
            .filter(|&a| !self.histories[a].is_empty() && (due || self.fitted[a].is_none()))
            .map(|a| (a, self.rng.next_u64(), self.matrices[a].take()))
            .collect();
        if jobs.is_empty() {
            return Ok(());
        }
        if due {
            self.last_refit = t;
        }
        let start = Instant::now();
        let histories = &self.histories;
        let model = &self.config.model;
        let results = exec::map_vec(jobs, |_, (arm, seed, matrix)| {
            fit_arm(model, &histories[arm], matrix, seed).map(|(fit, m)| (arm, fit, m))
        });
        for r in results {
            let (arm, fit, matrix) = r?;
            self.fitted[arm] = Some(fit);
            self.matrices[arm] = matrix;
            self.fits += 1;
        }
        self.fit_secs += start.elapsed().as_secs_f64();
        Ok(())
    }
}

fn fit_arm(
    model: &BootstrapModel,
    history: &[Sample],
    matrix: Option<Arc<FeatureMatrix>>,
    seed: u64,
) -> Result<(ArmFit, Option<Arc<FeatureMatrix>>)> {
    let mut rng = source(seed);
    let n = history.len();
    let draws: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
    match model {
        BootstrapModel::Tree { max_depth } => {
            let m = match matrix {
                Some(m) => m,
                None => Arc::new(FeatureMatrix::from_samples(history)?),
            };
            let targets: Vec<f64> = draws.iter().map(|&r| m.targets[r as usize]).collect();
            let config = TreeConfig {
                max_depth: *max_depth,
                min_leaf: 1,
                max_features: None,
            };
            let features = feature_subset(&m.shape, None, &mut rng);
            let tree = fit_on_matrix(&m, &draws, &targets, &features, &config);
            Ok((ArmFit::Tree { tree }, Some(m)))
        }
        BootstrapModel::Ensemble { ensemble } => {
            if n < MIN_ENSEMBLE_SAMPLES {
                let value = draws.iter().map(|&r| history[r as usize].target).sum::<f64>() / n as f64;
                return Ok((ArmFit::Constant { value }, matrix));
            }
            let resample: Vec<Sample> = draws.iter().map(|&r| history[r as usize].clone()).collect();
            let config = EnsembleConfig {
                seed: rng.next_u64(),
                ..ensemble.clone()
            };
            let model = EnsembleModel::fit(&resample, &config)?;
            Ok((ArmFit::Ensemble { model }, matrix))
        }
    }
}

impl Agent for TreeBootstrapAgent {
    fn scores(&mut self, t: u64, contexts: &[FeatureVector]) -> Result<Vec<ArmScore>> {
        self.grow(contexts.len());
        self.refit(t, contexts.len())?;
        contexts
            .iter()
            .enumerate()
            .map(|(arm, x)| {
                let score = match &self.fitted[arm] {
                    Some(f) => f.predict(x)?,
                    None => f64::INFINITY,
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
            self.grow(o.arm + 1);
            self.histories[o.arm].push(Sample::new(o.context.clone(), o.reward)?);
            self.matrices[o.arm] = None;
        }
        Ok(())
    }

    fn rng(&mut self) -> &mut RandomSource {
        &mut self.rng
    }

    fn fits(&self) -> u64 {
        self.fits
    }

    fn fit_seconds(&self) -> f64 {
        self.fit_secs
    }
}
