//! Bagged and boosted ensembles of [`RegressionTree`]s and the aggregated
//! Gaussian estimate `(μ̃, σ̃², c)` they produce for a context.

mod boost;
mod forest;

use serde::{Deserialize, Serialize};

use crate::tree::{FeatureAccess, FeatureVector, RegressionTree, Sample, TreeShape};
use crate::{Error, Result};

pub use boost::{fit_gbdt, set_leaf_values_gbdt};
pub use forest::{fit_random_forest, set_leaf_values_rf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainer {
    Bagging,
    Boosting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub trainer: Trainer,
    /// Boosting shrinkage η.
    pub learning_rate: f64,
    /// Boosting base score; `None` uses the mean training target.
    pub base_score: Option<f64>,
    /// Bootstrap sample size as a fraction of the data (bagging).
    pub bag_fraction: f64,
    /// Resample with replacement (bagging). `false` takes the first
    /// `bag_fraction` of a random permutation.
    pub bootstrap: bool,
    /// Fraction of features each bagged tree may split on; `None` uses
    /// ⌈√d⌉ features.
    pub feature_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 10,
            trainer: Trainer::Boosting,
            learning_rate: 0.3,
            base_score: None,
            bag_fraction: 1.0,
            bootstrap: true,
            feature_fraction: None,
            seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn bagging(n_trees: usize, max_depth: usize) -> Self {
        Self {
            n_trees,
            max_depth,
            trainer: Trainer::Bagging,
            ..Self::default()
        }
    }

    pub fn boosting(n_trees: usize, max_depth: usize) -> Self {
        Self {
            n_trees,
            max_depth,
            trainer: Trainer::Boosting,
            ..Self::default()
        }
    }

    /// Problems with the configuration, as `field: message` strings.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_trees == 0 {
            out.push("n_trees: must be at least 1".to_string());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate <= 1.0) {
            out.push(format!("learning_rate: {} outside [0, 1]", self.learning_rate));
        }
        if !(self.bag_fraction > 0.0 && self.bag_fraction <= 1.0) {
            out.push(format!("bag_fraction: {} outside (0, 1]", self.bag_fraction));
        }
        if let Some(f) = self.feature_fraction {
            if !(f > 0.0 && f <= 1.0) {
                out.push(format!("feature_fraction: {f} outside (0, 1]"));
            }
        }
        if let Some(b) = self.base_score {
            if !b.is_finite() {
                out.push(format!("base_score: {b} is not finite"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(p.join("; ")))
        }
    }
}

/// Gaussian reward estimate for one context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPosterior {
    pub mu: f64,
    pub var: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub config: EnsembleConfig,
    /// Added to every prediction; zero for bagging.
    pub base_score: f64,
    pub shape: TreeShape,
    pub trees: Vec<RegressionTree>,
}

impl EnsembleModel {
    /// Trains with the configured trainer.
    pub fn fit(data: &[Sample], config: &EnsembleConfig) -> Result<Self> {
        match config.trainer {
            Trainer::Bagging => fit_random_forest(data, config),
            Trainer::Boosting => fit_gbdt(data, config),
        }
    }

    /// `b + Σ o_n(x)`.
    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        self.shape.check(x)?;
        let mut mu = self.base_score;
        for t in &self.trees {
            mu += t.leaves[t.route(x)].stats.mean();
        }
        Ok(mu)
    }

    /// `μ̃ = b + Σ o_n`, `σ̃² = Σ s²_n / c_n`, `c = Σ c_n` over the visited leaves.
    pub fn posterior(&self, x: &FeatureVector) -> Result<ArmPosterior> {
        self.shape.check(x)?;
        self.posterior_unchecked(x)
    }

    pub(crate) fn posterior_unchecked<A: FeatureAccess + ?Sized>(&self, x: &A) -> Result<ArmPosterior> {
        let mut mu = self.base_score;
        let mut var = 0.0;
        let mut count = 0u64;
        for (n, t) in self.trees.iter().enumerate() {
            let leaf = t.route(x);
            let st = &t.leaves[leaf].stats;
            let s2 = st.variance()?.ok_or(Error::UndefinedLeafVariance {
                tree: n,
                leaf,
                count: st.count,
            })?;
            mu += st.mean();
            var += s2 / st.count as f64;
            count += st.count;
        }
        Ok(ArmPosterior { mu, var, count })
    }

    /// Folds one new observation into the leaves it reaches, without
    /// changing any tree structure.
    pub fn update(&mut self, x: &FeatureVector, reward: f64) -> Result<()> {
        self.shape.check(x)?;
        if !reward.is_finite() {
            return Err(Error::NonFinite(format!("reward {reward}")));
        }
        match self.config.trainer {
            Trainer::Bagging => {
                let w = reward / self.trees.len() as f64;
                for t in &mut self.trees {
                    let leaf = t.route(x);
                    t.update_leaf(leaf, w)?;
                }
            }
            Trainer::Boosting => {
                let eta = self.config.learning_rate;
                let mut staged = self.base_score;
                for t in &mut self.trees {
                    let leaf = t.route(x);
                    t.update_leaf(leaf, eta * (reward - staged))?;
                    staged += t.leaves[leaf].value;
                }
            }
        }
        Ok(())
    }

    /// Serializes the model to its text dump.
    pub fn dump(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn load(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.trees.len() != m.config.n_trees {
            return Err(Error::parse(
                "model dump",
                format!("{} trees but config says {}", m.trees.len(), m.config.n_trees),
            ));
        }
        if let Some(t) = m.trees.iter().find(|t| t.shape != m.shape) {
            return Err(Error::SchemaMismatch(format!(
                "tree schema {:?} differs from model schema {:?}",
                t.shape.schema_id, m.shape.schema_id
            )));
        }
        Ok(m)
    }
}

/// Fills each tree's leaf statistics from per-sample contributions, collapsing
/// leaves that end up with fewer than two contributions. `contribution(i,
/// leaf_value)` gives sample `i`'s contribution to the tree.
pub(crate) fn assign_leaf_stats<A, F>(
    tree_index: usize,
    tree: &mut RegressionTree,
    xs: &[A],
    contribution: F,
) -> Result<Vec<usize>>
where
    A: FeatureAccess + Sync,
    F: Fn(usize) -> f64,
{
    loop {
        let routed: Vec<usize> = xs.iter().map(|x| tree.route(x)).collect();
        let mut stats = vec![crate::tree::LeafStats::default(); tree.leaf_count()];
        for (i, &leaf) in routed.iter().enumerate() {
            stats[leaf].push(contribution(i));
        }
        let thin: Vec<usize> = (0..stats.len()).filter(|&l| stats[l].count < 2).collect();
        if thin.is_empty() {
            for (leaf, st) in tree.leaves.iter_mut().zip(stats) {
                leaf.stats = st;
            }
            return Ok(routed);
        }
        if tree.leaf_count() == 1 {
            return Err(Error::UndefinedLeafVariance {
                tree: tree_index,
                leaf: 0,
                count: stats[0].count,
            });
        }
        tree.collapse_leaves(&thin);
    }
}
