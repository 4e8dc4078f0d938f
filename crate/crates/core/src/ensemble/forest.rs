use rand::seq::SliceRandom;
use rand::Rng;

use super::{assign_leaf_stats, EnsembleConfig, EnsembleModel, Trainer};
use crate::exec;
use crate::rng::{derive_seed, source};
use crate::tree::matrix::FeatureMatrix;
use crate::tree::{fit_on_matrix, FeatureAccess, RegressionTree, Sample, TreeConfig, MIN_LEAF};
use crate::{Error, Result};

/// Bagged forest: every tree is grown on its own resample and feature
/// subset, then leaf values are set from the full data set.
pub fn fit_random_forest(data: &[Sample], config: &EnsembleConfig) -> Result<EnsembleModel> {
    config.validate()?;
    let needed = 2 * MIN_LEAF;
    if data.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: data.len(),
        });
    }
    let m = FeatureMatrix::from_samples(data)?;
    let d = m.shape.feature_count();
    let max_features = match config.feature_fraction {
        Some(f) => ((f * d as f64).ceil() as usize).clamp(1, d),
        None => ((d as f64).sqrt().ceil() as usize).clamp(1, d),
    };
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_leaf: MIN_LEAF,
        max_features: Some(max_features),
    };
    let n = m.n_rows;
    let bag = ((config.bag_fraction * n as f64).ceil() as usize).clamp(needed, n.max(needed));
    let rows: Vec<_> = (0..n).map(|r| m.row(r)).collect();
    let weight = 1.0 / config.n_trees as f64;

    let trees = exec::map_indexed(config.n_trees, |t| -> Result<RegressionTree> {
        let mut rng = source(derive_seed(config.seed, t as u64));
        let sample: Vec<u32> = if config.bootstrap {
            (0..bag).map(|_| rng.random_range(0..n as u32)).collect()
        } else {
            let mut all: Vec<u32> = (0..n as u32).collect();
            all.shuffle(&mut rng);
            all.truncate(bag);
            all
        };
        let targets: Vec<f64> = sample.iter().map(|&r| m.targets[r as usize]).collect();
        let features = crate::tree::feature_subset(&m.shape, tree_config.max_features, &mut rng);
        let mut tree = fit_on_matrix(&m, &sample, &targets, &features, &tree_config);
        assign_rf(t, &mut tree, &rows, &m.targets, weight)?;
        Ok(tree)
    });
    Ok(EnsembleModel {
        config: config.clone(),
        base_score: 0.0,
        shape: m.shape,
        trees: trees.into_iter().collect::<Result<_>>()?,
    })
}

/// Recomputes every leaf from `data`: each routed sample contributes `r / N`.
pub fn set_leaf_values_rf(model: &mut EnsembleModel, data: &[Sample]) -> Result<()> {
    if model.config.trainer != Trainer::Bagging {
        return Err(Error::InvalidArgument("model was not trained by bagging".into()));
    }
    for s in data {
        model.shape.check(&s.x)?;
    }
    let xs: Vec<_> = data.iter().map(|s| &s.x).collect();
    let ys: Vec<f64> = data.iter().map(|s| s.target).collect();
    let weight = 1.0 / model.trees.len() as f64;
    let trees = std::mem::take(&mut model.trees);
    let trees = exec::map_vec(trees, |t, mut tree| {
        assign_rf(t, &mut tree, &xs, &ys, weight).map(|_| tree)
    });
    model.trees = trees.into_iter().collect::<Result<_>>()?;
    Ok(())
}

fn assign_rf<A: FeatureAccess + Sync>(
    index: usize,
    tree: &mut RegressionTree,
    xs: &[A],
    ys: &[f64],
    weight: f64,
) -> Result<()> {
    assign_leaf_stats(index, tree, xs, |i| ys[i] * weight)?;
    for leaf in &mut tree.leaves {
        leaf.value = leaf.stats.mean();
    }
    Ok(())
}
