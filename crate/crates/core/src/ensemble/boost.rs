use super::{assign_leaf_stats, EnsembleConfig, EnsembleModel, Trainer};
use crate::tree::matrix::FeatureMatrix;
use crate::tree::{fit_on_matrix, FeatureAccess, FeatureRef, Sample, TreeConfig, MIN_LEAF};
use crate::{Error, Result};

/// Squared-loss gradient boosting. Tree `n` is grown on the residuals of the
/// prefix ensemble; its leaf outputs are `η` times the mean residual.
pub fn fit_gbdt(data: &[Sample], config: &EnsembleConfig) -> Result<EnsembleModel> {
    config.validate()?;
    let needed = 2 * MIN_LEAF;
    if data.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: data.len(),
        });
    }
    let m = FeatureMatrix::from_samples(data)?;
    let n = m.n_rows;
    let base = config
        .base_score
        .unwrap_or_else(|| m.targets.iter().sum::<f64>() / n as f64);
    let eta = config.learning_rate;
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_leaf: MIN_LEAF,
        max_features: None,
    };
    let features: Vec<FeatureRef> = (0..m.shape.numeric_count)
        .map(FeatureRef::Numeric)
        .chain((0..m.shape.categorical_count).map(FeatureRef::Categorical))
        .collect();
    let all: Vec<u32> = (0..n as u32).collect();
    let rows: Vec<_> = (0..n).map(|r| m.row(r)).collect();

    let mut staged = vec![base; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_trees);
    for t in 0..config.n_trees {
        for i in 0..n {
            residual[i] = m.targets[i] - staged[i];
        }
        let mut tree = fit_on_matrix(&m, &all, &residual, &features, &tree_config);
        for leaf in &mut tree.leaves {
            leaf.value *= eta;
        }
        let routed = assign_leaf_stats(t, &mut tree, &rows, |i| eta * residual[i])?;
        for (p, &leaf) in staged.iter_mut().zip(&routed) {
            *p += tree.leaves[leaf].value;
        }
        trees.push(tree);
    }
    Ok(EnsembleModel {
        config: config.clone(),
        base_score: base,
        shape: m.shape,
        trees,
    })
}

/// Recomputes every leaf from `data` with one staged sweep: the contribution
/// of sample `i` to tree `n` is `η (r_i - p_{n-1}(x_i))`, where the staged
/// prediction uses the fit-time leaf outputs of trees `1..n-1`.
pub fn set_leaf_values_gbdt(model: &mut EnsembleModel, data: &[Sample]) -> Result<()> {
    if model.config.trainer != Trainer::Boosting {
        return Err(Error::InvalidArgument("model was not trained by boosting".into()));
    }
    for s in data {
        model.shape.check(&s.x)?;
    }
    let xs: Vec<_> = data.iter().map(|s| &s.x).collect();
    let ys: Vec<f64> = data.iter().map(|s| s.target).collect();
    staged_sweep(model, &xs, &ys)
}

fn staged_sweep<A: FeatureAccess + Sync>(
    model: &mut EnsembleModel,
    xs: &[A],
    ys: &[f64],
) -> Result<()> {
    let eta = model.config.learning_rate;
    let mut staged = vec![model.base_score; xs.len()];
    for (t, tree) in model.trees.iter_mut().enumerate() {
        let routed = assign_leaf_stats(t, tree, xs, |i| eta * (ys[i] - staged[i]))?;
        for (p, &leaf) in staged.iter_mut().zip(&routed) {
            *p += tree.leaves[leaf].value;
        }
    }
    Ok(())
}
