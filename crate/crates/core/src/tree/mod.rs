//! CART regression trees whose leaves carry `(o, s², c)`.
//!
//! Splits minimise the summed squared error of the children. Numeric tests
//! send `value <= threshold` left; categorical tests send `code == category`
//! left. Every leaf holds at least [`MIN_LEAF`] training samples so its sample
//! variance is defined.

mod fit;
mod leaf;
pub(crate) mod matrix;
mod schema;

use serde::{Deserialize, Serialize};

use crate::rng::RandomSource;
use crate::{Error, Result};

pub(crate) use fit::{feature_subset, fit_on_matrix};
pub use leaf::{LeafStats, VARIANCE_TOLERANCE};
pub use schema::{FeatureAccess, FeatureRef, FeatureSchema, FeatureVector, Sample, SchemaId};

/// Smallest number of training samples a leaf may hold.
pub const MIN_LEAF: usize = 2;

/// Nodes whose target variance is at or below this stop splitting.
pub const PURE_NODE_VARIANCE: f64 = 1e-12;

/// Growth limits for one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Size of the random feature subset drawn once for the whole tree.
    /// `None` uses every feature.
    pub max_features: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 10,
            min_leaf: MIN_LEAF,
            max_features: None,
        }
    }
}

impl TreeConfig {
    pub fn with_depth(max_depth: usize) -> Self {
        Self {
            max_depth,
            ..Self::default()
        }
    }
}

/// Binary test applied at an internal node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "feature_kind", rename_all = "snake_case")]
pub enum SplitRule {
    Numeric { feature_index: usize, threshold: f64 },
    Categorical { feature_index: usize, category_code: u32 },
}

impl SplitRule {
    #[inline]
    pub fn goes_left<A: FeatureAccess + ?Sized>(&self, x: &A) -> bool {
        match *self {
            SplitRule::Numeric {
                feature_index,
                threshold,
            } => x.numeric(feature_index) <= threshold,
            SplitRule::Categorical {
                feature_index,
                category_code,
            } => x.categorical(feature_index) == category_code,
        }
    }

    pub fn feature(&self) -> FeatureRef {
        match *self {
            SplitRule::Numeric { feature_index, .. } => FeatureRef::Numeric(feature_index),
            SplitRule::Categorical { feature_index, .. } => FeatureRef::Categorical(feature_index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: usize,
    },
}

/// Schema binding of a tree: the schema id plus the vector lengths it expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeShape {
    pub schema_id: SchemaId,
    pub numeric_count: usize,
    pub categorical_count: usize,
}

impl TreeShape {
    pub fn of(x: &FeatureVector) -> Self {
        Self {
            schema_id: x.schema_id,
            numeric_count: x.numeric_values.len(),
            categorical_count: x.categorical_values.len(),
        }
    }

    pub fn from_schema(schema: &FeatureSchema) -> Self {
        Self {
            schema_id: schema.id(),
            numeric_count: schema.numeric_count,
            categorical_count: schema.categorical_count(),
        }
    }

    pub fn feature_count(&self) -> usize {
        self.numeric_count + self.categorical_count
    }

    pub fn check(&self, x: &FeatureVector) -> Result<()> {
        if x.schema_id != self.schema_id
            || x.numeric_values.len() != self.numeric_count
            || x.categorical_values.len() != self.categorical_count
        {
            return Err(Error::SchemaMismatch(format!(
                "vector ({} numeric, {} categorical) does not match tree schema ({}, {})",
                x.numeric_values.len(),
                x.categorical_values.len(),
                self.numeric_count,
                self.categorical_count
            )));
        }
        Ok(())
    }
}

/// A terminal node: the statistics used for scoring plus the fit-time output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub stats: LeafStats,
    /// Output assigned while the tree was grown. Boosting uses it for staged
    /// predictions; it never changes between rebuilds.
    pub value: f64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub shape: TreeShape,
    pub max_depth: usize,
    /// `nodes[0]` is the root.
    pub nodes: Vec<Node>,
    pub leaves: Vec<Leaf>,
}

impl RegressionTree {
    /// A tree consisting of one leaf.
    pub fn single_leaf(shape: TreeShape, stats: LeafStats, value: f64) -> Self {
        Self {
            shape,
            max_depth: 0,
            nodes: vec![Node::Leaf { leaf: 0 }],
            leaves: vec![Leaf {
                stats,
                value,
                depth: 0,
            }],
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Depth of the deepest leaf.
    pub fn depth(&self) -> usize {
        self.leaves.iter().map(|l| l.depth).max().unwrap_or(0)
    }

    /// Leaf reached by `x`, without schema validation.
    #[inline]
    pub fn route<A: FeatureAccess + ?Sized>(&self, x: &A) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { rule, left, right } => {
                    i = if rule.goes_left(x) { *left } else { *right };
                }
                Node::Leaf { leaf } => return *leaf,
            }
        }
    }

    /// The unique leaf `x` reaches from the root.
    pub fn assign_leaf(&self, x: &FeatureVector) -> Result<usize> {
        self.shape.check(x)?;
        Ok(self.route(x))
    }

    /// Adds one contribution to a leaf's running statistics.
    pub fn update_leaf(&mut self, leaf: usize, contribution: f64) -> Result<()> {
        if !contribution.is_finite() {
            return Err(Error::NonFinite(format!("leaf contribution {contribution}")));
        }
        let l = self.leaves.get_mut(leaf).ok_or(Error::UnknownLeaf(leaf))?;
        l.stats.push(contribution);
        Ok(())
    }

    pub fn leaf_stats(&self, leaf: usize) -> Result<&LeafStats> {
        self.leaves
            .get(leaf)
            .map(|l| &l.stats)
            .ok_or(Error::UnknownLeaf(leaf))
    }

    /// Fit-time output of the leaf reached by `x`.
    #[inline]
    pub fn value<A: FeatureAccess + ?Sized>(&self, x: &A) -> f64 {
        self.leaves[self.route(x)].value
    }

    /// Removes the parents of the given leaves, promoting each leaf's sibling
    /// subtree into the parent's place. Leaves whose parent was already
    /// removed in this call, or the root leaf, are skipped. Returns how many
    /// collapses happened; the node and leaf arenas are compacted afterwards,
    /// so leaf ids change.
    pub(crate) fn collapse_leaves(&mut self, leaves: &[usize]) -> usize {
        let mut parent = vec![usize::MAX; self.nodes.len()];
        let mut leaf_node = vec![usize::MAX; self.leaves.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            match n {
                Node::Split { left, right, .. } => {
                    parent[*left] = i;
                    parent[*right] = i;
                }
                Node::Leaf { leaf } => leaf_node[*leaf] = i,
            }
        }
        let mut touched = vec![false; self.nodes.len()];
        let mut collapsed = 0;
        for &leaf in leaves {
            let node = leaf_node[leaf];
            let p = parent[node];
            if p == usize::MAX || touched[p] || touched[node] {
                continue;
            }
            let Node::Split { left, right, .. } = self.nodes[p] else {
                continue;
            };
            let sibling = if left == node { right } else { left };
            if touched[sibling] {
                continue;
            }
            touched[p] = true;
            touched[node] = true;
            touched[sibling] = true;
            self.nodes[p] = self.nodes[sibling].clone();
            collapsed += 1;
        }
        if collapsed > 0 {
            self.compact();
        }
        collapsed
    }

    /// Rebuilds the arenas keeping only nodes reachable from the root and
    /// recomputing leaf depths.
    fn compact(&mut self) {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut leaves = Vec::with_capacity(self.leaves.len());
        self.copy_subtree(0, 0, &mut nodes, &mut leaves);
        self.nodes = nodes;
        self.leaves = leaves;
    }

    fn copy_subtree(
        &self,
        src: usize,
        depth: usize,
        nodes: &mut Vec<Node>,
        leaves: &mut Vec<Leaf>,
    ) -> usize {
        let at = nodes.len();
        match &self.nodes[src] {
            Node::Leaf { leaf } => {
                let mut l = self.leaves[*leaf].clone();
                l.depth = depth;
                leaves.push(l);
                nodes.push(Node::Leaf {
                    leaf: leaves.len() - 1,
                });
            }
            Node::Split { rule, left, right } => {
                let (rule, left, right) = (*rule, *left, *right);
                nodes.push(Node::Leaf { leaf: usize::MAX });
                let l = self.copy_subtree(left, depth + 1, nodes, leaves);
                let r = self.copy_subtree(right, depth + 1, nodes, leaves);
                nodes[at] = Node::Split {
                    rule,
                    left: l,
                    right: r,
                };
            }
        }
        at
    }
}

/// Grows a regression tree on `samples` by greedy variance reduction.
///
/// `rng` only drives the per-tree feature subset when `config.max_features`
/// is set.
pub fn fit_tree(
    samples: &[Sample],
    config: &TreeConfig,
    rng: &mut RandomSource,
) -> Result<RegressionTree> {
    let needed = 2 * config.min_leaf.max(MIN_LEAF);
    if samples.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: samples.len(),
        });
    }
    let m = matrix::FeatureMatrix::from_samples(samples)?;
    let rows: Vec<u32> = (0..m.n_rows as u32).collect();
    let features = feature_subset(&m.shape, config.max_features, rng);
    Ok(fit_on_matrix(&m, &rows, &m.targets, &features, config))
}

#[cfg(test)]
mod tests;
