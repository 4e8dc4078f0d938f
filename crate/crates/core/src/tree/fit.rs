use rand::seq::index::sample as sample_indices;

use super::matrix::FeatureMatrix;
use super::{
    FeatureRef, Leaf, LeafStats, Node, RegressionTree, SplitRule, TreeConfig, TreeShape,
    PURE_NODE_VARIANCE,
};
use crate::rng::RandomSource;

/// Relative slack under which two split gains count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Draws the features a tree may split on, in ascending global order.
pub(crate) fn feature_subset(
    shape: &TreeShape,
    max_features: Option<usize>,
    rng: &mut RandomSource,
) -> Vec<FeatureRef> {
    let total = shape.feature_count();
    let feature = |i: usize| {
        if i < shape.numeric_count {
            FeatureRef::Numeric(i)
        } else {
            FeatureRef::Categorical(i - shape.numeric_count)
        }
    };
    match max_features {
        Some(k) if k < total => {
            let mut idx = sample_indices(rng, total, k.max(1)).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(feature).collect()
        }
        _ => (0..total).map(feature).collect(),
    }
}

/// Grows a tree over the multiset `rows` of matrix rows. `targets[p]` is the
/// regression target of position `p` (one position per entry of `rows`).
pub(crate) fn fit_on_matrix(
    m: &FeatureMatrix,
    rows: &[u32],
    targets: &[f64],
    features: &[FeatureRef],
    config: &TreeConfig,
) -> RegressionTree {
    debug_assert_eq!(rows.len(), targets.len());
    let n = rows.len();
    let mut num_feats = Vec::new();
    let mut cat_feats = Vec::new();
    for f in features {
        match *f {
            FeatureRef::Numeric(i) => num_feats.push(i),
            FeatureRef::Categorical(i) => cat_feats.push(i),
        }
    }

    // Per numeric feature: positions sorted by value rank (counting sort), and
    // the rank of every position.
    let mut orders = Vec::with_capacity(num_feats.len());
    let mut pos_ranks = Vec::with_capacity(num_feats.len());
    for &f in &num_feats {
        let col = &m.numeric[f];
        let ranks: Vec<u32> = rows.iter().map(|&r| col.ranks[r as usize]).collect();
        let mut counts = vec![0u32; col.distinct.len() + 1];
        for &r in &ranks {
            counts[r as usize + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut order = vec![0u32; n];
        for (p, &r) in ranks.iter().enumerate() {
            let slot = &mut counts[r as usize];
            order[*slot as usize] = p as u32;
            *slot += 1;
        }
        orders.push(order);
        pos_ranks.push(ranks);
    }
    let max_card = cat_feats
        .iter()
        .map(|&f| m.cardinalities[f] as usize)
        .max()
        .unwrap_or(0);

    let mut b = Builder {
        m,
        config,
        rows,
        y: targets,
        num_feats,
        cat_feats,
        orders,
        pos_ranks,
        pos: (0..n as u32).collect(),
        go_left: vec![false; n],
        scratch: Vec::with_capacity(n),
        cat_count: vec![0; max_card],
        cat_sum: vec![0.0; max_card],
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    b.build(0, n, 0);
    RegressionTree {
        shape: m.shape,
        max_depth: config.max_depth,
        nodes: b.nodes,
        leaves: b.leaves,
    }
}

struct Builder<'a> {
    m: &'a FeatureMatrix,
    config: &'a TreeConfig,
    rows: &'a [u32],
    y: &'a [f64],
    num_feats: Vec<usize>,
    cat_feats: Vec<usize>,
    orders: Vec<Vec<u32>>,
    pos_ranks: Vec<Vec<u32>>,
    pos: Vec<u32>,
    go_left: Vec<bool>,
    scratch: Vec<u32>,
    cat_count: Vec<u32>,
    cat_sum: Vec<f64>,
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
}

struct Candidate {
    gain: f64,
    rule: SplitRule,
}

impl Builder<'_> {
    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let n = hi - lo;
        let sum: f64 = self.pos[lo..hi].iter().map(|&p| self.y[p as usize]).sum();
        let mean = sum / n as f64;
        let sse: f64 = self.pos[lo..hi]
            .iter()
            .map(|&p| {
                let d = self.y[p as usize] - mean;
                d * d
            })
            .sum();

        let min_leaf = self.config.min_leaf.max(1);
        let splittable = depth < self.config.max_depth
            && n >= 2 * min_leaf
            && sse / n as f64 > PURE_NODE_VARIANCE;
        let best = if splittable {
            self.best_split(lo, hi, sum, min_leaf)
                .filter(|c| c.gain > TIE_TOLERANCE * sse.max(f64::MIN_POSITIVE))
        } else {
            None
        };
        let Some(best) = best else {
            return self.make_leaf(lo, hi, depth, mean);
        };

        for &p in &self.pos[lo..hi] {
            let row = self.m.row(self.rows[p as usize] as usize);
            self.go_left[p as usize] = best.rule.goes_left(&row);
        }
        let n_left = partition(&mut self.pos[lo..hi], &self.go_left, &mut self.scratch);
        for order in &mut self.orders {
            partition(&mut order[lo..hi], &self.go_left, &mut self.scratch);
        }

        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { leaf: usize::MAX });
        let left = self.build(lo, lo + n_left, depth + 1);
        let right = self.build(lo + n_left, hi, depth + 1);
        self.nodes[at] = Node::Split {
            rule: best.rule,
            left,
            right,
        };
        at
    }

    fn make_leaf(&mut self, lo: usize, hi: usize, depth: usize, mean: f64) -> usize {
        let stats = LeafStats::from_values(self.pos[lo..hi].iter().map(|&p| self.y[p as usize]));
        self.leaves.push(Leaf {
            stats,
            value: mean,
            depth,
        });
        self.nodes.push(Node::Leaf {
            leaf: self.leaves.len() - 1,
        });
        self.nodes.len() - 1
    }

    fn best_split(&mut self, lo: usize, hi: usize, sum: f64, min_leaf: usize) -> Option<Candidate> {
        let n = hi - lo;
        let nf = n as f64;
        let base = sum * sum / nf;
        let mut best: Option<Candidate> = None;
        let consider = |gain: f64, rule: SplitRule, best: &mut Option<Candidate>| {
            let better = match best {
                None => true,
                Some(b) => gain > b.gain + TIE_TOLERANCE * b.gain.abs().max(gain.abs()),
            };
            if better {
                *best = Some(Candidate { gain, rule });
            }
        };

        for (k, &f) in self.num_feats.iter().enumerate() {
            let order = &self.orders[k][lo..hi];
            let ranks = &self.pos_ranks[k];
            let distinct = &self.m.numeric[f].distinct;
            let mut s_left = 0.0;
            let mut prev_rank = ranks[order[0] as usize];
            for i in 0..n - 1 {
                let p = order[i] as usize;
                s_left += self.y[p];
                let next_rank = ranks[order[i + 1] as usize];
                let n_left = i + 1;
                if next_rank != prev_rank && n_left >= min_leaf && n - n_left >= min_leaf {
                    let nl = n_left as f64;
                    let s_right = sum - s_left;
                    let gain = s_left * s_left / nl + s_right * s_right / (nf - nl) - base;
                    let a = distinct[prev_rank as usize];
                    let b = distinct[next_rank as usize];
                    let mut threshold = a + (b - a) * 0.5;
                    if threshold >= b {
                        threshold = a;
                    }
                    consider(
                        gain,
                        SplitRule::Numeric {
                            feature_index: f,
                            threshold,
                        },
                        &mut best,
                    );
                }
                prev_rank = next_rank;
            }
        }

        for &f in &self.cat_feats {
            let codes = &self.m.categorical[f];
            let card = self.m.cardinalities[f] as usize;
            for &p in &self.pos[lo..hi] {
                let c = codes[self.rows[p as usize] as usize] as usize;
                self.cat_count[c] += 1;
                self.cat_sum[c] += self.y[p as usize];
            }
            for code in 0..card {
                let cnt = self.cat_count[code] as usize;
                if cnt >= min_leaf && n - cnt >= min_leaf {
                    let nl = cnt as f64;
                    let s_left = self.cat_sum[code];
                    let s_right = sum - s_left;
                    let gain = s_left * s_left / nl + s_right * s_right / (nf - nl) - base;
                    consider(
                        gain,
                        SplitRule::Categorical {
                            feature_index: f,
                            category_code: code as u32,
                        },
                        &mut best,
                    );
                }
                self.cat_count[code] = 0;
                self.cat_sum[code] = 0.0;
            }
        }
        best
    }
}

/// Stable partition of `items` by `go_left[item]`; returns the left count.
fn partition(items: &mut [u32], go_left: &[bool], scratch: &mut Vec<u32>) -> usize {
    scratch.clear();
    let mut w = 0;
    for i in 0..items.len() {
        let p = items[i];
        if go_left[p as usize] {
            items[w] = p;
            w += 1;
        } else {
            scratch.push(p);
        }
    }
    items[w..].copy_from_slice(scratch);
    w
}
