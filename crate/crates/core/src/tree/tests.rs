use proptest::prelude::*;

use super::*;
use crate::rng;

fn numeric_samples(xs: &[f64], ys: &[f64]) -> (FeatureSchema, Vec<Sample>) {
    let schema = FeatureSchema::numeric(1).unwrap();
    let samples = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| Sample::new(schema.vector(vec![x], vec![]).unwrap(), y).unwrap())
        .collect();
    (schema, samples)
}

fn fit(samples: &[Sample], depth: usize) -> RegressionTree {
    fit_tree(samples, &TreeConfig::with_depth(depth), &mut rng::source(0)).unwrap()
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

#[test]
fn four_sample_split() {
    let (schema, s) = numeric_samples(&[0.0, 0.0, 1.0, 1.0], &[0.0, 0.0, 1.0, 1.0]);
    let t = fit(&s, 1);
    assert_eq!(t.leaf_count(), 2);
    match &t.nodes[0] {
        Node::Split { rule, .. } => assert_eq!(
            *rule,
            SplitRule::Numeric {
                feature_index: 0,
                threshold: 0.5
            }
        ),
        n => panic!("expected split, got {n:?}"),
    }
    let lo = t.assign_leaf(&schema.vector(vec![0.0], vec![]).unwrap()).unwrap();
    let hi = t.assign_leaf(&schema.vector(vec![1.0], vec![]).unwrap()).unwrap();
    for (leaf, o) in [(lo, 0.0), (hi, 1.0)] {
        let st = t.leaf_stats(leaf).unwrap();
        assert_eq!(st.count, 2);
        assert_eq!(st.mean(), o);
        assert_eq!(st.variance().unwrap(), Some(0.0));
    }
}

#[test]
fn constant_targets_give_root_leaf() {
    let (_, s) = numeric_samples(&[1.0, 2.0, 3.0, 4.0, 5.0], &[5.0; 5]);
    let t = fit(&s, 10);
    assert_eq!(t.leaf_count(), 1);
    let st = t.leaf_stats(0).unwrap();
    assert_eq!((st.count, st.mean()), (5, 5.0));
    assert_eq!(st.variance().unwrap(), Some(0.0));
}

#[test]
fn depth_zero_is_mean_and_variance() {
    let ys = [1.0, 4.0, 2.0, 8.0, 3.0];
    let (_, s) = numeric_samples(&[1.0, 2.0, 3.0, 4.0, 5.0], &ys);
    let t = fit(&s, 0);
    assert_eq!(t.leaf_count(), 1);
    let st = t.leaf_stats(0).unwrap();
    assert!((st.mean() - 3.6).abs() < 1e-12);
    assert!((st.variance().unwrap().unwrap() - sample_variance(&ys)).abs() < 1e-12);
}

#[test]
fn too_few_samples() {
    let (_, s) = numeric_samples(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]);
    let err = fit_tree(&s, &TreeConfig::default(), &mut rng::source(0)).unwrap_err();
    assert!(matches!(err, Error::InsufficientSamples { needed: 4, got: 3 }));
}

#[test]
fn mixed_schemas_rejected() {
    let (_, mut s) = numeric_samples(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4]);
    let other = FeatureSchema::numeric(2).unwrap();
    s[2] = Sample::new(other.vector(vec![0.0, 1.0], vec![]).unwrap(), 0.0).unwrap();
    let err = fit_tree(&s, &TreeConfig::default(), &mut rng::source(0)).unwrap_err();
    assert!(matches!(err, Error::SchemaMismatch(_)));
}

#[test]
fn assign_leaf_examples() {
    let schema = FeatureSchema::new(1, vec![4]).unwrap();
    let shape = TreeShape::from_schema(&schema);
    let root = RegressionTree::single_leaf(shape, LeafStats::from_values([1.0, 2.0]), 1.5);
    let x = schema.vector(vec![7.0], vec![3]).unwrap();
    assert_eq!(root.assign_leaf(&x).unwrap(), 0);

    let leaf = |v: f64| Leaf {
        stats: LeafStats::from_values([v, v]),
        value: v,
        depth: 1,
    };
    let split = |rule| RegressionTree {
        shape,
        max_depth: 1,
        nodes: vec![
            Node::Split {
                rule,
                left: 1,
                right: 2,
            },
            Node::Leaf { leaf: 0 },
            Node::Leaf { leaf: 1 },
        ],
        leaves: vec![leaf(0.0), leaf(1.0)],
    };
    let t = split(SplitRule::Numeric {
        feature_index: 0,
        threshold: 0.5,
    });
    assert_eq!(t.assign_leaf(&schema.vector(vec![0.3], vec![0]).unwrap()).unwrap(), 0);
    assert_eq!(t.assign_leaf(&schema.vector(vec![0.5], vec![0]).unwrap()).unwrap(), 0);
    assert_eq!(t.assign_leaf(&schema.vector(vec![0.7], vec![0]).unwrap()).unwrap(), 1);
    let t = split(SplitRule::Categorical {
        feature_index: 0,
        category_code: 2,
    });
    assert_eq!(t.assign_leaf(&schema.vector(vec![0.0], vec![2]).unwrap()).unwrap(), 0);
    assert_eq!(t.assign_leaf(&schema.vector(vec![0.0], vec![1]).unwrap()).unwrap(), 1);

    let wrong = FeatureSchema::numeric(1).unwrap().vector(vec![0.3], vec![]).unwrap();
    assert!(matches!(t.assign_leaf(&wrong), Err(Error::SchemaMismatch(_))));
}

#[test]
fn update_leaf_examples() {
    let (schema, s) = numeric_samples(&[0.0; 4], &[1.0; 4]);
    let mut t = fit(&s, 3);
    let mut t2 = t.clone();
    let shape = TreeShape::from_schema(&schema);
    t.leaves[0].stats = LeafStats::from_values([1.0, 1.0]);
    t.update_leaf(0, 4.0).unwrap();
    let st = t.leaf_stats(0).unwrap();
    assert_eq!(st.count, 3);
    assert!((st.mean() - 2.0).abs() < 1e-12);
    assert!((st.variance().unwrap().unwrap() - 3.0).abs() < 1e-12);

    t2.update_leaf(0, 1.0).unwrap();
    assert_eq!(t2.leaf_stats(0).unwrap().variance().unwrap(), Some(0.0));

    assert!(matches!(t2.update_leaf(0, f64::NAN), Err(Error::NonFinite(_))));
    assert!(matches!(t2.update_leaf(9, 1.0), Err(Error::UnknownLeaf(9))));
    assert_eq!(t2.shape, shape);
}

#[test]
fn categorical_split_found() {
    let schema = FeatureSchema::new(0, vec![3]).unwrap();
    let codes = [0u32, 0, 1, 1, 2, 2];
    let ys = [0.0, 0.0, 0.0, 0.0, 9.0, 9.0];
    let s: Vec<Sample> = codes
        .iter()
        .zip(ys)
        .map(|(&c, y)| Sample::new(schema.vector(vec![], vec![c]).unwrap(), y).unwrap())
        .collect();
    let t = fit(&s, 1);
    assert_eq!(
        t.nodes[0],
        Node::Split {
            rule: SplitRule::Categorical {
                feature_index: 0,
                category_code: 2
            },
            left: 1,
            right: 2
        }
    );
}

#[test]
fn ties_go_to_lowest_feature_then_threshold() {
    // Both features separate the targets identically.
    let schema = FeatureSchema::numeric(2).unwrap();
    let rows = [(0.0, 5.0, 0.0), (0.0, 5.0, 0.0), (1.0, 6.0, 1.0), (1.0, 6.0, 1.0)];
    let s: Vec<Sample> = rows
        .iter()
        .map(|&(a, b, y)| Sample::new(schema.vector(vec![a, b], vec![]).unwrap(), y).unwrap())
        .collect();
    let t = fit(&s, 1);
    assert!(matches!(
        t.nodes[0],
        Node::Split {
            rule: SplitRule::Numeric {
                feature_index: 0,
                ..
            },
            ..
        }
    ));

    // Symmetric targets: thresholds 0.5 and 2.5 give equal gain.
    let (_, s) = numeric_samples(&[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0], &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
    let t = fit(&s, 1);
    let Node::Split { rule, .. } = t.nodes[0] else {
        panic!("expected split")
    };
    assert_eq!(
        rule,
        SplitRule::Numeric {
            feature_index: 0,
            threshold: 0.5
        }
    );
}

#[test]
fn feature_subset_is_sorted_and_sized() {
    let shape = TreeShape {
        schema_id: SchemaId(1),
        numeric_count: 5,
        categorical_count: 4,
    };
    let mut r = rng::source(3);
    let f = fit::feature_subset(&shape, Some(3), &mut r);
    assert_eq!(f.len(), 3);
    assert!(f.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(fit::feature_subset(&shape, None, &mut r).len(), 9);
}

#[test]
fn collapse_promotes_sibling() {
    let (_, s) = numeric_samples(
        &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0],
        &[0.0, 0.0, 1.0, 1.0, 5.0, 5.0, 9.0, 9.0],
    );
    let mut t = fit(&s, 3);
    assert_eq!(t.leaf_count(), 4);
    let n = t.collapse_leaves(&[0]);
    assert_eq!(n, 1);
    assert_eq!(t.leaf_count(), 3);
    assert!(t.leaves.iter().all(|l| l.depth <= 2));
    // Every node is still reachable from the root exactly once.
    let mut seen = vec![0; t.nodes.len()];
    let mut stack = vec![0];
    while let Some(i) = stack.pop() {
        seen[i] += 1;
        if let Node::Split { left, right, .. } = t.nodes[i] {
            stack.extend([left, right]);
        }
    }
    assert!(seen.iter().all(|&c| c == 1));
}

#[test]
fn json_round_trip() {
    let (_, s) = numeric_samples(&[0.1, 0.7, 0.3, 0.9, 0.5, 0.2], &[1.0, 2.5, 0.3, 7.0, 1.1, 0.0]);
    let t = fit(&s, 4);
    let text = serde_json::to_string(&t).unwrap();
    let back: RegressionTree = serde_json::from_str(&text).unwrap();
    assert_eq!(t, back);
}

// Brute-force split search over every feature/threshold and code.
fn best_gain_oracle(schema: &FeatureSchema, samples: &[Sample]) -> f64 {
    let n = samples.len() as f64;
    let total: f64 = samples.iter().map(|s| s.target).sum();
    let mut best = f64::NEG_INFINITY;
    let mut consider = |left: Vec<&Sample>| {
        let nl = left.len();
        if nl < MIN_LEAF || samples.len() - nl < MIN_LEAF {
            return;
        }
        let sl: f64 = left.iter().map(|s| s.target).sum();
        let sr = total - sl;
        let g = sl * sl / nl as f64 + sr * sr / (n - nl as f64) - total * total / n;
        best = best.max(g);
    };
    for f in 0..schema.numeric_count {
        for s in samples {
            let th = s.x.numeric_values[f];
            consider(samples.iter().filter(|o| o.x.numeric_values[f] <= th).collect());
        }
    }
    for (f, &card) in schema.categorical_cardinalities.iter().enumerate() {
        for code in 0..card {
            consider(samples.iter().filter(|o| o.x.categorical_values[f] == code).collect());
        }
    }
    best
}

fn dataset() -> impl Strategy<Value = (FeatureSchema, Vec<Sample>)> {
    (0usize..3, prop::collection::vec(2u32..5, 0..3)).prop_flat_map(|(nn, cards)| {
        let nn = if cards.is_empty() { nn.max(1) } else { nn };
        let schema = FeatureSchema::new(nn, cards.clone()).unwrap();
        let row = (
            prop::collection::vec(-3i32..4, nn),
            cards.iter().map(|&c| 0..c).collect::<Vec<_>>(),
            -10.0f64..10.0,
        );
        prop::collection::vec(row, 4..60).prop_map(move |rows| {
            let samples = rows
                .into_iter()
                .map(|(num, cat, y)| {
                    let num = num.into_iter().map(|v| v as f64 * 0.5).collect();
                    Sample::new(schema.vector(num, cat).unwrap(), y).unwrap()
                })
                .collect();
            (schema.clone(), samples)
        })
    })
}

fn random_vector(schema: &FeatureSchema, r: &mut RandomSource) -> FeatureVector {
    use rand::Rng;
    let num = (0..schema.numeric_count).map(|_| r.random_range(-2.5..2.5)).collect();
    let cat = schema
        .categorical_cardinalities
        .iter()
        .map(|&c| r.random_range(0..c))
        .collect();
    schema.vector(num, cat).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn leaf_stats_match_routed_samples((_, samples) in dataset(), depth in 0usize..6) {
        let t = fit(&samples, depth);
        let mut routed = vec![Vec::new(); t.leaf_count()];
        for s in &samples {
            routed[t.assign_leaf(&s.x).unwrap()].push(s.target);
        }
        for (leaf, ys) in routed.iter().enumerate() {
            let st = t.leaf_stats(leaf).unwrap();
            prop_assert_eq!(st.count as usize, ys.len());
            prop_assert!(ys.len() >= MIN_LEAF);
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            prop_assert!((st.mean() - mean).abs() < 1e-9);
            let v = st.variance().unwrap().unwrap();
            prop_assert!((v - sample_variance(ys)).abs() < 1e-9);
        }
    }

    #[test]
    fn depth_bound_holds((_, samples) in dataset(), depth in 0usize..6) {
        let t = fit(&samples, depth);
        prop_assert!(t.depth() <= depth);
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            prop_assert!(d <= depth);
            match t.nodes[i] {
                Node::Split { left, right, .. } => stack.extend([(left, d + 1), (right, d + 1)]),
                Node::Leaf { leaf } => prop_assert_eq!(t.leaves[leaf].depth, d),
            }
        }
    }

    #[test]
    fn every_vector_reaches_one_leaf((schema, samples) in dataset(), seed in any::<u64>()) {
        let t = fit(&samples, 5);
        let mut r = rng::source(seed);
        let mut hits = vec![0usize; t.leaf_count()];
        for _ in 0..1000 {
            let x = random_vector(&schema, &mut r);
            let leaf = t.assign_leaf(&x).unwrap();
            prop_assert!(leaf < t.leaf_count());
            prop_assert_eq!(leaf, t.assign_leaf(&x).unwrap());
            hits[leaf] += 1;
        }
        prop_assert_eq!(hits.iter().sum::<usize>(), 1000);
    }

    #[test]
    fn incremental_matches_batch(
        (schema, samples) in dataset(),
        extra in prop::collection::vec(-10.0f64..10.0, 1..40),
        seed in any::<u64>(),
    ) {
        let mut t = fit(&samples, 4);
        let mut r = rng::source(seed);
        let mut routed = vec![Vec::new(); t.leaf_count()];
        for s in &samples {
            routed[t.assign_leaf(&s.x).unwrap()].push(s.target);
        }
        for &y in &extra {
            let x = random_vector(&schema, &mut r);
            let leaf = t.assign_leaf(&x).unwrap();
            t.update_leaf(leaf, y).unwrap();
            routed[leaf].push(y);
        }
        for (leaf, ys) in routed.iter().enumerate() {
            let batch = LeafStats::from_values(ys.iter().copied());
            let st = t.leaf_stats(leaf).unwrap();
            prop_assert_eq!(st.count, batch.count);
            prop_assert!((st.mean() - batch.mean()).abs() < 1e-9);
            let (a, b) = (st.variance().unwrap().unwrap(), batch.variance().unwrap().unwrap());
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn root_split_is_optimal((schema, samples) in dataset()) {
        let t = fit(&samples, 1);
        let oracle = best_gain_oracle(&schema, &samples);
        let n = samples.len() as f64;
        let total: f64 = samples.iter().map(|s| s.target).sum();
        let sse: f64 = samples.iter().map(|s| (s.target - total / n).powi(2)).sum();
        match t.nodes[0] {
            Node::Split { rule, .. } => {
                let left: Vec<f64> = samples.iter().filter(|s| rule.goes_left(&s.x)).map(|s| s.target).collect();
                let sl: f64 = left.iter().sum();
                let nl = left.len() as f64;
                let sr = total - sl;
                let g = sl * sl / nl + sr * sr / (n - nl) - total * total / n;
                prop_assert!((g - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
            }
            Node::Leaf { .. } => {
                prop_assert!(sse / n <= PURE_NODE_VARIANCE || oracle <= 1e-9 * sse.max(1.0));
            }
        }
    }
}
