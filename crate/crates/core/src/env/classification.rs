use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::rng::RandomSource;
use crate::tree::{FeatureSchema, FeatureVector};
use crate::{Error, Result};

/// A labelled table with dense categorical codes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub schema: FeatureSchema,
    pub numeric_names: Vec<String>,
    pub categorical_names: Vec<String>,
    /// Category labels per categorical column, indexed by code.
    pub categories: Vec<Vec<String>>,
    pub classes: Vec<String>,
    pub rows: Vec<FeatureVector>,
    pub labels: Vec<u32>,
    /// Rows dropped for missing values.
    pub dropped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Mean and population SD of every numeric column; SD 0 becomes 1.
    pub fn numeric_moments(&self) -> Vec<(f64, f64)> {
        let n = self.rows.len() as f64;
        (0..self.schema.numeric_count)
            .map(|j| {
                let mean = self.rows.iter().map(|r| r.numeric_values[j]).sum::<f64>() / n;
                let var = self
                    .rows
                    .iter()
                    .map(|r| (r.numeric_values[j] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                let sd = var.sqrt();
                (mean, if sd > 0.0 { sd } else { 1.0 })
            })
            .collect()
    }
}

/// Classification task replayed as a K-armed contextual bandit: rows arrive
/// in a random order without replacement, and the arm equal to the label
/// pays 1.
#[derive(Debug, Clone)]
pub struct ClassificationBanditEnv {
    data: Arc<Dataset>,
    order: Vec<u32>,
    pos: usize,
}

impl ClassificationBanditEnv {
    pub fn new(data: Arc<Dataset>, rng: &mut RandomSource) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidArgument(format!("dataset {} is empty", data.name)));
        }
        let mut order: Vec<u32> = (0..data.len() as u32).collect();
        order.shuffle(rng);
        Ok(Self { data, order, pos: 0 })
    }

    pub fn with_order(data: Arc<Dataset>, order: Vec<u32>, pos: usize) -> Self {
        Self { data, order, pos }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn arms(&self) -> usize {
        self.data.class_count()
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// Rounds already played.
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Raw context of the current round.
    pub fn context(&self) -> Result<&FeatureVector> {
        let row = self.current()?;
        Ok(&self.data.rows[row])
    }

    pub fn label(&self) -> Result<u32> {
        Ok(self.data.labels[self.current()?])
    }

    /// Plays arm `k` on the current row and advances to the next one.
    pub fn step(&mut self, k: usize) -> Result<f64> {
        if k >= self.arms() {
            return Err(Error::InvalidArgument(format!("arm {k} outside 0..{}", self.arms())));
        }
        let reward = class_reward(self.label()?, k);
        self.pos += 1;
        Ok(reward)
    }

    fn current(&self) -> Result<usize> {
        self.order
            .get(self.pos)
            .map(|&r| r as usize)
            .ok_or(Error::HorizonExceedsDataset {
                round: self.pos + 1,
                rows: self.order.len(),
            })
    }
}

/// 1 for the true class, 0 otherwise.
pub fn class_reward(label: u32, k: usize) -> f64 {
    if label as usize == k {
        1.0
    } else {
        0.0
    }
}

/// Hybrid encoding: the arm id becomes an extra leading categorical feature.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridEncoder {
    pub input: FeatureSchema,
    pub output: FeatureSchema,
    pub arms: u32,
}

impl HybridEncoder {
    pub fn new(input: &FeatureSchema, arms: usize) -> Result<Self> {
        let mut cards = Vec::with_capacity(input.categorical_count() + 1);
        cards.push(arms.max(2) as u32);
        cards.extend_from_slice(&input.categorical_cardinalities);
        Ok(Self {
            input: input.clone(),
            output: FeatureSchema::new(input.numeric_count, cards)?,
            arms: arms as u32,
        })
    }

    pub fn encode(&self, x: &FeatureVector, k: usize) -> Result<FeatureVector> {
        self.input.check(x)?;
        encode_hybrid(x, k, self.arms as usize, &self.output)
    }

    /// Drops the arm code, recovering the raw vector.
    pub fn strip(&self, v: &FeatureVector) -> Result<(usize, FeatureVector)> {
        self.output.check(v)?;
        Ok((
            v.categorical_values[0] as usize,
            FeatureVector {
                numeric_values: v.numeric_values.clone(),
                categorical_values: v.categorical_values[1..].to_vec(),
                schema_id: self.input.id(),
            },
        ))
    }
}

/// `x_k = (k, x)`: the arm id prepended to the categorical block.
pub fn encode_hybrid(x: &FeatureVector, k: usize, arms: usize, output: &FeatureSchema) -> Result<FeatureVector> {
    if k >= arms {
        return Err(Error::InvalidArgument(format!("arm {k} outside 0..{arms}")));
    }
    let mut cats = Vec::with_capacity(x.categorical_values.len() + 1);
    cats.push(k as u32);
    cats.extend_from_slice(&x.categorical_values);
    output.vector(x.numeric_values.clone(), cats)
}

/// Disjoint encoding: categoricals one-hot expanded, numerics optionally
/// standardized, and the result placed in block `k` of a `K·d` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DisjointEncoder {
    pub input: FeatureSchema,
    pub output: FeatureSchema,
    pub arms: usize,
    /// `(mean, sd)` per numeric feature.
    pub scale: Option<Vec<(f64, f64)>>,
}

impl DisjointEncoder {
    pub fn new(input: &FeatureSchema, arms: usize, scale: Option<Vec<(f64, f64)>>) -> Result<Self> {
        if arms == 0 {
            return Err(Error::InvalidArgument("disjoint encoding needs at least one arm".into()));
        }
        if let Some(s) = &scale {
            if s.len() != input.numeric_count {
                return Err(Error::InvalidArgument("one (mean, sd) pair per numeric feature".into()));
            }
        }
        Ok(Self {
            input: input.clone(),
            output: FeatureSchema::numeric(arms * block_width(input))?,
            arms,
            scale,
        })
    }

    pub fn block_width(&self) -> usize {
        block_width(&self.input)
    }

    pub fn encode(&self, x: &FeatureVector, k: usize) -> Result<FeatureVector> {
        self.input.check(x)?;
        let mut v = disjoint_values(&self.input, x, k, self.arms)?;
        if let Some(scale) = &self.scale {
            let off = k * self.block_width();
            for (j, (m, s)) in scale.iter().enumerate() {
                v[off + j] = (v[off + j] - m) / s;
            }
        }
        self.output.vector(v, vec![])
    }
}

fn block_width(schema: &FeatureSchema) -> usize {
    schema.numeric_count
        + schema
            .categorical_cardinalities
            .iter()
            .map(|&c| c as usize)
            .sum::<usize>()
}

/// `x_k = (0; …; x; …; 0)` with `x` (one-hot expanded) in block `k`.
pub fn encode_disjoint(schema: &FeatureSchema, x: &FeatureVector, k: usize, arms: usize) -> Result<FeatureVector> {
    schema.check(x)?;
    let v = disjoint_values(schema, x, k, arms)?;
    FeatureSchema::numeric(v.len())?.vector(v, vec![])
}

fn disjoint_values(schema: &FeatureSchema, x: &FeatureVector, k: usize, arms: usize) -> Result<Vec<f64>> {
    if k >= arms {
        return Err(Error::InvalidArgument(format!("arm {k} outside 0..{arms}")));
    }
    let d = block_width(schema);
    let mut v = vec![0.0; arms * d];
    let block = &mut v[k * d..(k + 1) * d];
    block[..schema.numeric_count].copy_from_slice(&x.numeric_values);
    let mut off = schema.numeric_count;
    for (&code, &card) in x.categorical_values.iter().zip(&schema.categorical_cardinalities) {
        block[off + code as usize] = 1.0;
        off += card as usize;
    }
    Ok(v)
}
