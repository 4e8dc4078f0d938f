use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Identifier binding feature vectors and trees to one [`FeatureSchema`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaId(pub u64);

/// Layout of a mixed numeric/categorical context: `numeric_count` real values
/// followed by one code per categorical feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub numeric_count: usize,
    pub categorical_cardinalities: Vec<u32>,
}

impl FeatureSchema {
    pub fn new(numeric_count: usize, categorical_cardinalities: Vec<u32>) -> Result<Self> {
        if numeric_count + categorical_cardinalities.len() == 0 {
            return Err(Error::InvalidArgument(
                "schema needs at least one feature".into(),
            ));
        }
        if let Some(c) = categorical_cardinalities.iter().find(|&&c| c < 2) {
            return Err(Error::InvalidArgument(format!(
                "categorical cardinality must be >= 2, got {c}"
            )));
        }
        Ok(Self {
            numeric_count,
            categorical_cardinalities,
        })
    }

    pub fn numeric(numeric_count: usize) -> Result<Self> {
        Self::new(numeric_count, Vec::new())
    }

    pub fn categorical_count(&self) -> usize {
        self.categorical_cardinalities.len()
    }

    /// Total number of features; numeric features come first in global order.
    pub fn feature_count(&self) -> usize {
        self.numeric_count + self.categorical_cardinalities.len()
    }

    pub fn id(&self) -> SchemaId {
        let mut h = Sha256::new();
        h.update((self.numeric_count as u64).to_le_bytes());
        for c in &self.categorical_cardinalities {
            h.update(c.to_le_bytes());
        }
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        SchemaId(u64::from_le_bytes(bytes))
    }

    /// Global-order feature reference for index `i`.
    pub fn feature(&self, i: usize) -> FeatureRef {
        if i < self.numeric_count {
            FeatureRef::Numeric(i)
        } else {
            FeatureRef::Categorical(i - self.numeric_count)
        }
    }

    /// Builds a vector after validating lengths, finiteness and code ranges.
    pub fn vector(&self, numeric: Vec<f64>, categorical: Vec<u32>) -> Result<FeatureVector> {
        if numeric.len() != self.numeric_count {
            return Err(Error::SchemaMismatch(format!(
                "expected {} numeric values, got {}",
                self.numeric_count,
                numeric.len()
            )));
        }
        if categorical.len() != self.categorical_cardinalities.len() {
            return Err(Error::SchemaMismatch(format!(
                "expected {} categorical values, got {}",
                self.categorical_cardinalities.len(),
                categorical.len()
            )));
        }
        if let Some((i, v)) = numeric.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("numeric feature {i} = {v}")));
        }
        for (i, (&code, &card)) in categorical
            .iter()
            .zip(&self.categorical_cardinalities)
            .enumerate()
        {
            if code >= card {
                return Err(Error::InvalidFeature(format!(
                    "categorical feature {i}: code {code} outside 0..{card}"
                )));
            }
        }
        Ok(FeatureVector {
            numeric_values: numeric,
            categorical_values: categorical,
            schema_id: self.id(),
        })
    }

    /// Checks that `x` was built for this schema.
    pub fn check(&self, x: &FeatureVector) -> Result<()> {
        if x.schema_id != self.id()
            || x.numeric_values.len() != self.numeric_count
            || x.categorical_values.len() != self.categorical_cardinalities.len()
        {
            return Err(Error::SchemaMismatch(format!(
                "vector with {} numeric / {} categorical values does not match schema ({} / {})",
                x.numeric_values.len(),
                x.categorical_values.len(),
                self.numeric_count,
                self.categorical_cardinalities.len()
            )));
        }
        Ok(())
    }
}

/// Reference to one feature, by kind and index within that kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureRef {
    Numeric(usize),
    Categorical(usize),
}

/// Context of one arm: numeric values then categorical codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub numeric_values: Vec<f64>,
    pub categorical_values: Vec<u32>,
    pub schema_id: SchemaId,
}

/// A context paired with a regression target (reward, or residual while boosting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: FeatureVector,
    pub target: f64,
}

impl Sample {
    pub fn new(x: FeatureVector, target: f64) -> Result<Self> {
        if !target.is_finite() {
            return Err(Error::NonFinite(format!("target {target}")));
        }
        Ok(Self { x, target })
    }
}

/// Read access to a row's features, shared by vectors and columnar matrices.
pub trait FeatureAccess {
    fn numeric(&self, i: usize) -> f64;
    fn categorical(&self, i: usize) -> u32;
}

impl<T: FeatureAccess + ?Sized> FeatureAccess for &T {
    #[inline]
    fn numeric(&self, i: usize) -> f64 {
        (**self).numeric(i)
    }
    #[inline]
    fn categorical(&self, i: usize) -> u32 {
        (**self).categorical(i)
    }
}

impl FeatureAccess for FeatureVector {
    #[inline]
    fn numeric(&self, i: usize) -> f64 {
        self.numeric_values[i]
    }
    #[inline]
    fn categorical(&self, i: usize) -> u32 {
        self.categorical_values[i]
    }
}
