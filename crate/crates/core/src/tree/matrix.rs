use super::schema::{FeatureAccess, Sample};
use super::TreeShape;
use crate::{Error, Result};

/// One numeric column plus its dense value ranks.
#[derive(Debug, Clone)]
pub(crate) struct NumericColumn {
    pub values: Vec<f64>,
    /// `ranks[row]` indexes `distinct`.
    pub ranks: Vec<u32>,
    /// Sorted distinct values of the column.
    pub distinct: Vec<f64>,
}

impl NumericColumn {
    fn new(values: Vec<f64>) -> Self {
        let mut order: Vec<u32> = (0..values.len() as u32).collect();
        order.sort_by(|&a, &b| values[a as usize].total_cmp(&values[b as usize]));
        let mut ranks = vec![0u32; values.len()];
        let mut distinct: Vec<f64> = Vec::new();
        for &r in &order {
            let v = values[r as usize];
            if distinct.last() != Some(&v) {
                distinct.push(v);
            }
            ranks[r as usize] = (distinct.len() - 1) as u32;
        }
        Self {
            values,
            ranks,
            distinct,
        }
    }
}

/// Column-major copy of a sample set, built once per ensemble fit.
#[derive(Debug, Clone)]
pub(crate) struct FeatureMatrix {
    pub shape: TreeShape,
    pub n_rows: usize,
    /// Largest observed code + 1 per categorical column.
    pub cardinalities: Vec<u32>,
    pub numeric: Vec<NumericColumn>,
    pub categorical: Vec<Vec<u32>>,
    pub targets: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?;
        let shape = TreeShape::of(&first.x);
        let n = samples.len();
        let mut numeric = vec![Vec::with_capacity(n); shape.numeric_count];
        let mut categorical = vec![Vec::with_capacity(n); shape.categorical_count];
        let mut cardinalities = vec![1u32; shape.categorical_count];
        let mut targets = Vec::with_capacity(n);
        for (i, s) in samples.iter().enumerate() {
            shape
                .check(&s.x)
                .map_err(|e| Error::SchemaMismatch(format!("sample {i}: {e}")))?;
            if !s.target.is_finite() {
                return Err(Error::NonFinite(format!("sample {i} target {}", s.target)));
            }
            for (col, &v) in numeric.iter_mut().zip(&s.x.numeric_values) {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("sample {i} numeric value {v}")));
                }
                col.push(v);
            }
            for ((col, card), &v) in categorical
                .iter_mut()
                .zip(cardinalities.iter_mut())
                .zip(&s.x.categorical_values)
            {
                col.push(v);
                *card = (*card).max(v + 1);
            }
            targets.push(s.target);
        }
        Ok(Self {
            shape,
            n_rows: n,
            cardinalities,
            numeric: numeric.into_iter().map(NumericColumn::new).collect(),
            categorical,
            targets,
        })
    }

    pub fn row(&self, row: usize) -> RowRef<'_> {
        RowRef { m: self, row }
    }
}

#[derive(Clone, Copy)]
pub(crate) struct RowRef<'a> {
    m: &'a FeatureMatrix,
    row: usize,
}

impl FeatureAccess for RowRef<'_> {
    #[inline]
    fn numeric(&self, i: usize) -> f64 {
        self.m.numeric[i].values[self.row]
    }
    #[inline]
    fn categorical(&self, i: usize) -> u32 {
        self.m.categorical[i][self.row]
    }
}
