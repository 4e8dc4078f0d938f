use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Dataset;
use crate::tree::FeatureSchema;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Sidecar describing a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    /// Name of the label column.
    pub label: String,
    /// Field values that mark a missing entry; empty fields always do.
    #[serde(default)]
    pub missing: Vec<String>,
    pub columns: Vec<ColumnSpec>,
}

impl DatasetSchema {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Self = toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string().trim_end()))?;
        s.check().map_err(|m| Error::parse(path.display().to_string(), m))?;
        Ok(s)
    }

    fn check(&self) -> std::result::Result<(), String> {
        let labels: Vec<_> = self.columns.iter().filter(|c| c.kind == ColumnKind::Label).collect();
        if labels.len() != 1 || labels[0].name != self.label {
            return Err(format!("exactly one label column named {:?} is required", self.label));
        }
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(&c.name) {
                return Err(format!("column {:?} declared twice", c.name));
            }
        }
        Ok(())
    }
}

/// Loads a CSV with a header row. Rows holding a missing value are dropped
/// and counted; categories and classes get dense codes in sorted order.
pub fn ingest_dataset(csv_path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    schema.check().map_err(|m| Error::parse("schema", m))?;
    let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let name = csv_path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    read_dataset(file, &name, &csv_path.display().to_string(), schema)
}

pub(crate) fn read_dataset<R: std::io::Read>(input: R, name: &str, origin: &str, schema: &DatasetSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(format!("{origin}:1"), e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(Error::parse(format!("{origin}:1"), "empty file"));
    }
    let index = |c: &ColumnSpec| {
        header
            .iter()
            .position(|h| h == c.name)
            .ok_or_else(|| Error::SchemaMismatch(format!("{origin}: column {:?} missing from header", c.name)))
    };
    let mut numeric = Vec::new();
    let mut categorical = Vec::new();
    let mut label = 0;
    for c in &schema.columns {
        let i = index(c)?;
        match c.kind {
            ColumnKind::Numeric => numeric.push((c.name.clone(), i)),
            ColumnKind::Categorical => categorical.push((c.name.clone(), i)),
            ColumnKind::Label => label = i,
        }
    }
    if header.len() != schema.columns.len() {
        return Err(Error::SchemaMismatch(format!(
            "{origin}: header has {} columns, schema declares {}",
            header.len(),
            schema.columns.len()
        )));
    }

    let mut raw_num: Vec<Vec<f64>> = Vec::new();
    let mut raw_cat: Vec<Vec<String>> = Vec::new();
    let mut raw_label: Vec<String> = Vec::new();
    let mut dropped = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("{origin}:{line}"), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let missing = record.iter().any(|f| f.is_empty() || schema.missing.iter().any(|m| m == f));
        if missing {
            dropped += 1;
            continue;
        }
        let mut nums = Vec::with_capacity(numeric.len());
        for (col, i) in &numeric {
            let f = &record[*i];
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(format!("{origin}:{line}"), format!("column {col:?}: {f:?} is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(format!("{origin}:{line}"), format!("column {col:?}: {f:?} is not finite")));
            }
            nums.push(v);
        }
        raw_num.push(nums);
        raw_cat.push(categorical.iter().map(|(_, i)| record[*i].to_string()).collect());
        raw_label.push(record[label].to_string());
    }
    if raw_label.is_empty() {
        return Err(Error::parse(origin, "no usable rows"));
    }

    let codebook = |values: &mut dyn Iterator<Item = &String>| -> BTreeMap<String, u32> {
        let set: BTreeSet<&String> = values.collect();
        set.into_iter().enumerate().map(|(i, v)| (v.clone(), i as u32)).collect()
    };
    let cat_books: Vec<BTreeMap<String, u32>> = (0..categorical.len())
        .map(|j| codebook(&mut raw_cat.iter().map(|r| &r[j])))
        .collect();
    let class_book = codebook(&mut raw_label.iter());
    // A constant column keeps a second, unused code so it stays a valid feature.
    let fs = FeatureSchema::new(numeric.len(), cat_books.iter().map(|b| (b.len() as u32).max(2)).collect())?;
    let mut rows = Vec::with_capacity(raw_label.len());
    for (nums, cats) in raw_num.into_iter().zip(&raw_cat) {
        let codes = cats.iter().zip(&cat_books).map(|(v, b)| b[v]).collect();
        rows.push(fs.vector(nums, codes)?);
    }
    Ok(Dataset {
        name: name.to_string(),
        schema: fs,
        numeric_names: numeric.into_iter().map(|(n, _)| n).collect(),
        categorical_names: categorical.into_iter().map(|(n, _)| n).collect(),
        categories: cat_books.iter().map(|b| b.keys().cloned().collect()).collect(),
        classes: class_book.keys().cloned().collect(),
        labels: raw_label.iter().map(|l| class_book[l]).collect(),
        rows,
        dropped,
    })
}
