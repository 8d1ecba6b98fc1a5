//! Schema-driven CSV ingestion, range normalization, train/validation
//! splitting and mini-batch ordering.
//!
//! Input files are comma-separated UTF-8 with a header row of column codes.
//! The class of a row is read from a `label` column (index or direction
//! code) when present, otherwise from one indicator column per direction
//! (the largest entry wins). Files without either are accepted for
//! inference only.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::rng::{stream, TAG_SHUFFLE, TAG_SPLIT};

/// Header of the single class-index column.
pub const LABEL_COLUMN: &str = "label";

pub const DEFAULT_MAX_AGE: f64 = 70.0;
pub const MAX_PERCENTAGE: f64 = 100.0;
pub const MAX_PERSONALITY_TYPE: f64 = 14.0;

/// The shipped default schema, identical to [`SchemaSpec::survey_default`].
pub const SURVEY_SCHEMA_JSON: &str = include_str!("../data/schema-survey.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Age,
    Percentage,
    PersonalityType,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub code: String,
    pub kind: FeatureKind,
    /// Largest admissible raw value; normalized value is `raw / denominator`.
    pub denominator: f64,
}

impl FeatureColumn {
    pub fn age(code: &str, max_age: f64) -> Self {
        FeatureColumn {
            code: code.into(),
            kind: FeatureKind::Age,
            denominator: max_age,
        }
    }

    pub fn percentage(code: &str) -> Self {
        FeatureColumn {
            code: code.into(),
            kind: FeatureKind::Percentage,
            denominator: MAX_PERCENTAGE,
        }
    }

    pub fn personality_type(code: &str) -> Self {
        FeatureColumn {
            code: code.into(),
            kind: FeatureKind::PersonalityType,
            denominator: MAX_PERSONALITY_TYPE,
        }
    }

    pub fn custom(code: &str, denominator: f64) -> Self {
        FeatureColumn {
            code: code.into(),
            kind: FeatureKind::Custom,
            denominator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelColumn {
    pub code: String,
}

/// Ordered feature and label columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub features: Vec<FeatureColumn>,
    pub labels: Vec<LabelColumn>,
}

impl SchemaSpec {
    pub fn new(features: Vec<FeatureColumn>, labels: Vec<LabelColumn>) -> Result<Self> {
        let schema = SchemaSpec { features, labels };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() || self.labels.is_empty() {
            return Err(Error::InvalidConfig(
                "schema needs at least one feature and one label column".into(),
            ));
        }
        let mut seen = HashSet::new();
        let codes = self
            .features
            .iter()
            .map(|f| &f.code)
            .chain(self.labels.iter().map(|l| &l.code));
        for code in codes {
            if code.is_empty() || code == LABEL_COLUMN {
                return Err(Error::InvalidConfig(format!("invalid column code {code:?}")));
            }
            if !seen.insert(code.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate column code {code}")));
            }
        }
        if let Some(f) = self
            .features
            .iter()
            .find(|f| !(f.denominator.is_finite() && f.denominator > 0.0))
        {
            return Err(Error::InvalidConfig(format!(
                "column {} has non-positive denominator {}",
                f.code, f.denominator
            )));
        }
        Ok(())
    }

    /// 35 features and 29 directions. Codes that are not individually
    /// published are filled with `Fnn` (percentage) and `Dnn` placeholders.
    pub fn survey_default() -> Self {
        Self::survey_default_with_max_age(DEFAULT_MAX_AGE)
    }

    pub fn survey_default_with_max_age(max_age: f64) -> Self {
        let mut features = vec![FeatureColumn::age("Age", max_age)];
        features.extend((1..=8).map(|i| FeatureColumn::percentage(&format!("F{i:02}"))));
        features.push(FeatureColumn::percentage("AT"));
        features.push(FeatureColumn::percentage("TT2"));
        for code in ["RPT", "IPT", "APT"] {
            features.push(FeatureColumn::personality_type(code));
        }
        features.extend((9..=29).map(|i| FeatureColumn::percentage(&format!("F{i:02}"))));

        let mut labels: Vec<LabelColumn> = ["CVW", "EA", "EM", "EU", "H", "SC"]
            .iter()
            .map(|c| LabelColumn { code: (*c).into() })
            .collect();
        labels.extend((1..=23).map(|i| LabelColumn {
            code: format!("D{i:02}"),
        }));
        SchemaSpec { features, labels }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: SchemaSpec = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes") + "\n"
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn denominators(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.denominator).collect()
    }

    pub fn label_index(&self, code: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.code == code)
    }
}

/// Parsed CSV contents, still in raw survey units.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub headers: Vec<String>,
    /// Every cell of every row, verbatim.
    pub records: Vec<Vec<String>>,
    /// Raw feature values in schema order.
    pub features: Vec<Vec<f64>>,
    /// Class index per row, when the file carries labels.
    pub labels: Option<Vec<usize>>,
    /// Columns that matched nothing in the schema.
    pub ignored_columns: Vec<String>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &SchemaSpec) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    if file.metadata()?.len() == 0 {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    read_csv(file, schema).map_err(|e| match e {
        Error::EmptyFile(_) => Error::EmptyFile(path.to_path_buf()),
        other => other,
    })
}

/// [`load_csv`] over any reader.
pub fn read_csv(reader: impl Read, schema: &SchemaSpec) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile(Default::default()));
    }
    let position: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();

    let missing: Vec<String> = schema
        .features
        .iter()
        .filter(|f| !position.contains_key(f.code.as_str()))
        .map(|f| f.code.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }
    let feature_cols: Vec<usize> = schema.features.iter().map(|f| position[f.code.as_str()]).collect();

    let label_col = position.get(LABEL_COLUMN).copied();
    let present_indicators: Vec<Option<usize>> = schema
        .labels
        .iter()
        .map(|l| position.get(l.code.as_str()).copied())
        .collect();
    let indicator_cols: Option<Vec<usize>> = if label_col.is_some() {
        None
    } else if present_indicators.iter().all(Option::is_some) {
        Some(present_indicators.iter().map(|c| c.unwrap()).collect())
    } else if present_indicators.iter().any(Option::is_some) {
        let absent = schema
            .labels
            .iter()
            .zip(&present_indicators)
            .filter(|(_, p)| p.is_none())
            .map(|(l, _)| l.code.clone())
            .collect();
        return Err(Error::MissingColumns(absent));
    } else {
        None
    };

    let known: HashSet<&str> = schema
        .features
        .iter()
        .map(|f| f.code.as_str())
        .chain(schema.labels.iter().map(|l| l.code.as_str()))
        .chain(std::iter::once(LABEL_COLUMN))
        .collect();
    let ignored_columns: Vec<String> = headers
        .iter()
        .filter(|h| !known.contains(h.as_str()))
        .cloned()
        .collect();
    if !ignored_columns.is_empty() {
        log::warn!("ignoring unknown columns: {}", ignored_columns.join(", "));
    }

    let has_labels = label_col.is_some() || indicator_cols.is_some();
    let mut records = Vec::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let cell = |c: usize| rec.get(c).unwrap_or("").trim();
        let number = |c: usize| -> Result<f64> {
            let s = cell(c);
            s.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: headers[c].clone(),
                value: s.to_string(),
            })
        };
        features.push(feature_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?);
        if let Some(c) = label_col {
            let s = cell(c);
            let idx = match s.parse::<usize>() {
                Ok(i) if i < schema.label_count() => Some(i),
                Ok(_) => None,
                Err(_) => schema.label_index(s),
            };
            labels.push(idx.ok_or_else(|| Error::Parse {
                row,
                column: LABEL_COLUMN.into(),
                value: s.to_string(),
            })?);
        } else if let Some(cols) = &indicator_cols {
            let values = cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
            let idx = Vector::from(values)
                .argmax()
                .filter(|&i| cols.get(i).is_some_and(|&c| number(c).is_ok_and(|v| v > 0.0)));
            labels.push(idx.ok_or_else(|| Error::Parse {
                row,
                column: schema.labels[0].code.clone(),
                value: "no direction indicated".into(),
            })?);
        }
        records.push(rec.iter().map(str::to_string).collect());
    }
    Ok(RawTable {
        headers,
        records,
        features,
        labels: has_labels.then_some(labels),
        ignored_columns,
    })
}

/// `raw / denominator` per column; values outside `[0, denominator]` are
/// rejected.
pub fn normalize(raw: &[f64], schema: &SchemaSpec) -> Result<Vector> {
    if raw.len() != schema.feature_count() {
        return Err(Error::dims("normalize", schema.feature_count(), raw.len()));
    }
    raw.iter()
        .zip(&schema.features)
        .map(|(&v, col)| {
            if (0.0..=col.denominator).contains(&v) {
                Ok(v / col.denominator)
            } else {
                Err(Error::OutOfRange {
                    column: col.code.clone(),
                    value: v,
                    max: col.denominator,
                })
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(Vector::from)
}

/// Like [`normalize`] but never fails on range; returns the codes of the
/// columns that fell outside `[0, denominator]`.
pub fn normalize_lenient(raw: &[f64], schema: &SchemaSpec) -> Result<(Vector, Vec<String>)> {
    if raw.len() != schema.feature_count() {
        return Err(Error::dims("normalize", schema.feature_count(), raw.len()));
    }
    let mut drift = Vec::new();
    let mut out = Vec::with_capacity(raw.len());
    for (&v, col) in raw.iter().zip(&schema.features) {
        if !v.is_finite() {
            return Err(Error::NonFinite("feature value"));
        }
        if !(0.0..=col.denominator).contains(&v) {
            drift.push(col.code.clone());
        }
        out.push(v / col.denominator);
    }
    Ok((out.into(), drift))
}

/// Multiplies normalized values back into raw survey units.
pub fn denormalize(features: &[f64], schema: &SchemaSpec) -> Vec<f64> {
    features
        .iter()
        .zip(&schema.features)
        .map(|(v, c)| v * c.denominator)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub features: Vector,
    pub label: usize,
}

/// Normalized, labelled rows. Every feature lies in `[0, 1]` and every label
/// indexes the schema's label columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: SchemaSpec,
    rows: Vec<Row>,
}

impl Dataset {
    pub fn new(schema: SchemaSpec, rows: Vec<Row>) -> Result<Self> {
        schema.validate()?;
        for (i, row) in rows.iter().enumerate() {
            if row.features.len() != schema.feature_count() {
                return Err(Error::dims("Dataset::new", schema.feature_count(), row.features.len()));
            }
            if let Some((j, v)) = row
                .features
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(Error::OutOfRange {
                    column: format!("{} (row {})", schema.features[j].code, i + 1),
                    value: *v,
                    max: 1.0,
                });
            }
            if row.label >= schema.label_count() {
                return Err(Error::InvalidConfig(format!(
                    "row {} has label {} but schema has {} labels",
                    i + 1,
                    row.label,
                    schema.label_count()
                )));
            }
        }
        Ok(Dataset { schema, rows })
    }

    /// Normalizes a labelled raw table.
    pub fn from_raw(table: &RawTable, schema: &SchemaSpec) -> Result<Self> {
        let labels = table.labels.as_ref().ok_or_else(|| {
            let mut cols = vec![LABEL_COLUMN.to_string()];
            cols.extend(schema.labels.iter().map(|l| l.code.clone()));
            Error::MissingColumns(cols)
        })?;
        let rows = table
            .features
            .iter()
            .zip(labels)
            .map(|(raw, &label)| {
                Ok(Row {
                    features: normalize(raw, schema)?,
                    label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(schema.clone(), rows)
    }

    pub fn load(path: impl AsRef<Path>, schema: &SchemaSpec) -> Result<Self> {
        Dataset::from_raw(&load_csv(path, schema)?, schema)
    }

    pub fn schema(&self) -> &SchemaSpec {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.schema.label_count()];
        for r in &self.rows {
            counts[r.label] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub validation: Dataset,
    pub vs: f64,
    /// Original row positions of each partition, in partition order.
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

/// `floor(n · vs)`, tolerant of products like `0.29 · 100` landing a hair
/// below an integer.
pub fn validation_count(n: usize, vs: f64) -> usize {
    let exact = n as f64 * vs;
    let nearest = exact.round();
    if (exact - nearest).abs() < 1e-9 * exact.max(1.0) {
        nearest as usize
    } else {
        exact.floor() as usize
    }
}

/// Seeded shuffle, then the last `floor(n · vs)` rows become validation.
pub fn split(ds: &Dataset, vs: f64, seed: u64) -> Result<SplitDataset> {
    if !(vs > 0.0 && vs < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "validation fraction must lie in (0, 1), got {vs}"
        )));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset("split input"));
    }
    let n = ds.len();
    let n_val = validation_count(n, vs);
    if n_val == 0 || n_val >= n {
        return Err(Error::DegenerateSplit {
            n,
            vs,
            train: n.saturating_sub(n_val),
            validation: n_val,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, &[TAG_SPLIT]));
    let (train_idx, val_idx) = order.split_at(n - n_val);
    Ok(SplitDataset {
        train: ds.subset(train_idx),
        validation: ds.subset(val_idx),
        vs,
        train_indices: train_idx.to_vec(),
        validation_indices: val_idx.to_vec(),
    })
}

/// One epoch's visiting order, cut into batches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batches {
    order: Vec<usize>,
    batch_size: usize,
}

impl Batches {
    pub fn iter(&self) -> std::slice::Chunks<'_, usize> {
        self.order.chunks(self.batch_size)
    }

    pub fn len(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Row indices of `n` rows shuffled from `(seed, epoch)` and grouped into
/// batches of `bs`; the last batch may be short.
pub fn batch_iter(n: usize, bs: usize, seed: u64, epoch: usize) -> Result<Batches> {
    if bs == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, &[TAG_SHUFFLE, epoch as u64]));
    Ok(Batches {
        order,
        batch_size: bs,
    })
}

/// A record in raw survey units, ready to be written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub values: Vec<f64>,
    pub label: usize,
}

/// Writes records with a `label` index column, optionally followed by one
/// 0/1 indicator column per direction. Numbers use the shortest decimal form
/// that parses back to the same `f64`.
pub fn write_csv(writer: impl Write, schema: &SchemaSpec, rows: &[RawRecord], indicators: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = schema.features.iter().map(|f| f.code.as_str()).collect();
    header.push(LABEL_COLUMN);
    if indicators {
        header.extend(schema.labels.iter().map(|l| l.code.as_str()));
    }
    w.write_record(&header)?;
    let mut line = Vec::with_capacity(header.len());
    for row in rows {
        if row.values.len() != schema.feature_count() {
            return Err(Error::dims("write_csv", schema.feature_count(), row.values.len()));
        }
        line.clear();
        line.extend(row.values.iter().map(|v| v.to_string()));
        line.push(row.label.to_string());
        if indicators {
            line.extend((0..schema.label_count()).map(|k| if k == row.label { "1" } else { "0" }.to_string()));
        }
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}
