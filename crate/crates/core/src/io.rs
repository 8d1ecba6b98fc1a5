//! Model files, prediction, ranked interpretation and augmented-CSV export.
//!
//! A model file is one JSON document:
//!
//! ```text
//! { "format_version": 1, "checksum": "sha256:<hex>", "body": { ... } }
//! ```
//!
//! The checksum covers the compact, key-sorted serialization of `body`, so
//! reformatting the file does not invalidate it but any edit to a value does.
//! Numbers use the shortest decimal text that parses back to the same `f64`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_csv, normalize_lenient, read_csv, RawTable, SchemaSpec};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{Matrix, Vector};
use crate::nn::{Architecture, DenseLayer, Network};

pub const FORMAT_VERSION: u64 = 1;
const TOOL: &str = "fcfnn";

/// How the weights in a model came to be.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    /// Fingerprint of the most recent training config, if any.
    pub fingerprint: Option<String>,
    pub epochs_trained: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub tool: String,
    pub version: String,
    /// Seed the weights were initialized from.
    pub seed: u64,
}

/// A network together with the schema it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub network: Network,
    pub schema: SchemaSpec,
    pub training: TrainingRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerParams {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Body {
    schema: SchemaSpec,
    architecture: Architecture,
    parameters: Vec<LayerParams>,
    training: TrainingRecord,
    metadata: ModelMetadata,
}

#[derive(Serialize)]
struct Envelope<'a> {
    format_version: u64,
    checksum: String,
    body: &'a serde_json::Value,
}

fn checksum(body: &serde_json::Value) -> String {
    // serde_json's default map is a BTreeMap, so keys come out sorted.
    let digest = Sha256::digest(body.to_string().as_bytes());
    let mut hex = String::with_capacity(7 + 64);
    hex.push_str("sha256:");
    for b in digest.iter() {
        write!(hex, "{b:02x}").expect("writing to a String");
    }
    hex
}

fn check_compatible(net: &Network, schema: &SchemaSpec) -> Result<()> {
    schema.validate()?;
    if schema.feature_count() != net.input_width() || schema.label_count() != net.output_width() {
        return Err(Error::dims(
            "model schema",
            format!("network {}->{}", net.input_width(), net.output_width()),
            format!(
                "schema with {} features and {} labels",
                schema.feature_count(),
                schema.label_count()
            ),
        ));
    }
    Ok(())
}

impl Model {
    pub fn new(network: Network, schema: SchemaSpec) -> Result<Self> {
        check_compatible(&network, &schema)?;
        Ok(Model {
            network,
            schema,
            training: TrainingRecord::default(),
        })
    }

    pub fn with_training(mut self, training: TrainingRecord) -> Self {
        self.training = training;
        self
    }

    /// The complete file contents, including a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let body = Body {
            schema: self.schema.clone(),
            architecture: self.network.architecture(),
            parameters: self
                .network
                .layers()
                .iter()
                .map(|l| LayerParams {
                    weights: l.weights.as_slice().to_vec(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            training: self.training.clone(),
            metadata: ModelMetadata {
                tool: TOOL.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                seed: self.network.seed(),
            },
        };
        let body = serde_json::to_value(&body)?;
        let env = Envelope {
            format_version: FORMAT_VERSION,
            checksum: checksum(&body),
            body: &body,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let malformed = |what: String| Error::MalformedModel(what);
        let mut doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| malformed(format!("not valid JSON ({e})")))?;
        let obj = doc
            .as_object_mut()
            .ok_or_else(|| malformed("top level is not an object".into()))?;
        let version = obj
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| malformed("missing or invalid format_version".into()))?;
        if version > FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        if version == 0 {
            return Err(malformed("format_version 0 does not exist".into()));
        }
        let expected = obj
            .get("checksum")
            .and_then(|v| v.as_str())
            .ok_or_else(|| malformed("missing checksum".into()))?
            .to_string();
        let body = obj.remove("body").ok_or_else(|| malformed("missing body".into()))?;
        let actual = checksum(&body);
        if actual != expected {
            return Err(Error::ChecksumMismatch { expected, actual });
        }
        let body: Body = serde_json::from_value(body).map_err(|e| malformed(format!("body: {e}")))?;
        let network = build_network(&body)?;
        check_compatible(&network, &body.schema).map_err(|e| malformed(e.to_string()))?;
        Ok(Model {
            network,
            schema: body.schema,
            training: body.training,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = self.to_json()?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(text.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Model::from_json(&std::fs::read_to_string(path)?)
    }
}

fn build_network(body: &Body) -> Result<Network> {
    let arch = &body.architecture;
    if arch.layers.len() != body.parameters.len() {
        return Err(Error::MalformedModel(format!(
            "architecture has {} layers but {} parameter blocks are stored",
            arch.layers.len(),
            body.parameters.len()
        )));
    }
    let mut fan_in = arch.input_width;
    let mut layers = Vec::with_capacity(arch.layers.len());
    for (k, (spec, p)) in arch.layers.iter().zip(&body.parameters).enumerate() {
        if spec.width == 0 || fan_in == 0 {
            return Err(Error::MalformedModel(format!("layer {k} has a zero dimension")));
        }
        if p.weights.len() != spec.width * fan_in || p.bias.len() != spec.width {
            return Err(Error::MalformedModel(format!(
                "layer {k} declares {}x{} but stores {} weights and {} biases",
                spec.width,
                fan_in,
                p.weights.len(),
                p.bias.len()
            )));
        }
        let weights = Matrix::new(spec.width, fan_in, p.weights.clone())?;
        layers.push(DenseLayer::new(weights, Vector::from(p.bias.clone()), spec.activation, spec.dropout)?);
        fan_in = spec.width;
    }
    Network::new(arch.input_width, layers, arch.use_bias, body.metadata.seed)
        .map_err(|e| Error::MalformedModel(e.to_string()))
}

pub fn save_model(net: &Network, schema: &SchemaSpec, path: impl AsRef<Path>) -> Result<()> {
    Model::new(net.clone(), schema.clone())?.save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Network, SchemaSpec)> {
    let m = Model::load(path)?;
    Ok((m.network, m.schema))
}

/// Infer-mode class probabilities. Features outside `[0, 1]` are scored
/// anyway and logged as a warning.
pub fn predict(net: &Network, features: &Vector) -> Result<Vector> {
    if features.len() != net.input_width() {
        return Err(Error::dims("predict", net.input_width(), features.len()));
    }
    if let Some((i, v)) = features.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        log::warn!("feature {i} = {v} is outside [0, 1]; predicting anyway");
    }
    net.predict(features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub code: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedProfile {
    pub respondent: Option<String>,
    /// Every direction, most probable first; ties keep schema order.
    pub entries: Vec<RankedEntry>,
}

impl RankedProfile {
    pub fn with_respondent(mut self, id: impl Into<String>) -> Self {
        self.respondent = Some(id.into());
        self
    }

    pub fn top(&self) -> &RankedEntry {
        &self.entries[0]
    }
}

pub fn rank(probabilities: &Vector, schema: &SchemaSpec) -> Result<RankedProfile> {
    if probabilities.len() != schema.label_count() || probabilities.is_empty() {
        return Err(Error::dims("rank", schema.label_count(), probabilities.len()));
    }
    if !probabilities.is_finite() {
        return Err(Error::NonFinite("probabilities"));
    }
    let mut order: Vec<usize> = (0..probabilities.len()).collect();
    // sort_by is stable, so equal probabilities stay in schema order.
    order.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]));
    Ok(RankedProfile {
        respondent: None,
        entries: order
            .into_iter()
            .map(|i| RankedEntry {
                code: schema.labels[i].code.clone(),
                probability: probabilities[i],
            })
            .collect(),
    })
}

/// Anything that would print as 0.0% is shown in scientific notation.
pub const DEFAULT_REPORT_THRESHOLD: f64 = 0.0005;

/// `"EA 94.6%, EU 3.5%, EM 0.9%"`: the first `top_k` entries (at least one),
/// as percentages with one decimal. Probabilities below `threshold` are
/// written in scientific notation, e.g. `SC 3.3e-6%`.
pub fn format_report(profile: &RankedProfile, threshold: f64, top_k: usize) -> String {
    profile
        .entries
        .iter()
        .take(top_k.max(1))
        .map(|e| {
            let pct = e.probability * 100.0;
            if e.probability >= threshold {
                format!("{} {:.1}%", e.code, pct)
            } else {
                format!("{} {:.1e}%", e.code, pct)
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Ranks every row of a raw table. Out-of-range cells are warned about and
/// scored anyway.
pub fn classify_table(model: &Model, table: &RawTable, exec: Execution) -> Result<Vec<RankedProfile>> {
    let scored: Vec<Result<RankedProfile>> = exec.map(&table.features, |i, raw| {
        let (x, drift) = normalize_lenient(raw, &model.schema)?;
        if !drift.is_empty() {
            log::warn!("row {}: out-of-range values in {}", i + 1, drift.join(", "));
        }
        let p = model.network.predict(&x)?;
        Ok(rank(&p, &model.schema)?.with_respondent((i + 1).to_string()))
    });
    scored.into_iter().collect()
}

/// Column names appended by [`classify_csv`].
pub fn rank_columns(top_k: usize) -> Vec<String> {
    (1..=top_k)
        .flat_map(|i| [format!("rank{i}_code"), format!("rank{i}_prob")])
        .collect()
}

/// Writes `table` verbatim plus `rank<i>_code, rank<i>_prob` for the first
/// `top_k` ranks of each row.
pub fn write_classified(
    writer: impl Write,
    table: &RawTable,
    profiles: &[RankedProfile],
    top_k: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = table.headers.clone();
    header.extend(rank_columns(top_k));
    w.write_record(&header)?;
    for (rec, prof) in table.records.iter().zip(profiles) {
        let mut row = rec.clone();
        for e in prof.entries.iter().take(top_k) {
            row.push(e.code.clone());
            row.push(e.probability.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn check_top_k(top_k: usize, schema: &SchemaSpec) -> Result<()> {
    if top_k == 0 || top_k > schema.label_count() {
        return Err(Error::InvalidConfig(format!(
            "top_k must lie in 1..={}, got {top_k}",
            schema.label_count()
        )));
    }
    Ok(())
}

/// Classifies every row of `in_path` and writes the augmented CSV to
/// `out_path`. Returns the ranked profiles in row order.
pub fn classify_csv(
    model: &Model,
    in_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
    top_k: usize,
) -> Result<Vec<RankedProfile>> {
    check_top_k(top_k, &model.schema)?;
    let table = load_csv(in_path, &model.schema)?;
    let profiles = classify_table(model, &table, Execution::default())?;
    let out = std::io::BufWriter::new(std::fs::File::create(out_path)?);
    write_classified(out, &table, &profiles, top_k)?;
    Ok(profiles)
}

/// [`classify_csv`] over in-memory CSV text.
pub fn classify_csv_str(model: &Model, input: &str, top_k: usize) -> Result<String> {
    check_top_k(top_k, &model.schema)?;
    let table = read_csv(input.as_bytes(), &model.schema)?;
    let profiles = classify_table(model, &table, Execution::default())?;
    let mut out = Vec::new();
    write_classified(&mut out, &table, &profiles, top_k)?;
    Ok(String::from_utf8(out).expect("csv writer emits UTF-8"))
}
