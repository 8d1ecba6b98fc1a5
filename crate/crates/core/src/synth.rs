//! Reproducible synthetic survey data.
//!
//! Each direction gets a latent archetype (a vector of mean answers); source
//! respondents are drawn around their archetype with clamped Gaussian noise
//! and then multiplied by mirrored perturbation pairs that leave every
//! feature's median untouched.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, FeatureColumn, LabelColumn, RawRecord, Row, SchemaSpec};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::rng::{stream, TAG_ARCHETYPE, TAG_AUGMENT, TAG_SAMPLE};

/// Distinct mean levels used on the discriminative features.
const LEVELS: [f64; 3] = [0.2, 0.5, 0.8];
const LEVEL_JITTER: f64 = 0.05;
/// Guaranteed L∞ separation of archetype means on the discriminative features.
pub const MIN_SEPARATION: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    #[serde(default = "defaults::n_rows")]
    pub n_rows: usize,
    #[serde(default = "defaults::n_classes")]
    pub n_classes: usize,
    #[serde(default = "defaults::n_features")]
    pub n_features: usize,
    pub seed: u64,
    /// Source respondents per class before augmentation. `None` picks the
    /// smallest count that reaches `n_rows`.
    #[serde(default)]
    pub base_rows_per_class: Option<usize>,
    /// Output rows per source row: 1, or an even number of mirrored copies.
    #[serde(default = "defaults::augmentation_factor")]
    pub augmentation_factor: usize,
    /// Standard deviation of respondent answers around the archetype, in
    /// normalized units.
    #[serde(default = "defaults::noise_sd")]
    pub noise_sd: f64,
    /// Upper bound of each mirrored perturbation, as a fraction of the
    /// column range.
    #[serde(default = "defaults::perturbation")]
    pub perturbation: f64,
    /// Also emit one 0/1 indicator column per direction.
    #[serde(default = "defaults::indicators")]
    pub indicators: bool,
}

mod defaults {
    pub fn n_rows() -> usize {
        936
    }
    pub fn n_classes() -> usize {
        29
    }
    pub fn n_features() -> usize {
        35
    }
    pub fn augmentation_factor() -> usize {
        2
    }
    pub fn noise_sd() -> f64 {
        0.08
    }
    pub fn perturbation() -> f64 {
        0.02
    }
    pub fn indicators() -> bool {
        true
    }
}

impl GeneratorConfig {
    pub fn new(seed: u64) -> Self {
        GeneratorConfig {
            n_rows: defaults::n_rows(),
            n_classes: defaults::n_classes(),
            n_features: defaults::n_features(),
            seed,
            base_rows_per_class: None,
            augmentation_factor: defaults::augmentation_factor(),
            noise_sd: defaults::noise_sd(),
            perturbation: defaults::perturbation(),
            indicators: defaults::indicators(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: GeneratorConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.n_rows == 0 || self.n_features == 0 {
            return bad("n_rows and n_features must be positive".into());
        }
        let f = self.augmentation_factor;
        if f == 0 || (f > 1 && f % 2 == 1) {
            return bad(format!("augmentation factor must be 1 or even, got {f}"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        if !(0.0..=0.5).contains(&self.perturbation) {
            return bad(format!("perturbation must lie in [0, 0.5], got {}", self.perturbation));
        }
        if discriminative_count(self.n_classes) > self.n_features {
            return bad(format!(
                "{} classes need at least {} features",
                self.n_classes,
                discriminative_count(self.n_classes)
            ));
        }
        if self.base_rows_per_class == Some(0) {
            return bad("base_rows_per_class must be positive".into());
        }
        let rows = self.source_rows_per_class() * self.n_classes * f;
        if rows < self.n_rows {
            return bad(format!(
                "{} classes x {} source rows x factor {f} = {rows} rows cannot reach n_rows = {}",
                self.n_classes,
                self.source_rows_per_class(),
                self.n_rows
            ));
        }
        Ok(())
    }

    pub fn source_rows_per_class(&self) -> usize {
        self.base_rows_per_class
            .unwrap_or_else(|| self.n_rows.div_ceil(self.n_classes * self.augmentation_factor.max(1)))
    }

    /// The survey layout for 35 features / 29 classes, generic `Fnn`/`Dnn`
    /// codes otherwise.
    pub fn schema(&self) -> SchemaSpec {
        if self.n_features == 35 && self.n_classes == 29 {
            return SchemaSpec::survey_default();
        }
        SchemaSpec {
            features: (1..=self.n_features)
                .map(|i| FeatureColumn::percentage(&format!("F{i:02}")))
                .collect(),
            labels: (1..=self.n_classes)
                .map(|i| LabelColumn {
                    code: format!("D{i:02}"),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archetype {
    pub class_index: usize,
    /// Mean normalized answer per feature, in `[0, 1]`.
    pub feature_means: Vector,
    /// Per-feature noise standard deviation.
    pub noise_sd: Vector,
}

fn discriminative_count(n_classes: usize) -> usize {
    let mut d = 1;
    while LEVELS.len().pow(d as u32) < n_classes {
        d += 1;
    }
    d
}

/// Feature positions whose archetype means are placed on a separated grid.
pub fn discriminative_features(cfg: &GeneratorConfig) -> Vec<usize> {
    let d = discriminative_count(cfg.n_classes).min(cfg.n_features);
    let mut rng = stream(cfg.seed, &[TAG_ARCHETYPE, 0]);
    let mut all: Vec<usize> = (0..cfg.n_features).collect();
    all.shuffle(&mut rng);
    let mut chosen = all[..d].to_vec();
    chosen.sort_unstable();
    chosen
}

/// One archetype per class. On the discriminative features each class gets
/// a distinct code over three jittered levels, so any two archetypes differ
/// by at least [`MIN_SEPARATION`] there; other features are uniform in
/// `[0.1, 0.9]`.
pub fn make_archetypes(cfg: &GeneratorConfig) -> Result<Vec<Archetype>> {
    cfg.validate()?;
    let disc = discriminative_features(cfg);
    let d = disc.len();
    let mut codes: Vec<usize> = (0..LEVELS.len().pow(d as u32)).collect();
    let mut rng = stream(cfg.seed, &[TAG_ARCHETYPE, 1]);
    codes.shuffle(&mut rng);

    let archetypes = (0..cfg.n_classes)
        .map(|class_index| {
            let mut means: Vec<f64> = (0..cfg.n_features).map(|_| rng.random_range(0.1..=0.9)).collect();
            let mut code = codes[class_index];
            for &f in &disc {
                let level = LEVELS[code % LEVELS.len()];
                code /= LEVELS.len();
                means[f] = level + rng.random_range(-LEVEL_JITTER..=LEVEL_JITTER);
            }
            Archetype {
                class_index,
                feature_means: means.into(),
                noise_sd: Vector::filled(cfg.n_features, cfg.noise_sd),
            }
        })
        .collect();
    Ok(archetypes)
}

/// One respondent: mean plus Gaussian noise, clamped to `[0, 1]`, then
/// scaled into raw survey units by the schema denominators.
pub fn sample_respondent<R: Rng + ?Sized>(a: &Archetype, schema: &SchemaSpec, rng: &mut R) -> RawRecord {
    let values = a
        .feature_means
        .iter()
        .zip(a.noise_sd.iter())
        .zip(&schema.features)
        .map(|((&mean, &sd), col)| {
            let z: f64 = StandardNormal.sample(rng);
            let f = if sd == 0.0 { mean } else { (mean + sd * z).clamp(0.0, 1.0) };
            f * col.denominator
        })
        .collect();
    RawRecord {
        values,
        label: a.class_index,
    }
}

/// The two middle order statistics (equal for odd counts).
fn middle_pair(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    (values[(n - 1) / 2], values[n / 2])
}

/// Median as the mean of the two middle order statistics.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let (lo, hi) = middle_pair(&mut v);
    (lo + hi) / 2.0
}

/// Replaces every row by `factor` rows: `factor / 2` mirrored pairs
/// `(r + δ, r − δ)`, labels copied (`factor == 1` copies the input).
///
/// Each δ is drawn from `[0, perturbation · upper[j])` and then capped so
/// the pair stays inside `[0, upper[j]]` and never crosses the middle order
/// statistics of its column. Values at or below the lower middle stay at or
/// below it, values at or above the upper middle stay at or above it, so the
/// augmented column has the same two middle values and the same median.
pub fn augment_median<R: Rng + ?Sized>(
    rows: &[RawRecord],
    upper: &[f64],
    factor: usize,
    perturbation: f64,
    rng: &mut R,
) -> Result<Vec<RawRecord>> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset("augmentation input"));
    }
    if factor == 0 || (factor > 1 && factor % 2 == 1) {
        return Err(Error::InvalidConfig(format!(
            "augmentation factor must be 1 or even, got {factor}"
        )));
    }
    let width = upper.len();
    if let Some(r) = rows.iter().find(|r| r.values.len() != width) {
        return Err(Error::dims("augment_median", width, r.values.len()));
    }
    if factor == 1 {
        return Ok(rows.to_vec());
    }
    let middles: Vec<(f64, f64)> = (0..width)
        .map(|j| middle_pair(&mut rows.iter().map(|r| r.values[j]).collect::<Vec<_>>()))
        .collect();

    let mut out = Vec::with_capacity(rows.len() * factor);
    for row in rows {
        for _ in 0..factor / 2 {
            let mut plus = row.values.clone();
            let mut minus = row.values.clone();
            for j in 0..width {
                let v = row.values[j];
                let (lo, hi) = middles[j];
                let draw = rng.random::<f64>() * perturbation * upper[j];
                let toward_middle = if v <= lo { lo - v } else { v - hi };
                let delta = draw.min(toward_middle).min(v).min(upper[j] - v).max(0.0);
                // The caps are computed with rounding; re-clamp so no value
                // ends up on the wrong side of the middle or out of range.
                plus[j] = (v + delta).min(upper[j]);
                minus[j] = (v - delta).max(0.0);
                if v <= lo {
                    plus[j] = plus[j].min(lo);
                } else {
                    minus[j] = minus[j].max(hi);
                }
            }
            out.push(RawRecord {
                values: plus,
                label: row.label,
            });
            out.push(RawRecord {
                values: minus,
                label: row.label,
            });
        }
    }
    Ok(out)
}

/// Generated records plus the schema they follow.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub schema: SchemaSpec,
    pub records: Vec<RawRecord>,
    pub indicators: bool,
}

impl Synthetic {
    pub fn dataset(&self) -> Result<Dataset> {
        let rows = self
            .records
            .iter()
            .map(|r| {
                Ok(Row {
                    features: data::normalize(&r.values, &self.schema)?,
                    label: r.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.schema.clone(), rows)
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        data::write_csv(writer, &self.schema, &self.records, self.indicators)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Full pipeline: archetypes, source respondents (class-interleaved),
/// median-preserving augmentation, truncation to `n_rows`.
pub fn generate(cfg: &GeneratorConfig) -> Result<Synthetic> {
    generate_with_schema(cfg, &cfg.schema())
}

pub fn generate_with_schema(cfg: &GeneratorConfig, schema: &SchemaSpec) -> Result<Synthetic> {
    cfg.validate()?;
    schema.validate()?;
    if schema.feature_count() != cfg.n_features || schema.label_count() != cfg.n_classes {
        return Err(Error::InvalidConfig(format!(
            "schema has {} features / {} labels but the generator is configured for {} / {}",
            schema.feature_count(),
            schema.label_count(),
            cfg.n_features,
            cfg.n_classes
        )));
    }
    let archetypes = make_archetypes(cfg)?;
    let mut sample_rng = stream(cfg.seed, &[TAG_SAMPLE]);
    let per_class = cfg.source_rows_per_class();
    let mut source = Vec::with_capacity(per_class * cfg.n_classes);
    for _ in 0..per_class {
        for a in &archetypes {
            source.push(sample_respondent(a, schema, &mut sample_rng));
        }
    }
    let mut records = augment_median(
        &source,
        &schema.denominators(),
        cfg.augmentation_factor,
        cfg.perturbation,
        &mut stream(cfg.seed, &[TAG_AUGMENT]),
    )?;
    records.truncate(cfg.n_rows);
    Ok(Synthetic {
        schema: schema.clone(),
        records,
        indicators: cfg.indicators,
    })
}
