//! Mini-batch training loop, evaluation and training diagnostics.

mod diagnostics;
mod history;
mod optim;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{batch_iter, split, Dataset};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{batch_gradient, cross_entropy_index, forward_impl, ActivationKind, Mode, Network};

pub use diagnostics::{detect_dead_relu, DeadNeuronReport, LayerDeadCount};
pub use history::{append_history, export_history, read_history, write_history, HISTORY_HEADER};
pub use optim::{adam_step, sgd_step, AdamParams, AdamState, Optimizer, OptimizerState};

/// Activation layout a training run expects the network to have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ActivationPreset {
    /// ReLU on every hidden layer, softmax on the output.
    #[default]
    #[serde(rename = "relu-softmax")]
    ReluSoftmax,
}

impl ActivationPreset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "relu-softmax" => Some(ActivationPreset::ReluSoftmax),
            _ => None,
        }
    }

    fn check(self, net: &Network) -> Result<()> {
        match self {
            ActivationPreset::ReluSoftmax => {
                let layers = net.layers();
                let (last, hidden) = layers.split_last().expect("network has layers");
                if last.activation != ActivationKind::Softmax
                    || hidden.iter().any(|l| l.activation != ActivationKind::Relu)
                {
                    return Err(Error::InvalidConfig(format!(
                        "activation preset relu-softmax does not match network {}",
                        describe_activations(net)
                    )));
                }
                Ok(())
            }
        }
    }
}

fn describe_activations(net: &Network) -> String {
    net.layers()
        .iter()
        .map(|l| l.activation.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

fn default_vs() -> f64 {
    0.1
}
fn default_bs() -> usize {
    20
}
fn default_epochs() -> usize {
    100
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Fraction of rows held out for validation.
    #[serde(default = "default_vs")]
    pub vs: f64,
    #[serde(default = "default_bs")]
    pub bs: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub activation: ActivationPreset,
    pub seed: u64,
    /// Epochs already trained on this network. Numbering, shuffling and
    /// dropout continue from here, so a resumed run picks up where the last
    /// one stopped.
    #[serde(default)]
    pub start_epoch: usize,
    /// When false every `wall_ms` is 0, making histories byte-comparable.
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
    #[serde(default)]
    pub execution: Execution,
}

impl TrainingConfig {
    pub fn new(seed: u64) -> Self {
        TrainingConfig {
            vs: default_vs(),
            bs: default_bs(),
            epochs: default_epochs(),
            optimizer: Optimizer::default(),
            activation: ActivationPreset::default(),
            seed,
            start_epoch: 0,
            record_wall_time: true,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vs > 0.0 && self.vs < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.vs
            )));
        }
        if self.bs == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epoch count must be at least 1".into()));
        }
        self.optimizer.validate()
    }

    /// Short hash of the settings that influence the trained weights.
    /// Execution mode and wall-time recording are left out since they do not.
    pub fn fingerprint(&self) -> String {
        let key = serde_json::json!({
            "vs": self.vs,
            "bs": self.bs,
            "epochs": self.epochs,
            "optimizer": self.optimizer,
            "activation": self.activation,
            "seed": self.seed,
            "start_epoch": self.start_epoch,
        });
        let digest = Sha256::digest(key.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based, counted across resumed runs.
    pub epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_ms: u64,
}

impl EpochMetrics {
    pub fn progress_line(&self) -> String {
        format!(
            "epoch={} train_acc={:.6} val_acc={:.6} train_loss={:.6} val_loss={:.6}",
            self.epoch, self.train_accuracy, self.val_accuracy, self.train_loss, self.val_loss
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochMetrics>,
    pub config: TrainingConfig,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    pub fn best_val_accuracy(&self) -> Option<f64> {
        self.epochs.iter().map(|m| m.val_accuracy).reduce(f64::max)
    }

    /// Appends a later run. Its epochs must continue this history's numbering.
    pub fn extend(&mut self, later: TrainingHistory) -> Result<()> {
        let next = self.last().map_or(1, |m| m.epoch + 1);
        if let Some(first) = later.epochs.first() {
            if first.epoch != next {
                return Err(Error::InvalidConfig(format!(
                    "history continues at epoch {} but the next run starts at {}",
                    next, first.epoch
                )));
            }
        }
        self.epochs.extend(later.epochs);
        self.config = later.config;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Fraction of rows whose top-1 prediction is the label.
    pub accuracy: f64,
    /// Mean cross-entropy.
    pub loss: f64,
    pub rows: usize,
}

fn check_shapes(net: &Network, ds: &Dataset) -> Result<()> {
    let (inputs, outputs) = (ds.schema().feature_count(), ds.schema().label_count());
    if inputs != net.input_width() || outputs != net.output_width() {
        return Err(Error::dims(
            "dataset vs network",
            format!("network {}->{}", net.input_width(), net.output_width()),
            format!("schema {inputs}->{outputs}"),
        ));
    }
    Ok(())
}

pub fn evaluate(net: &Network, ds: &Dataset) -> Result<Evaluation> {
    evaluate_with(net, ds, Execution::default())
}

/// Infer-mode accuracy and mean loss. Rows may be scored in parallel; the
/// loss is summed in row order either way.
pub fn evaluate_with(net: &Network, ds: &Dataset, exec: Execution) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("evaluation set"));
    }
    check_shapes(net, ds)?;
    if !net.has_softmax_head() {
        return Err(Error::InvalidConfig("evaluation requires a softmax output layer".into()));
    }
    let scored: Vec<Result<(bool, f64)>> = exec.map(ds.rows(), |_, row| {
        let trace = forward_impl(net, &row.features, None)?;
        let out = trace.output();
        Ok((out.argmax() == Some(row.label), cross_entropy_index(out, row.label)))
    });
    let mut correct = 0usize;
    let mut total = 0.0;
    for s in scored {
        let (hit, loss): (bool, f64) = s?;
        correct += hit as usize;
        total += loss;
    }
    let n = ds.len();
    Ok(Evaluation {
        accuracy: correct as f64 / n as f64,
        loss: total / n as f64,
        rows: n,
    })
}

pub fn train(net: &mut Network, ds: &Dataset, cfg: &TrainingConfig) -> Result<TrainingHistory> {
    train_with(net, ds, cfg, |_| {})
}

/// Trains `net` in place, calling `on_epoch` after each epoch's metrics are
/// computed.
///
/// The train/validation split depends only on `cfg.seed`. Epoch `e` shuffles
/// with `(seed, e)` and draws dropout masks per `(seed, e, batch, sample)`.
/// On a non-finite loss, gradient or parameter the run stops with
/// [`Error::NonFiniteLoss`]; the network then holds the last update.
pub fn train_with<F>(net: &mut Network, ds: &Dataset, cfg: &TrainingConfig, mut on_epoch: F) -> Result<TrainingHistory>
where
    F: FnMut(&EpochMetrics),
{
    cfg.validate()?;
    check_shapes(net, ds)?;
    cfg.activation.check(net)?;
    let parts = split(ds, cfg.vs, cfg.seed)?;
    let train_set = &parts.train;
    let samples: Vec<(&[f64], usize)> = train_set
        .rows()
        .iter()
        .map(|r| (r.features.as_slice(), r.label))
        .collect();
    let mut opt = OptimizerState::new(cfg.optimizer, net);
    let mut history = TrainingHistory {
        epochs: Vec::with_capacity(cfg.epochs),
        config: cfg.clone(),
    };
    let mut batch: Vec<(&[f64], usize)> = Vec::with_capacity(cfg.bs);

    for e in 1..=cfg.epochs {
        let epoch = cfg.start_epoch + e;
        let started = Instant::now();
        let order = batch_iter(samples.len(), cfg.bs, cfg.seed, epoch)?;
        for (b, idx) in order.iter().enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| samples[i]));
            let bg = batch_gradient(
                net,
                &batch,
                Mode::Train,
                cfg.seed,
                &[epoch as u64, b as u64],
                cfg.execution,
            )?;
            let abort = Error::NonFiniteLoss { epoch, batch: b + 1 };
            if bg.losses.iter().any(|l| !l.is_finite()) || !bg.gradients.is_finite() {
                return Err(abort);
            }
            opt.step(net, &bg.gradients)?;
            if !net.is_finite() {
                return Err(abort);
            }
        }
        let tr = evaluate_with(net, train_set, cfg.execution)?;
        let va = evaluate_with(net, &parts.validation, cfg.execution)?;
        let metrics = EpochMetrics {
            epoch,
            train_accuracy: tr.accuracy,
            val_accuracy: va.accuracy,
            train_loss: tr.loss,
            val_loss: va.loss,
            wall_ms: if cfg.record_wall_time {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        log::debug!("{}", metrics.progress_line());
        on_epoch(&metrics);
        history.epochs.push(metrics);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureColumn, LabelColumn, Row, SchemaSpec};
    use crate::linalg::{Matrix, Vector};
    use crate::nn::{init_weights, Architecture, DenseLayer, InitScheme};
    use crate::synth::{generate, GeneratorConfig};

    fn toy_schema(features: usize, classes: usize) -> SchemaSpec {
        SchemaSpec::new(
            (0..features).map(|i| FeatureColumn::custom(&format!("X{i}"), 1.0)).collect(),
            (0..classes).map(|i| LabelColumn { code: format!("C{i}") }).collect(),
        )
        .unwrap()
    }

    /// Two well-separated clusters in the unit square.
    fn separable(n: usize) -> Dataset {
        let rows = (0..n)
            .map(|i| {
                let label = i % 2;
                let t = (i as f64 * 0.618_034).fract() * 0.3;
                let base = if label == 0 { 0.1 } else { 0.6 };
                Row {
                    features: Vector::from(vec![base + t, base + 0.3 - t]),
                    label,
                }
            })
            .collect();
        Dataset::new(toy_schema(2, 2), rows).unwrap()
    }

    fn quiet(seed: u64) -> TrainingConfig {
        TrainingConfig {
            record_wall_time: false,
            ..TrainingConfig::new(seed)
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights_untouched() {
        let ds = separable(40);
        let arch = Architecture::relu_softmax(2, &[6], 2);
        for opt in [Optimizer::sgd(0.0), Optimizer::adam(0.0)] {
            let mut net = init_weights(&arch, InitScheme::He, 3).unwrap();
            let before = net.clone();
            let cfg = TrainingConfig {
                optimizer: opt,
                epochs: 5,
                bs: 4,
                ..quiet(1)
            };
            train(&mut net, &ds, &cfg).unwrap();
            assert_eq!(net, before);
        }
    }

    #[test]
    fn sgd_reduces_loss_on_separable_toy() {
        let ds = separable(60);
        let mut net = init_weights(&Architecture::relu_softmax(2, &[8], 2), InitScheme::He, 11).unwrap();
        let cfg = TrainingConfig {
            optimizer: Optimizer::sgd(0.1),
            epochs: 10,
            bs: 5,
            ..quiet(5)
        };
        let h = train(&mut net, &ds, &cfg).unwrap();
        assert_eq!(h.len(), 10);
        assert!(h.epochs[9].train_loss < h.epochs[0].train_loss, "{:?}", h.epochs);
        for (i, m) in h.epochs.iter().enumerate() {
            assert_eq!(m.epoch, i + 1);
            assert!((0.0..=1.0).contains(&m.train_accuracy) && (0.0..=1.0).contains(&m.val_accuracy));
            assert!(m.train_loss >= 0.0 && m.val_loss.is_finite());
            assert_eq!(m.wall_ms, 0);
        }
    }

    #[test]
    fn identical_runs_and_modes_agree_bitwise() {
        let ds = generate(&GeneratorConfig {
            n_rows: 120,
            n_classes: 4,
            n_features: 6,
            ..GeneratorConfig::new(2)
        })
        .unwrap()
        .dataset()
        .unwrap();
        let arch = Architecture {
            input_width: 6,
            layers: vec![
                crate::nn::LayerSpec {
                    width: 16,
                    activation: ActivationKind::Relu,
                    dropout: 0.5,
                },
                crate::nn::LayerSpec {
                    width: 4,
                    activation: ActivationKind::Softmax,
                    dropout: 0.0,
                },
            ],
            use_bias: true,
        };
        let run = |exec| {
            let mut net = init_weights(&arch, InitScheme::He, 9).unwrap();
            let cfg = TrainingConfig {
                epochs: 4,
                bs: 7,
                execution: exec,
                ..quiet(9)
            };
            let h = train(&mut net, &ds, &cfg).unwrap();
            (net, h.epochs)
        };
        let a = run(Execution::Sequential);
        assert_eq!(a, run(Execution::Sequential));
        assert_eq!(a, run(Execution::Parallel));
    }

    #[test]
    fn resumed_training_matches_one_long_run() {
        let ds = separable(30);
        let arch = Architecture::relu_softmax(2, &[5], 2);
        let mut long = init_weights(&arch, InitScheme::He, 4).unwrap();
        let cfg = TrainingConfig {
            optimizer: Optimizer::sgd(0.05),
            epochs: 6,
            bs: 4,
            ..quiet(8)
        };
        let full = train(&mut long, &ds, &cfg).unwrap();

        let mut net = init_weights(&arch, InitScheme::He, 4).unwrap();
        let mut h = train(&mut net, &ds, &TrainingConfig { epochs: 2, ..cfg.clone() }).unwrap();
        let rest = train(
            &mut net,
            &ds,
            &TrainingConfig {
                epochs: 4,
                start_epoch: 2,
                ..cfg.clone()
            },
        )
        .unwrap();
        h.extend(rest).unwrap();
        // SGD carries no state, so splitting the run changes nothing.
        assert_eq!(net, long);
        assert_eq!(h.epochs, full.epochs);
    }

    #[test]
    fn progress_stream_over_channel() {
        let ds = separable(20);
        let mut net = init_weights(&Architecture::relu_softmax(2, &[4], 2), InitScheme::He, 1).unwrap();
        let (tx, rx) = std::sync::mpsc::channel::<EpochMetrics>();
        let consumer = std::thread::spawn(move || rx.iter().map(|m| m.progress_line()).collect::<Vec<_>>());
        let cfg = TrainingConfig { epochs: 3, ..quiet(2) };
        let h = train_with(&mut net, &ds, &cfg, |m| tx.send(*m).unwrap()).unwrap();
        drop(tx);
        let lines = consumer.join().unwrap();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], h.epochs[2].progress_line());
        assert!(lines[0].starts_with("epoch=1 train_acc="));
        assert!(lines[0].contains(" val_acc=") && lines[0].contains(" val_loss="));
    }

    #[test]
    fn config_validation() {
        let ok = TrainingConfig::new(0);
        assert!(ok.validate().is_ok());
        for bad in [
            TrainingConfig { vs: 0.0, ..ok.clone() },
            TrainingConfig { vs: 1.0, ..ok.clone() },
            TrainingConfig { bs: 0, ..ok.clone() },
            TrainingConfig { epochs: 0, ..ok.clone() },
            TrainingConfig {
                optimizer: Optimizer::sgd(f64::NAN),
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))), "{bad:?}");
        }
        let parsed: TrainingConfig = serde_json::from_str(r#"{"seed": 7, "epochs": 3}"#).unwrap();
        assert_eq!(parsed.bs, 20);
        assert_eq!(parsed.optimizer, Optimizer::adam(1e-3));
        assert_eq!(ok.fingerprint(), TrainingConfig { execution: Execution::Sequential, ..ok.clone() }.fingerprint());
        assert_ne!(ok.fingerprint(), TrainingConfig::new(1).fingerprint());
        assert_eq!(ok.fingerprint().len(), 16);
    }

    #[test]
    fn mismatched_dataset_is_rejected() {
        let ds = separable(20);
        let mut net = init_weights(&Architecture::relu_softmax(3, &[4], 2), InitScheme::He, 1).unwrap();
        assert!(matches!(
            train(&mut net, &ds, &quiet(0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(evaluate(&net, &ds), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn diverging_run_reports_epoch_and_batch() {
        let ds = separable(40);
        let mut net = init_weights(&Architecture::relu_softmax(2, &[4], 2), InitScheme::He, 1).unwrap();
        let cfg = TrainingConfig {
            optimizer: Optimizer::sgd(1e308),
            bs: 4,
            ..quiet(0)
        };
        match train(&mut net, &ds, &cfg) {
            Err(Error::NonFiniteLoss { epoch, batch }) => {
                assert_eq!(epoch, 1);
                assert!(batch >= 1);
            }
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    /// Single softmax layer that maps one-hot inputs to near one-hot outputs.
    fn scaled_identity(k: usize, scale: f64) -> Network {
        let mut w = Matrix::identity(k);
        for v in w.as_mut_slice() {
            *v *= scale;
        }
        let layer = DenseLayer::new(w, Vector::zeros(k), ActivationKind::Softmax, 0.0).unwrap();
        Network::new(k, vec![layer], true, 0).unwrap()
    }

    fn one_hot_rows(k: usize, reps: usize) -> Dataset {
        let rows = (0..k * reps)
            .map(|i| Row {
                features: Vector::one_hot(k, i % k),
                label: i % k,
            })
            .collect();
        Dataset::new(toy_schema(k, k), rows).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let ds = one_hot_rows(29, 2);
        let perfect = evaluate(&scaled_identity(29, 800.0), &ds).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        assert!(perfect.loss < 1e-12);

        let uniform = scaled_identity(29, 0.0);
        let e = evaluate(&uniform, &ds).unwrap();
        assert!((e.loss - 29f64.ln()).abs() < 1e-12);
        assert!((e.loss - 3.3673).abs() < 1e-4);
        // Ties go to index 0, so exactly one class in 29 is hit.
        assert!((e.accuracy - 1.0 / 29.0).abs() < 1e-12);
        assert_eq!(e, evaluate(&uniform, &ds).unwrap());
        assert_eq!(e, evaluate_with(&uniform, &ds, Execution::Sequential).unwrap());

        let empty = Dataset::new(toy_schema(29, 29), vec![]).unwrap();
        assert!(matches!(evaluate(&uniform, &empty), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn preset_must_match_network() {
        let ds = one_hot_rows(3, 4);
        let mut net = scaled_identity(3, 1.0);
        assert!(train(&mut net, &ds, &TrainingConfig { epochs: 1, ..quiet(0) }).is_ok());
        let lin = DenseLayer::new(Matrix::identity(3), Vector::zeros(3), ActivationKind::Linear, 0.0).unwrap();
        let head = DenseLayer::new(Matrix::identity(3), Vector::zeros(3), ActivationKind::Softmax, 0.0).unwrap();
        let mut net = Network::new(3, vec![lin, head], true, 0).unwrap();
        assert!(matches!(
            train(&mut net, &ds, &quiet(0)),
            Err(Error::InvalidConfig(_))
        ));
        assert_eq!(ActivationPreset::parse("relu-softmax"), Some(ActivationPreset::ReluSoftmax));
        assert_eq!(ActivationPreset::parse("tanh"), None);
    }
}
