use std::fmt;
use std::io::Write;

use fcfnn::data::{load_csv, normalize, Dataset, Row, SchemaSpec};
use fcfnn::io::{classify_csv, format_report, Model, TrainingRecord};
use fcfnn::nn::{init_weights, Architecture, InitScheme};
use fcfnn::synth::{generate, GeneratorConfig};
use fcfnn::train::{
    append_history, detect_dead_relu, evaluate_with, export_history, train_with, ActivationPreset, Optimizer,
    TrainingConfig,
};
use fcfnn::Execution;

use crate::cli::{EvaluateArgs, GenerateArgs, InitArg, InspectArgs, OptimizerArg, PredictArgs, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flag values; exit code 1.
    Usage(String),
    /// Data, model or I/O failure; exit code 2.
    Run(fcfnn::Error),
}

impl From<fcfnn::Error> for CliError {
    fn from(e: fcfnn::Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Run(e) => e.kind(),
        }
    }
}

impl fmt::Display for CliError {
    /// One line: `error: kind=<kind> message="<text>"`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Usage(m) => m.clone(),
            CliError::Run(e) => e.to_string(),
        };
        let escaped = msg.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        write!(f, "error: kind={} message=\"{}\"", self.kind(), escaped)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn load_schema(arg: &Option<std::path::PathBuf>) -> Result<SchemaSpec> {
    match arg {
        Some(p) => Ok(SchemaSpec::from_json_file(p)?),
        None => Ok(SchemaSpec::survey_default()),
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

pub fn generate_cmd(a: &GenerateArgs) -> Result<()> {
    let cfg = GeneratorConfig {
        n_rows: a.rows,
        n_classes: a.classes,
        n_features: a.features,
        seed: a.seed,
        base_rows_per_class: a.base_rows,
        augmentation_factor: a.factor,
        noise_sd: a.noise_sd,
        perturbation: a.perturbation,
        indicators: !a.no_indicators,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let synth = generate(&cfg)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
    synth.write_csv(&mut out)?;
    out.flush()?;
    if let Some(p) = &a.schema_out {
        std::fs::write(p, synth.schema.to_json())?;
    }
    log::info!("wrote {} rows to {}", synth.records.len(), a.out.display());
    Ok(())
}

fn training_config(a: &TrainArgs, start_epoch: usize) -> Result<TrainingConfig> {
    let activation = ActivationPreset::parse(&a.activation_preset)
        .ok_or_else(|| CliError::Usage(format!("unknown activation preset {:?}", a.activation_preset)))?;
    let optimizer = match a.optimizer {
        OptimizerArg::Sgd => Optimizer::sgd(a.lr),
        OptimizerArg::Adam => Optimizer::adam(a.lr),
    };
    let cfg = TrainingConfig {
        vs: a.vs,
        bs: a.bs,
        epochs: a.epochs,
        optimizer,
        activation,
        seed: a.seed,
        start_epoch,
        record_wall_time: !a.no_wall_time,
        execution: execution(a.sequential),
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn architecture(a: &TrainArgs, schema: &SchemaSpec) -> Result<Architecture> {
    let (inputs, outputs) = (schema.feature_count(), schema.label_count());
    let mut arch = match &a.hidden {
        Some(h) => Architecture::relu_softmax(inputs, h, outputs),
        None => Architecture::preset(&a.preset)
            .ok_or_else(|| CliError::Usage(format!("unknown architecture preset {:?}", a.preset)))?
            .with_io(inputs, outputs),
    };
    arch.use_bias = !a.no_bias;
    Ok(arch)
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let (mut model, start_epoch) = match &a.resume {
        Some(path) => {
            let m = Model::load(path)?;
            if a.schema.schema.is_some() && load_schema(&a.schema.schema)? != m.schema {
                return Err(CliError::Usage(format!(
                    "--schema differs from the schema stored in {}",
                    path.display()
                )));
            }
            let start = m.training.epochs_trained;
            (m, start)
        }
        None => {
            let schema = load_schema(&a.schema.schema)?;
            let arch = architecture(a, &schema)?;
            let init = match a.init {
                InitArg::He => InitScheme::He,
                InitArg::Uniform => InitScheme::Uniform,
            };
            let net = init_weights(&arch, init, a.seed)?;
            (Model::new(net, schema)?, 0)
        }
    };
    let cfg = training_config(a, start_epoch)?;
    let ds = Dataset::load(&a.data, &model.schema)?;
    log::info!(
        "training {} on {} rows, epochs {}..={}",
        model.network.layout(),
        ds.len(),
        start_epoch + 1,
        start_epoch + cfg.epochs
    );
    let stdout = std::io::stdout();
    let quiet = a.quiet;
    let history = train_with(&mut model.network, &ds, &cfg, |m| {
        if !quiet {
            let _ = writeln!(stdout.lock(), "{}", m.progress_line());
        }
    })?;
    model.training = TrainingRecord {
        fingerprint: Some(cfg.fingerprint()),
        epochs_trained: start_epoch + cfg.epochs,
    };
    model.save(&a.out)?;
    if let Some(h) = &a.history {
        if a.resume.is_some() {
            append_history(h, &history.epochs)?;
        } else {
            export_history(&history, h)?;
        }
    }
    Ok(())
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let ds = Dataset::load(&a.data, &model.schema)?;
    let e = evaluate_with(&model.network, &ds, execution(a.sequential))?;
    println!("accuracy={:.6} loss={:.6} rows={}", e.accuracy, e.loss, e.rows);
    Ok(())
}

pub fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let n = model.schema.label_count();
    if a.top_k == 0 || a.top_k > n {
        return Err(CliError::Usage(format!("--top-k must lie in 1..={n}, got {}", a.top_k)));
    }
    let profiles = classify_csv(&model, &a.data, &a.out, a.top_k)?;
    if a.report {
        let stdout = std::io::stdout();
        let mut out = stdout.lock();
        for p in &profiles {
            writeln!(
                out,
                "{}: {}",
                p.respondent.as_deref().unwrap_or("?"),
                format_report(p, a.threshold, a.top_k)
            )?;
        }
    }
    log::info!("classified {} rows into {}", profiles.len(), a.out.display());
    Ok(())
}

pub fn inspect_cmd(a: &InspectArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let net = &model.network;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "architecture: {}", net.layout())?;
    let mut fan_in = net.input_width();
    for (k, l) in net.layers().iter().enumerate() {
        writeln!(
            out,
            "layer {}: {} {}->{} dropout={}",
            k + 1,
            l.activation,
            fan_in,
            l.width(),
            l.dropout_rate
        )?;
        fan_in = l.width();
    }
    writeln!(out, "use_bias: {}", net.use_bias())?;
    writeln!(out, "parameters: {}", net.parameter_count())?;
    writeln!(out, "epochs_trained: {}", model.training.epochs_trained)?;
    if let Some(fp) = &model.training.fingerprint {
        writeln!(out, "config_fingerprint: {fp}")?;
    }
    if let Some(p) = &a.probe {
        let table = load_csv(p, &model.schema)?;
        let labels = table.labels.clone().unwrap_or_else(|| vec![0; table.len()]);
        let rows = table
            .features
            .iter()
            .zip(labels)
            .map(|(raw, label)| {
                Ok(Row {
                    features: normalize(raw, &model.schema)?,
                    label,
                })
            })
            .collect::<fcfnn::Result<Vec<_>>>()?;
        let probe = Dataset::new(model.schema.clone(), rows)?;
        let r = detect_dead_relu(net, &probe)?;
        for l in &r.layers {
            writeln!(out, "dead_relu layer {}: {}/{}", l.layer + 1, l.dead, l.width)?;
        }
        writeln!(
            out,
            "dead_relu total: {}/{} ({:.2}%) over {} probe rows",
            r.total_dead,
            r.total,
            r.fraction * 100.0,
            probe.len()
        )?;
    }
    Ok(())
}
