use rand::RngCore;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::activation::{activate_into, check_dropout_rate, fill_dropout_mask, ActivationKind, Mode};
use crate::error::{Error, Result};
use crate::linalg::{matvec_into, Matrix, Vector};
use crate::rng::{stream, TAG_INIT};

/// Fully connected layer: `S = W·x + b`, `Y = F(S)`, then dropout on `Y`
/// while training.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `fan_out × fan_in`.
    pub weights: Matrix,
    pub bias: Vector,
    pub activation: ActivationKind,
    pub dropout_rate: f64,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vector, activation: ActivationKind, dropout_rate: f64) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::dims(
                "DenseLayer::new",
                format!("weights {weights}"),
                format!("bias of length {}", bias.len()),
            ));
        }
        check_dropout_rate(dropout_rate)?;
        Ok(DenseLayer {
            weights,
            bias,
            activation,
            dropout_rate,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn width(&self) -> usize {
        self.weights.rows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

/// The neuron-kernel state of a whole layer, `W·x + b`.
pub fn weighted_sum(layer: &DenseLayer, input: &Vector) -> Result<Vector> {
    if input.len() != layer.fan_in() {
        return Err(Error::dims(
            "weighted_sum",
            format!("layer weights {}", layer.weights),
            format!("input of length {}", input.len()),
        ));
    }
    let mut s = Vector::zeros(layer.width());
    matvec_into(&layer.weights, input, &mut s);
    for (si, bi) in s.iter_mut().zip(layer.bias.iter()) {
        *si += bi;
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_width: usize,
    layers: Vec<DenseLayer>,
    use_bias: bool,
    seed: u64,
}

impl Network {
    /// Checks that shapes chain, Softmax appears only on the last layer and
    /// that the last layer has no dropout. With `use_bias == false` every
    /// bias must be zero.
    pub fn new(input_width: usize, layers: Vec<DenseLayer>, use_bias: bool, seed: u64) -> Result<Self> {
        if input_width == 0 || layers.is_empty() {
            return Err(Error::InvalidConfig(
                "network needs a positive input width and at least one layer".into(),
            ));
        }
        let mut prev = input_width;
        for (k, layer) in layers.iter().enumerate() {
            if layer.fan_in() != prev {
                return Err(Error::dims(
                    "Network::new",
                    format!("layer {k} expects {} inputs", layer.fan_in()),
                    format!("previous width {prev}"),
                ));
            }
            if layer.bias.len() != layer.width() {
                return Err(Error::dims("Network::new", layer.width(), layer.bias.len()));
            }
            check_dropout_rate(layer.dropout_rate)?;
            let last = k + 1 == layers.len();
            if layer.activation == ActivationKind::Softmax && !last {
                return Err(Error::InvalidConfig(format!(
                    "softmax is only allowed on the final layer (found on layer {k})"
                )));
            }
            if last && layer.dropout_rate != 0.0 {
                return Err(Error::InvalidConfig("the output layer cannot use dropout".into()));
            }
            if !use_bias && layer.bias.iter().any(|&b| b != 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "layer {k} has non-zero bias but use_bias is off"
                )));
            }
            prev = layer.width();
        }
        Ok(Network {
            input_width,
            layers,
            use_bias,
            seed,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::width)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn use_bias(&self) -> bool {
        self.use_bias
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn has_softmax_head(&self) -> bool {
        self.layers.last().map(|l| l.activation) == Some(ActivationKind::Softmax)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_width: self.input_width,
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    width: l.width(),
                    activation: l.activation,
                    dropout: l.dropout_rate,
                })
                .collect(),
            use_bias: self.use_bias,
        }
    }

    /// Layer widths joined by dashes, e.g. `35-128-1256-128-29`.
    pub fn layout(&self) -> String {
        std::iter::once(self.input_width)
            .chain(self.layers.iter().map(DenseLayer::width))
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.is_finite())
    }

    /// Inference-mode forward pass returning only the output.
    pub fn predict(&self, x: &Vector) -> Result<Vector> {
        let mut trace = forward_impl(self, x, None)?;
        Ok(trace.post.pop().expect("network has at least one layer"))
    }
}

/// Everything the forward pass computed, layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vector,
    /// Weighted sums `S`.
    pub pre: Vec<Vector>,
    /// Activations `Y = F(S)` before dropout.
    pub post: Vec<Vector>,
    /// Per-unit dropout factor; all ones when dropout was inactive.
    pub masks: Vec<Vector>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Vector {
        self.post.last().expect("trace has at least one layer")
    }

    /// Input seen by layer `k`, i.e. the dropped-out output of layer `k-1`.
    pub fn layer_input(&self, k: usize) -> Vector {
        if k == 0 {
            self.input.clone()
        } else {
            self.post[k - 1]
                .iter()
                .zip(self.masks[k - 1].iter())
                .map(|(y, m)| y * m)
                .collect::<Vec<_>>()
                .into()
        }
    }
}

/// Runs the network on `x`. In [`Mode::Train`] dropout masks are drawn from
/// `rng`; in [`Mode::Infer`] `rng` is untouched.
pub fn forward<R: RngCore>(net: &Network, x: &Vector, mode: Mode, rng: &mut R) -> Result<ForwardTrace> {
    match mode {
        Mode::Train => forward_impl(net, x, Some(rng)),
        Mode::Infer => forward_impl(net, x, None),
    }
}

pub(crate) fn forward_impl(net: &Network, x: &Vector, mut rng: Option<&mut dyn RngCore>) -> Result<ForwardTrace> {
    if x.len() != net.input_width {
        return Err(Error::dims(
            "forward",
            format!("network input width {}", net.input_width),
            format!("input of length {}", x.len()),
        ));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("network input"));
    }
    let n = net.layers.len();
    let mut pre = Vec::with_capacity(n);
    let mut post = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    let mut current = x.clone();
    for layer in &net.layers {
        let mut s = Vector::zeros(layer.width());
        matvec_into(&layer.weights, &current, &mut s);
        for (si, bi) in s.iter_mut().zip(layer.bias.iter()) {
            *si += bi;
        }
        let mut y = Vector::zeros(layer.width());
        activate_into(layer.activation, &s, &mut y);
        let mut mask = Vector::filled(layer.width(), 1.0);
        if layer.dropout_rate > 0.0 {
            if let Some(r) = rng.as_deref_mut() {
                fill_dropout_mask(layer.dropout_rate, r, &mut mask);
            }
        }
        current = y.iter().zip(mask.iter()).map(|(a, m)| a * m).collect::<Vec<_>>().into();
        pre.push(s);
        post.push(y);
        masks.push(mask);
    }
    Ok(ForwardTrace {
        input: x.clone(),
        pre,
        post,
        masks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: ActivationKind,
    /// Drop probability applied to this layer's output while training.
    pub dropout: f64,
}

/// Shape of a network without its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
    #[serde(default = "default_true")]
    pub use_bias: bool,
}

fn default_true() -> bool {
    true
}

pub const SURVEY_INPUTS: usize = 35;
pub const SURVEY_OUTPUTS: usize = 29;

impl Architecture {
    /// 35 → Dense(128, ReLU) → drop 0.6 → Dense(1256, ReLU) → drop 0.8
    /// → Dense(128, ReLU) → drop 0.6 → Dense(29, Softmax).
    pub fn survey_default() -> Self {
        let relu = |width, dropout| LayerSpec {
            width,
            activation: ActivationKind::Relu,
            dropout,
        };
        Architecture {
            input_width: SURVEY_INPUTS,
            layers: vec![
                relu(128, 0.6),
                relu(1256, 0.8),
                relu(128, 0.6),
                LayerSpec {
                    width: SURVEY_OUTPUTS,
                    activation: ActivationKind::Softmax,
                    dropout: 0.0,
                },
            ],
            use_bias: true,
        }
    }

    /// ReLU hidden layers without dropout followed by a softmax head.
    pub fn relu_softmax(input_width: usize, hidden: &[usize], outputs: usize) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&width| LayerSpec {
                width,
                activation: ActivationKind::Relu,
                dropout: 0.0,
            })
            .collect();
        layers.push(LayerSpec {
            width: outputs,
            activation: ActivationKind::Softmax,
            dropout: 0.0,
        });
        Architecture {
            input_width,
            layers,
            use_bias: true,
        }
    }

    /// Named presets: `survey-default` and `compact` (35 → 64 → 29).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "survey-default" => Some(Self::survey_default()),
            "compact" => Some(Self::relu_softmax(SURVEY_INPUTS, &[64], SURVEY_OUTPUTS)),
            _ => None,
        }
    }

    pub fn with_io(mut self, input_width: usize, outputs: usize) -> Self {
        self.input_width = input_width;
        if let Some(last) = self.layers.last_mut() {
            last.width = outputs;
        }
        self
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    /// N(0, 2/fan_in) for ReLU layers, N(0, 1/fan_in) otherwise.
    #[default]
    He,
    /// U(-1/√fan_in, 1/√fan_in).
    Uniform,
}

/// Builds a network for `arch` with weights drawn from `scheme`; biases start
/// at zero. Identical inputs give bit-identical networks.
pub fn init_weights(arch: &Architecture, scheme: InitScheme, seed: u64) -> Result<Network> {
    let mut rng = stream(seed, &[TAG_INIT]);
    let mut layers = Vec::with_capacity(arch.layers.len());
    let mut fan_in = arch.input_width;
    for spec in &arch.layers {
        if spec.width == 0 || fan_in == 0 {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let n = spec.width * fan_in;
        let values: Vec<f64> = match scheme {
            InitScheme::He => {
                let gain = if spec.activation == ActivationKind::Relu { 2.0 } else { 1.0 };
                let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt())
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            }
            InitScheme::Uniform => {
                let limit = 1.0 / (fan_in as f64).sqrt();
                let uniform = Uniform::new_inclusive(-limit, limit)
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
                (0..n).map(|_| uniform.sample(&mut rng)).collect()
            }
        };
        let weights = Matrix::new(spec.width, fan_in, values)?;
        layers.push(DenseLayer::new(
            weights,
            Vector::zeros(spec.width),
            spec.activation,
            spec.dropout,
        )?);
        fan_in = spec.width;
    }
    Network::new(arch.input_width, layers, arch.use_bias, seed)
}
