use super::activation::{ActivationKind, Mode};
use super::network::{forward_impl, ForwardTrace, Network};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{axpy, matvec_transpose_into, outer, Matrix, Vector};
use crate::rng::{stream, TAG_DROPOUT};

/// Probability floor used inside the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Categorical cross-entropy `-ln(pred[k])` for a one-hot `target` with its 1 at `k`.
pub fn cross_entropy(pred: &Vector, target: &Vector) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dims("cross_entropy", pred.len(), target.len()));
    }
    let class = one_hot_index(target)?;
    let sum: f64 = pred.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!(
            "prediction must sum to 1, sums to {sum}"
        )));
    }
    Ok(cross_entropy_index(pred, class))
}

pub(crate) fn cross_entropy_index(pred: &[f64], class: usize) -> f64 {
    -pred[class].max(PROB_FLOOR).ln()
}

/// Position of the single 1 in a one-hot vector.
pub fn one_hot_index(target: &Vector) -> Result<usize> {
    let mut hot = None;
    for (i, &t) in target.iter().enumerate() {
        if t == 1.0 {
            if hot.is_some() {
                return Err(Error::NotOneHot("more than one entry is 1".into()));
            }
            hot = Some(i);
        } else if t != 0.0 {
            return Err(Error::NotOneHot(format!("entry {i} is {t}")));
        }
    }
    hot.ok_or_else(|| Error::NotOneHot("no entry is 1".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Vector,
}

/// ∂loss/∂W and ∂loss/∂b for every layer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGradient {
                    weights: Matrix::zeros(l.width(), l.fan_in()),
                    bias: Vector::zeros(l.width()),
                })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()))
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.is_finite())
    }
}

/// Backpropagation for a single sample. The output delta is `pred - target`
/// (softmax fused with cross-entropy); hidden deltas are gated by the ReLU
/// derivative and by the dropout mask recorded in `trace`.
pub fn backward(net: &Network, trace: &ForwardTrace, target: &Vector) -> Result<Gradients> {
    check_trace(net, trace)?;
    if target.len() != net.output_width() {
        return Err(Error::dims("backward", net.output_width(), target.len()));
    }
    let class = one_hot_index(target)?;
    let deltas = layer_deltas(net, trace, class)?;
    let layers = deltas
        .into_iter()
        .enumerate()
        .map(|(k, delta)| {
            let input = trace.layer_input(k);
            LayerGradient {
                weights: outer(&delta, &input),
                bias: if net.use_bias() { delta } else { Vector::zeros(delta.len()) },
            }
        })
        .collect();
    Ok(Gradients { layers })
}

fn check_trace(net: &Network, trace: &ForwardTrace) -> Result<()> {
    let n = net.layers().len();
    if trace.pre.len() != n || trace.post.len() != n || trace.masks.len() != n {
        return Err(Error::dims("backward", format!("{n} layers"), format!("trace of {} layers", trace.pre.len())));
    }
    if trace.input.len() != net.input_width() {
        return Err(Error::dims("backward", net.input_width(), trace.input.len()));
    }
    for (k, l) in net.layers().iter().enumerate() {
        let w = l.width();
        if trace.pre[k].len() != w || trace.post[k].len() != w || trace.masks[k].len() != w {
            return Err(Error::dims("backward", format!("layer {k} width {w}"), trace.pre[k].len()));
        }
    }
    if !net.has_softmax_head() {
        return Err(Error::InvalidConfig(
            "backpropagation requires a softmax output layer".into(),
        ));
    }
    Ok(())
}

/// ∂loss/∂S for every layer.
fn layer_deltas(net: &Network, trace: &ForwardTrace, class: usize) -> Result<Vec<Vector>> {
    let layers = net.layers();
    let n = layers.len();
    let mut deltas = vec![Vector::default(); n];
    let mut delta = trace.output().clone();
    delta[class] -= 1.0;
    for k in (0..n).rev() {
        if k > 0 {
            let prev = &layers[k - 1];
            let mut back = Vector::zeros(prev.width());
            matvec_transpose_into(&layers[k].weights, &delta, &mut back);
            for i in 0..back.len() {
                let gate = match prev.activation {
                    ActivationKind::Relu => {
                        if trace.pre[k - 1][i] > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    ActivationKind::Linear => 1.0,
                    ActivationKind::Softmax => unreachable!("validated: softmax only on the last layer"),
                };
                back[i] *= gate * trace.masks[k - 1][i];
            }
            deltas[k] = std::mem::replace(&mut delta, back);
        } else {
            deltas[k] = std::mem::take(&mut delta);
        }
    }
    Ok(deltas)
}

/// Result of a mini-batch gradient evaluation.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    /// Per-sample gradients averaged over the batch.
    pub gradients: Gradients,
    /// Training-mode loss of each sample, in batch order.
    pub losses: Vec<f64>,
}

struct SampleWork {
    loss: f64,
    /// Input seen by each layer.
    inputs: Vec<Vector>,
    deltas: Vec<Vector>,
}

/// Mean gradient over a batch of `(features, class)` samples.
///
/// Sample `i` draws its dropout masks from a stream keyed by
/// `(seed, dropout_tags..., i)`, so the masks do not depend on scheduling.
/// Per-sample passes may run in parallel; the reduction always visits
/// samples in batch order, which makes the result identical to summing
/// [`backward`] outputs sequentially and dividing by the batch size.
pub fn batch_gradient(
    net: &Network,
    batch: &[(&[f64], usize)],
    mode: Mode,
    seed: u64,
    dropout_tags: &[u64],
    exec: Execution,
) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("gradient batch"));
    }
    if !net.has_softmax_head() {
        return Err(Error::InvalidConfig(
            "backpropagation requires a softmax output layer".into(),
        ));
    }
    let out_w = net.output_width();
    let work: Vec<Result<SampleWork>> = exec.map(batch, |i, &(x, class)| {
        if class >= out_w {
            return Err(Error::dims("batch_gradient", format!("{out_w} classes"), format!("label {class}")));
        }
        let x = Vector::from(x);
        let trace = match mode {
            Mode::Infer => forward_impl(net, &x, None)?,
            Mode::Train => {
                let mut tags = Vec::with_capacity(dropout_tags.len() + 2);
                tags.push(TAG_DROPOUT);
                tags.extend_from_slice(dropout_tags);
                tags.push(i as u64);
                let mut rng = stream(seed, &tags);
                forward_impl(net, &x, Some(&mut rng))?
            }
        };
        let loss = cross_entropy_index(trace.output(), class);
        let deltas = layer_deltas(net, &trace, class)?;
        let inputs = (0..net.layers().len()).map(|k| trace.layer_input(k)).collect();
        Ok(SampleWork { loss, inputs, deltas })
    });
    let work = work.into_iter().collect::<Result<Vec<_>>>()?;

    let count = batch.len() as f64;
    let mut grads = Gradients::zeros_like(net);
    for (k, g) in grads.layers.iter_mut().enumerate() {
        let cols = g.weights.cols();
        exec.for_each_chunk_mut(g.weights.as_mut_slice(), cols, |row, out| {
            for w in &work {
                let d = w.deltas[k][row];
                if d != 0.0 {
                    axpy(out, d, &w.inputs[k]);
                }
            }
            for v in out.iter_mut() {
                *v /= count;
            }
        });
        if net.use_bias() {
            for (row, b) in g.bias.iter_mut().enumerate() {
                for w in &work {
                    *b += w.deltas[k][row];
                }
                *b /= count;
            }
        }
    }
    Ok(BatchGradient {
        gradients: grads,
        losses: work.iter().map(|w| w.loss).collect(),
    })
}
