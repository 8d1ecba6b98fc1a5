use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Softmax,
    Linear,
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Softmax => "softmax",
            ActivationKind::Linear => "linear",
        })
    }
}

/// Whether dropout is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

pub fn relu(s: &Vector) -> Vector {
    s.iter().map(|&x| x.max(0.0)).collect::<Vec<_>>().into()
}

/// Derivative of ReLU; taken as 0 at exactly 0.
pub fn relu_grad(s: &Vector) -> Vector {
    s.iter()
        .map(|&x| if x > 0.0 { 1.0 } else { 0.0 })
        .collect::<Vec<_>>()
        .into()
}

/// Max-shifted softmax. Entries are floored at `f64::MIN_POSITIVE` so the
/// output stays strictly positive even for logit gaps beyond `exp` range.
pub fn softmax(z: &Vector) -> Result<Vector> {
    if z.is_empty() {
        return Err(Error::InvalidConfig("softmax of an empty vector".into()));
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("softmax input"));
    }
    let mut out = Vector::zeros(z.len());
    softmax_into(z, &mut out);
    Ok(out)
}

pub(crate) fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(z) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o = (*o / sum).max(f64::MIN_POSITIVE);
    }
}

pub(crate) fn activate_into(kind: ActivationKind, s: &[f64], out: &mut [f64]) {
    match kind {
        ActivationKind::Relu => {
            for (o, &x) in out.iter_mut().zip(s) {
                *o = x.max(0.0);
            }
        }
        ActivationKind::Linear => out.copy_from_slice(s),
        ActivationKind::Softmax => softmax_into(s, out),
    }
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidDropout(rate))
    }
}

/// Inverted dropout. Returns the masked output and the per-unit factor that
/// was applied (0 for dropped units, `1/(1-rate)` for kept ones).
///
/// With `rate == 0` or in [`Mode::Infer`] the input passes through, the mask
/// is all ones and no randomness is consumed.
pub fn apply_dropout(
    y: &Vector,
    rate: f64,
    mode: Mode,
    rng: &mut (impl RngCore + ?Sized),
) -> Result<(Vector, Vector)> {
    check_dropout_rate(rate)?;
    let mut mask = Vector::filled(y.len(), 1.0);
    if mode == Mode::Train && rate > 0.0 {
        fill_dropout_mask(rate, rng, &mut mask);
    }
    let out = y.iter().zip(mask.iter()).map(|(a, m)| a * m).collect::<Vec<_>>();
    Ok((out.into(), mask))
}

pub(crate) fn fill_dropout_mask<R: RngCore + ?Sized>(rate: f64, rng: &mut R, mask: &mut [f64]) {
    let scale = 1.0 / (1.0 - rate);
    for m in mask.iter_mut() {
        *m = if rng.random::<f64>() < rate { 0.0 } else { scale };
    }
}
