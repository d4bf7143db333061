//! Dense ReLU MLP without biases: hidden layers use ReLU, the output layer
//! is linear. `relu'(0)` is taken to be 0 everywhere.

use std::ops::{Deref, DerefMut};

use crate::arch::Architecture;
use crate::error::{Error, Result};

/// Flat edge-indexed weights in the layout of [`Architecture`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(arch: &Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.num_edges() {
            return Err(Error::Shape(format!(
                "weight vector has {} entries, {arch} needs {}",
                values.len(),
                arch.num_edges()
            )));
        }
        Ok(Self(values))
    }

    pub fn filled(arch: &Architecture, value: f64) -> Self {
        Self(vec![value; arch.num_edges()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Fails with a domain error if any entry is zero or not finite.
    pub fn check_nonzero(&self) -> Result<()> {
        match self.0.iter().position(|&w| w == 0.0 || !w.is_finite()) {
            Some(i) => Err(Error::Domain(format!("weight {i} is {}", self.0[i]))),
            None => Ok(()),
        }
    }
}

impl Deref for WeightVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for WeightVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossSpec {
    #[default]
    SoftmaxCrossEntropy,
    /// `(1/K) * sum_k (out_k - target_k)^2`.
    MeanSquaredError,
}

impl std::str::FromStr for LossSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax-cross-entropy" | "cross-entropy" | "ce" => Ok(Self::SoftmaxCrossEntropy),
            "mean-squared-error" | "mse" => Ok(Self::MeanSquaredError),
            other => Err(Error::Domain(format!("unknown loss `{other}`"))),
        }
    }
}

impl std::fmt::Display for LossSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SoftmaxCrossEntropy => "softmax-cross-entropy",
            Self::MeanSquaredError => "mean-squared-error",
        })
    }
}

/// Supervision for one example. Class labels are one-hot encoded for MSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<'a> {
    Class(usize),
    Values(&'a [f64]),
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    pub target: Target<'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Pre-activations of hidden layers `1..L`; index 0 is layer 1.
    pub pre_activations: Vec<Vec<f64>>,
    /// Node values `o^l` for layers `0..L`; index 0 is the input.
    pub node_values: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl ForwardTrace {
    /// Hidden node values of layer `l` in `1..L`.
    pub fn hidden(&self, layer: usize) -> &[f64] {
        &self.node_values[layer]
    }

    /// Smallest `|pre-activation|` over all hidden nodes, or infinity when
    /// there are none. Used to keep numeric checks away from ReLU kinks.
    pub fn min_abs_pre_activation(&self) -> f64 {
        self.pre_activations
            .iter()
            .flatten()
            .fold(f64::INFINITY, |acc, z| acc.min(z.abs()))
    }
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

pub fn forward(arch: &Architecture, w: &[f64], x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != arch.input_dim() {
        return Err(Error::InputShape {
            expected: arch.input_dim(),
            got: x.len(),
        });
    }
    debug_assert_eq!(w.len(), arch.num_edges());
    let depth = arch.depth();
    let mut node_values = Vec::with_capacity(depth + 1);
    let mut pre_activations = Vec::with_capacity(depth.saturating_sub(1));
    node_values.push(x.to_vec());
    let mut outputs = Vec::new();
    for l in 1..=depth {
        let fan_in = arch.width(l - 1);
        let prev = &node_values[l - 1];
        let base = arch.layer_offset(l);
        let z: Vec<f64> = (0..arch.width(l))
            .map(|dst| {
                let col = &w[base + dst * fan_in..base + (dst + 1) * fan_in];
                col.iter().zip(prev).map(|(a, b)| a * b).sum()
            })
            .collect();
        if l < depth {
            node_values.push(z.iter().copied().map(relu).collect());
            pre_activations.push(z);
        } else {
            outputs = z;
        }
    }
    node_values.push(outputs.clone());
    Ok(ForwardTrace {
        pre_activations,
        node_values,
        outputs,
    })
}

fn check_target(target: Target<'_>, k: usize) -> Result<()> {
    match target {
        Target::Class(c) if c >= k => Err(Error::Label {
            label: c,
            classes: k,
        }),
        Target::Values(t) if t.len() != k => Err(Error::InputShape {
            expected: k,
            got: t.len(),
        }),
        _ => Ok(()),
    }
}

fn target_value(target: Target<'_>, k: usize) -> f64 {
    match target {
        Target::Class(c) => f64::from(u8::from(c == k)),
        Target::Values(t) => t[k],
    }
}

/// Loss and its gradient with respect to the outputs.
fn loss_and_output_grad(
    outputs: &[f64],
    target: Target<'_>,
    loss: LossSpec,
) -> Result<(f64, Vec<f64>)> {
    let k = outputs.len();
    check_target(target, k)?;
    match loss {
        LossSpec::SoftmaxCrossEntropy => {
            let Target::Class(label) = target else {
                return Err(Error::Domain(
                    "softmax cross-entropy needs a class label".into(),
                ));
            };
            let max = outputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = outputs.iter().map(|&z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let value = sum.ln() + max - outputs[label];
            let grad = exps
                .iter()
                .enumerate()
                .map(|(j, e)| e / sum - f64::from(u8::from(j == label)))
                .collect();
            Ok((value, grad))
        }
        LossSpec::MeanSquaredError => {
            let scale = 1.0 / k as f64;
            let mut value = 0.0;
            let grad = outputs
                .iter()
                .enumerate()
                .map(|(j, &z)| {
                    let r = z - target_value(target, j);
                    value += r * r;
                    2.0 * r * scale
                })
                .collect();
            Ok((value * scale, grad))
        }
    }
}

pub fn loss_value(outputs: &[f64], target: Target<'_>, loss: LossSpec) -> Result<f64> {
    loss_and_output_grad(outputs, target, loss).map(|(v, _)| v)
}

/// Loss at `(x, target)` and its gradient with respect to every weight.
pub fn loss_and_gradient(
    arch: &Architecture,
    w: &[f64],
    sample: Sample<'_>,
    loss: LossSpec,
) -> Result<(f64, Vec<f64>)> {
    let trace = forward(arch, w, sample.x)?;
    let (value, mut upstream) = loss_and_output_grad(&trace.outputs, sample.target, loss)?;
    let mut grad = vec![0.0; arch.num_edges()];
    for l in (1..=arch.depth()).rev() {
        let fan_in = arch.width(l - 1);
        let base = arch.layer_offset(l);
        let prev = &trace.node_values[l - 1];
        let mut down = vec![0.0; fan_in];
        for (dst, &g) in upstream.iter().enumerate() {
            let row = base + dst * fan_in;
            for src in 0..fan_in {
                grad[row + src] = g * prev[src];
                down[src] += w[row + src] * g;
            }
        }
        if l > 1 {
            let pre = &trace.pre_activations[l - 2];
            for (d, &z) in down.iter_mut().zip(pre) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        upstream = down;
    }
    Ok((value, grad))
}

pub fn backward(
    arch: &Architecture,
    w: &[f64],
    sample: Sample<'_>,
    loss: LossSpec,
) -> Result<Vec<f64>> {
    loss_and_gradient(arch, w, sample, loss).map(|(_, g)| g)
}

/// Mean loss and mean gradient over a batch, reduced in batch order.
pub fn batch_loss_and_gradient(
    arch: &Architecture,
    w: &[f64],
    batch: &[Sample<'_>],
    loss: LossSpec,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    let mut acc = vec![0.0; arch.num_edges()];
    for s in batch {
        let (v, g) = loss_and_gradient(arch, w, *s, loss)?;
        total += v;
        for (a, gi) in acc.iter_mut().zip(&g) {
            *a += gi;
        }
    }
    let n = batch.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok((total / n, acc))
}

pub fn batch_gradient(
    arch: &Architecture,
    w: &[f64],
    batch: &[Sample<'_>],
    loss: LossSpec,
) -> Result<Vec<f64>> {
    batch_loss_and_gradient(arch, w, batch, loss).map(|(_, g)| g)
}

/// Mean loss over a batch.
pub fn batch_loss(
    arch: &Architecture,
    w: &[f64],
    batch: &[Sample<'_>],
    loss: LossSpec,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for s in batch {
        let trace = forward(arch, w, s.x)?;
        total += loss_value(&trace.outputs, s.target, loss)?;
    }
    Ok(total / batch.len() as f64)
}

/// Index of the largest output; ties go to the lowest index.
pub fn argmax(outputs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in outputs.iter().enumerate() {
        if z > outputs[best] {
            best = i;
        }
    }
    best
}
