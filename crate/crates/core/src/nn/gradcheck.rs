//! Central finite-difference verification of analytic gradients.

use super::layer::{softmax_rows, LayerKind, Mode};
use super::loss::cross_entropy_loss_and_grad;
use super::network::{Network, Trace};
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error over all trainable parameters.
    pub max_param_error: f64,
    /// Worst relative error over the input entries.
    pub max_input_error: f64,
    pub params_checked: usize,
    /// Coordinates left out because the difference stencil moved a ReLU
    /// input across zero, where the derivative does not exist.
    pub kinks_skipped: usize,
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Fourth-order central difference with outer step `h`:
/// `(f(-h) - 8 f(-h/2) + 8 f(h/2) - f(h)) / (6 h)`.
pub fn central_difference(h: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let a = f(-h)?;
    let b = f(-h / 2.0)?;
    let c = f(h / 2.0)?;
    let d = f(h)?;
    // differences first, so a flat function gives exactly zero
    Ok((8.0 * (c - b) - (d - a)) / (6.0 * h))
}

/// Scalar function of the network output used by the check.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Batch cross-entropy. The output is taken as a posterior when the last
    /// layer is a softmax, otherwise as logits.
    CrossEntropy(&'a [usize]),
    /// `sum(c * output)` for a fixed tensor `c` of the output's shape.
    Linear(&'a Tensor2),
}

impl Objective<'_> {
    /// Objective value and the sign pattern of every ReLU input.
    fn eval(&self, net: &Network, input: &Tensor2) -> Result<(f64, Vec<bool>)> {
        let trace = net.forward(input, Mode::Train)?;
        let pattern = relu_pattern(net, &trace);
        let value = match self {
            Objective::CrossEntropy(targets) => {
                let posterior = if net.ends_with_softmax() {
                    trace.output().clone()
                } else {
                    softmax_rows(trace.output())
                };
                cross_entropy_loss_and_grad(&posterior, targets)?.loss
            }
            Objective::Linear(c) => {
                trace.output().check_same_shape(c)?;
                trace
                    .output()
                    .data()
                    .iter()
                    .zip(c.data())
                    .map(|(a, b)| a * b)
                    .sum()
            }
        };
        Ok((value, pattern))
    }
}

/// Sign of every ReLU input in `trace`.
pub(crate) fn relu_pattern(net: &Network, trace: &Trace) -> Vec<bool> {
    net.layers()
        .iter()
        .zip(trace.activations())
        .filter(|(l, _)| l.kind() == LayerKind::Relu)
        .flat_map(|(_, a)| a.data().iter().map(|&v| v > 0.0))
        .collect()
}

fn analytic(
    net: &Network,
    input: &Tensor2,
    objective: Objective,
) -> Result<(Vec<Vec<f64>>, Tensor2)> {
    let trace = net.forward(input, Mode::Train)?;
    let (grads, dx) = match objective {
        Objective::CrossEntropy(targets) if net.ends_with_softmax() => {
            let ce = cross_entropy_loss_and_grad(trace.output(), targets)?;
            net.backward_from_logits(&trace, &ce.logit_grad)?
        }
        Objective::CrossEntropy(targets) => {
            let ce = cross_entropy_loss_and_grad(&softmax_rows(trace.output()), targets)?;
            net.backward(&trace, &ce.logit_grad)?
        }
        Objective::Linear(c) => net.backward(&trace, c)?,
    };
    let blocks = grads
        .layers
        .into_iter()
        .flatten()
        .flat_map(|g| [g.weights, g.bias])
        .collect();
    Ok((blocks, dx))
}

/// Stencil derivative, or `None` when the ReLU pattern is not constant
/// over the stencil.
pub(crate) fn stencil(
    h: f64,
    base: &[bool],
    mut f: impl FnMut(f64) -> Result<(f64, Vec<bool>)>,
) -> Result<Option<f64>> {
    let mut smooth = true;
    let numeric = central_difference(h, |d| {
        let (v, p) = f(d)?;
        smooth &= p == base;
        Ok(v)
    })?;
    Ok(smooth.then_some(numeric))
}

/// Compares backpropagated gradients with central differences of the
/// batch cross-entropy. Normalization layers use batch statistics and their
/// running scale is never updated here.
pub fn finite_difference_check(
    net: &Network,
    input: &Tensor2,
    targets: &[usize],
    perturbation: f64,
) -> Result<GradCheckReport> {
    finite_difference_check_with(net, input, Objective::CrossEntropy(targets), perturbation)
}

pub fn finite_difference_check_with(
    net: &Network,
    input: &Tensor2,
    objective: Objective,
    perturbation: f64,
) -> Result<GradCheckReport> {
    if !(perturbation > 0.0) {
        return Err(Error::usage("perturbation must be positive"));
    }
    let (blocks, dx) = analytic(net, input, objective)?;
    let (_, base) = objective.eval(net, input)?;

    let mut probe = net.clone();
    let mut max_param_error: f64 = 0.0;
    let mut params_checked = 0;
    let mut kinks_skipped = 0;
    for (b, block) in blocks.iter().enumerate() {
        for (i, &a) in block.iter().enumerate() {
            let orig = probe.param_blocks()[b][i];
            let numeric = stencil(perturbation, &base, |d| {
                probe.param_blocks_mut()[b][i] = orig + d;
                objective.eval(&probe, input)
            })?;
            probe.param_blocks_mut()[b][i] = orig;
            match numeric {
                Some(n) => {
                    max_param_error = max_param_error.max(relative_error(a, n));
                    params_checked += 1;
                }
                None => kinks_skipped += 1,
            }
        }
    }

    let mut x = input.clone();
    let mut max_input_error: f64 = 0.0;
    for i in 0..x.data().len() {
        let orig = x.data()[i];
        let numeric = stencil(perturbation, &base, |d| {
            x.data_mut()[i] = orig + d;
            objective.eval(net, &x)
        })?;
        x.data_mut()[i] = orig;
        match numeric {
            Some(n) => max_input_error = max_input_error.max(relative_error(dx.data()[i], n)),
            None => kinks_skipped += 1,
        }
    }

    Ok(GradCheckReport {
        max_param_error,
        max_input_error,
        params_checked,
        kinks_skipped,
    })
}
