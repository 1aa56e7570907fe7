use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Smallest probability fed to the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropy {
    /// Mean of `-ln(posterior[target])` over the batch.
    pub loss: f64,
    /// Gradient w.r.t. the pre-softmax logits: `(posterior - onehot) / batch`.
    pub logit_grad: Tensor2,
    /// Rows whose target probability had to be clamped to [`PROB_FLOOR`].
    pub saturated: usize,
}

/// Categorical cross-entropy of softmax posteriors against message indices,
/// fused with the softmax so the gradient is taken w.r.t. the logits.
pub fn cross_entropy_loss_and_grad(posterior: &Tensor2, targets: &[usize]) -> Result<CrossEntropy> {
    if posterior.rows() != targets.len() {
        return Err(Error::usage(format!(
            "{} posterior rows but {} targets",
            posterior.rows(),
            targets.len()
        )));
    }
    let width = posterior.cols();
    let batch = posterior.rows() as f64;
    let mut grad = posterior.clone();
    let mut total = 0.0;
    let mut saturated = 0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= width {
            return Err(Error::usage(format!(
                "target {t} out of range for width {width}"
            )));
        }
        let row_sum: f64 = posterior.row(r).iter().sum();
        if (row_sum - 1.0).abs() > 1e-6 {
            return Err(Error::usage(format!("posterior row {r} sums to {row_sum}")));
        }
        let p = posterior.get(r, t);
        if p <= PROB_FLOOR {
            saturated += 1;
        }
        total -= p.max(PROB_FLOOR).ln();
        let row = grad.row_mut(r);
        row[t] -= 1.0;
        row.iter_mut().for_each(|v| *v /= batch);
    }
    Ok(CrossEntropy {
        loss: total / batch,
        logit_grad: grad,
        saturated,
    })
}
