use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::layer::sigmoid;
use super::NeuralError;

/// Probability floor used by the categorical cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Mean over all elements of `softplus(z) - t·z`; inputs are logits.
    SigmoidCrossEntropyWithLogits,
    /// Mean over rows of `-Σ t·ln p`; inputs are probabilities.
    CategoricalCrossEntropy,
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn check_shapes(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<(), NeuralError> {
    if a.dim() != b.dim() {
        return Err(NeuralError::ShapeMismatch {
            context: "loss targets".into(),
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Loss value and its gradient w.r.t. `inputs` (logits or probabilities,
/// depending on `kind`).
pub fn loss_value_and_grad(kind: LossKind, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array2<f64>), NeuralError> {
    check_shapes(&inputs, &targets)?;
    if inputs.is_empty() {
        return Err(NeuralError::InvalidTargets("empty batch".into()));
    }
    match kind {
        LossKind::SigmoidCrossEntropyWithLogits => {
            if let Some(t) = targets.iter().find(|&&t| t != 0.0 && t != 1.0) {
                return Err(NeuralError::InvalidTargets(format!("binary target {t} not in {{0,1}}")));
            }
            let n = inputs.len() as f64;
            let mut total = 0.0;
            let mut grad = Array2::zeros(inputs.raw_dim());
            Zip::from(&mut grad).and(&inputs).and(&targets).for_each(|g, &z, &t| {
                total += softplus(z) - t * z;
                *g = (sigmoid(z) - t) / n;
            });
            Ok((total / n, grad))
        }
        LossKind::CategoricalCrossEntropy => {
            validate_one_hot(&targets)?;
            let batch = inputs.nrows() as f64;
            let mut total = 0.0;
            let mut grad = Array2::zeros(inputs.raw_dim());
            Zip::from(&mut grad).and(&inputs).and(&targets).for_each(|g, &p, &t| {
                if t != 0.0 {
                    let clamped = p.clamp(PROB_FLOOR, 1.0);
                    total -= t * clamped.ln();
                    // derivative vanishes where the clamp is active
                    *g = if p > PROB_FLOOR && p <= 1.0 { -t / (clamped * batch) } else { 0.0 };
                }
            });
            Ok((total / batch, grad))
        }
    }
}

/// Gradient of the mean categorical cross-entropy w.r.t. the softmax
/// pre-activation: `(p - t) / B`.
pub fn softmax_cross_entropy_fused_grad(probs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
    check_shapes(&probs, &targets)?;
    validate_one_hot(&targets)?;
    let batch = probs.nrows() as f64;
    Ok((&probs - &targets) / batch)
}

fn validate_one_hot(targets: &ArrayView2<f64>) -> Result<(), NeuralError> {
    for (i, row) in targets.rows().into_iter().enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(NeuralError::InvalidTargets(format!("row {i} is not one-hot")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_logit_positive_target_costs_ln2() {
        let (loss, grad) = loss_value_and_grad(
            LossKind::SigmoidCrossEntropyWithLogits,
            array![[0.0, 0.0]].view(),
            array![[1.0, 1.0]].view(),
        )
        .unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((grad[[0, 0]] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn perfect_one_hot_prediction_has_negligible_loss() {
        let p = array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let (loss, _) = loss_value_and_grad(LossKind::CategoricalCrossEntropy, p.view(), p.view()).unwrap();
        assert!(loss <= 1e-10);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        // reference values: softplus(100) - 100 = ln(1 + e^-100) ≈ 3.72e-44,
        // softplus(-100) + 0 ≈ 3.72e-44, softplus(100) = 100 + 3.72e-44
        let z = array![[100.0, -100.0, 100.0, -100.0]];
        let t = array![[1.0, 0.0, 0.0, 1.0]];
        let (loss, grad) = loss_value_and_grad(LossKind::SigmoidCrossEntropyWithLogits, z.view(), t.view()).unwrap();
        assert!(loss.is_finite());
        assert!((loss - 50.0).abs() < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
        assert!((softplus(-100.0) - 3.720075976020836e-44).abs() < 1e-57);
    }

    #[test]
    fn invalid_targets_rejected() {
        let z = array![[0.0]];
        assert!(loss_value_and_grad(LossKind::SigmoidCrossEntropyWithLogits, z.view(), array![[0.5]].view()).is_err());
        let p = array![[0.5, 0.5]];
        assert!(loss_value_and_grad(LossKind::CategoricalCrossEntropy, p.view(), array![[1.0, 1.0]].view()).is_err());
        assert!(loss_value_and_grad(LossKind::CategoricalCrossEntropy, p.view(), array![[1.0, 0.0, 0.0]].view()).is_err());
    }
}
