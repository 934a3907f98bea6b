//! Average of categorical cross-entropy and categorical focal loss.

use crate::error::{Error, Result};
use crate::predictor::{ClassProbs, Emotion, NUM_CLASSES};

/// Focusing exponent of the focal term (α = 1).
pub const FOCAL_GAMMA: f64 = 2.0;

/// Probabilities are clamped to this value before the logarithm.
pub const PROB_EPSILON: f64 = 1e-12;

/// `0.5·CE + 0.5·(1 − p_t)^γ·CE` with `CE = −ln p_t`.
pub fn loss(pred: &ClassProbs, target: usize) -> Result<f64> {
    Emotion::from_index(target)?;
    if !pred.is_distribution(1e-9) {
        return Err(Error::Config(format!("{:?} is not a probability vector", pred.values())));
    }
    Ok(loss_at(pred.get(target)))
}

fn loss_at(p_target: f64) -> f64 {
    let ce = -p_target.max(PROB_EPSILON).ln();
    0.5 * ce + 0.5 * (1.0 - p_target).powf(FOCAL_GAMMA) * ce
}

/// Loss for a logit vector plus its gradient with respect to the logits.
pub(crate) fn loss_from_logits(
    logits: &[f64; NUM_CLASSES],
    target: usize,
) -> (f64, [f64; NUM_CLASSES], ClassProbs) {
    let p = ClassProbs::softmax(logits);
    let pt = p.get(target);
    let ce = -pt.max(PROB_EPSILON).ln();
    let one_minus = 1.0 - pt;
    // g = pt · ∂L/∂pt; the 1/pt of ∂CE/∂pt cancels against pt.
    let g = if pt > PROB_EPSILON {
        -0.5 + 0.5 * (-FOCAL_GAMMA * one_minus.powf(FOCAL_GAMMA - 1.0) * ce * pt - one_minus.powf(FOCAL_GAMMA))
    } else {
        0.5 * (-FOCAL_GAMMA * one_minus.powf(FOCAL_GAMMA - 1.0) * ce * pt)
    };
    let mut grad = [0.0; NUM_CLASSES];
    for (j, gj) in grad.iter_mut().enumerate() {
        let delta = if j == target { 1.0 } else { 0.0 };
        *gj = g * (delta - p.get(j));
    }
    (loss_at(pt), grad, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        for t in 0..4 {
            let mut p = [0.0; 4];
            p[t] = 1.0;
            assert_eq!(loss(&ClassProbs(p), t).unwrap(), 0.0);
        }
    }

    #[test]
    fn uniform_prediction_closed_form() {
        let expected = 0.5 * 4f64.ln() + 0.5 * 0.75f64.powi(2) * 4f64.ln();
        for t in 0..4 {
            let l = loss(&ClassProbs::UNIFORM, t).unwrap();
            assert!((l - expected).abs() < 1e-15, "{l} vs {expected}");
        }
    }

    #[test]
    fn monotone_in_target_probability() {
        let mut prev = f64::INFINITY;
        for i in 1..=100 {
            let pt = i as f64 / 100.0;
            let rest = (1.0 - pt) / 3.0;
            let l = loss(&ClassProbs([rest, pt, rest, rest]), 1).unwrap();
            assert!(l >= 0.0);
            assert!(l < prev, "loss not decreasing at pt={pt}");
            prev = l;
        }
    }

    #[test]
    fn zero_target_probability_is_clamped() {
        let l = loss(&ClassProbs([1.0, 0.0, 0.0, 0.0]), 2).unwrap();
        let ce = -(1e-12f64).ln();
        assert!((l - ce).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(loss(&ClassProbs::UNIFORM, 4).is_err());
        assert!(loss(&ClassProbs([0.5, 0.6, 0.0, 0.0]), 0).is_err());
    }

    #[test]
    fn logit_gradient_matches_central_differences() {
        let z = [0.3, -1.2, 0.8, 0.05];
        for t in 0..4 {
            let (_, g, _) = loss_from_logits(&z, t);
            for j in 0..4 {
                let h = 1e-6;
                let mut zp = z;
                let mut zm = z;
                zp[j] += h;
                zm[j] -= h;
                let fd = (loss_from_logits(&zp, t).0 - loss_from_logits(&zm, t).0) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-8, "t={t} j={j}: {fd} vs {}", g[j]);
            }
        }
    }
}
