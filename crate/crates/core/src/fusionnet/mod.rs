//! Hybrid-fusion emotion classifier.
//!
//! Six branch networks (a deeper "pre-trained-like" and a shallower "simple"
//! stack per modality) feed pair-level [`WeightedAddLayer`]s that combine a
//! deeper branch with a simpler branch of another modality. Each pair has its
//! own classification head; the head outputs are fused by a final weighted
//! addition and a dense layer of width four.

mod data;
mod loss;
mod params;
mod tape;
mod topology;
mod train;

pub use data::{synthetic_dataset, SyntheticConfig};
pub use loss::{loss, FOCAL_GAMMA, PROB_EPSILON};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{NodeId, Tape};
pub use topology::{BranchKind, FusionConfig, FusionNet, FusionOutput, Variant};
pub use train::{
    evaluate, train, train_with_observer, EpochRecord, Evaluation, Optimizer, TrainConfig,
    TrainReport,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Numerically stable softmax.
pub fn softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Learnable convex combination of `m` equal-shape inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAddLayer {
    raw_weights: Vec<f64>,
}

impl WeightedAddLayer {
    pub fn new(raw_weights: Vec<f64>) -> Result<Self> {
        if raw_weights.is_empty() {
            return Err(Error::Config("weighted add needs at least one weight".into()));
        }
        if raw_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("weighted add raw weights".into()));
        }
        Ok(WeightedAddLayer { raw_weights })
    }

    pub fn raw_weights(&self) -> &[f64] {
        &self.raw_weights
    }

    pub fn effective_weights(&self) -> Vec<f64> {
        softmax(&self.raw_weights)
    }
}

/// `Σ_j softmax(raw)_j · input_j`.
pub fn weighted_add(inputs: &[Tensor], layer: &WeightedAddLayer) -> Result<Tensor> {
    if inputs.is_empty() {
        return Err(Error::Config("weighted add needs at least one input".into()));
    }
    if inputs.len() != layer.raw_weights.len() {
        return Err(Error::shape(
            "weighted add summand count",
            layer.raw_weights.len(),
            inputs.len(),
        ));
    }
    let shape = inputs[0].shape();
    if let Some(bad) = inputs.iter().find(|t| t.shape() != shape) {
        return Err(Error::shape("weighted add input", shape, bad.shape()));
    }
    let mut out = Tensor::zeros(shape);
    for (t, a) in inputs.iter().zip(layer.effective_weights()) {
        for (o, x) in out.data_mut().iter_mut().zip(t.data()) {
            *o += a * x;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn equal_raws_average() {
        let layer = WeightedAddLayer::new(vec![0.0, 0.0]).unwrap();
        let out = weighted_add(&[t(&[1.0, 2.0]), t(&[3.0, 6.0])], &layer).unwrap();
        assert_eq!(out.data(), &[2.0, 4.0]);
    }

    #[test]
    fn single_input_passes_through() {
        let layer = WeightedAddLayer::new(vec![-7.3]).unwrap();
        let x = t(&[0.1, -2.0, 5.5]);
        assert_eq!(weighted_add(&[x.clone()], &layer).unwrap(), x);
    }

    #[test]
    fn log_raws_give_quarter_three_quarters() {
        let layer = WeightedAddLayer::new(vec![1f64.ln(), 3f64.ln()]).unwrap();
        let w = layer.effective_weights();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
        let out = weighted_add(&[t(&[4.0]), t(&[8.0])], &layer).unwrap();
        assert!((out.data()[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn mismatches_are_errors() {
        let layer = WeightedAddLayer::new(vec![0.0, 0.0]).unwrap();
        assert!(weighted_add(&[t(&[1.0])], &layer).is_err());
        assert!(weighted_add(&[t(&[1.0]), t(&[1.0, 2.0])], &layer).is_err());
        assert!(weighted_add(&[], &layer).is_err());
    }

    #[test]
    fn effective_weights_sum_to_one_for_extreme_raws() {
        let layer = WeightedAddLayer::new(vec![700.0, -700.0, 0.0]).unwrap();
        let w = layer.effective_weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}
