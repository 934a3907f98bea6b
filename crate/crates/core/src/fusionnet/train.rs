//! Mini-batch training loop with early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{ModalityMask, MultimodalSample, Predictor};

use super::params::Gradients;
use super::topology::FusionNet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// Epochs without improvement of the monitored loss before stopping.
    pub patience: Option<usize>,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: 1e-4,
            batch_size: 64,
            optimizer: Optimizer::Sgd,
            patience: Some(5),
            seed: 0,
        }
    }
}

/// One line of the training report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    pub effective_weights: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub steps: usize,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.accuracy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean loss and accuracy with the given modalities present.
pub fn evaluate(net: &FusionNet, data: &[MultimodalSample], mask: ModalityMask) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Config("empty evaluation set".into()));
    }
    let results: Vec<(f64, bool)> = data
        .par_iter()
        .map(|s| {
            let target = s.label().ok_or_else(|| Error::Config("sample without label".into()))?;
            let p = net.predict_masked(s, mask)?;
            Ok((super::loss(&p, target)?, p.argmax() == target))
        })
        .collect::<Result<_>>()?;
    let n = data.len() as f64;
    Ok(Evaluation {
        loss: results.iter().map(|r| r.0).sum::<f64>() / n,
        accuracy: results.iter().filter(|r| r.1).count() as f64 / n,
    })
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    t: i32,
}

/// Trains `net` in place.
pub fn train(
    net: &mut FusionNet,
    data: &[MultimodalSample],
    validation: Option<&[MultimodalSample]>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    train_with_observer(net, data, validation, config, |_, _| Ok(()))
}

/// Like [`train`], calling `observer(net, step)` after every parameter update.
pub fn train_with_observer(
    net: &mut FusionNet,
    data: &[MultimodalSample],
    validation: Option<&[MultimodalSample]>,
    config: &TrainConfig,
    mut observer: impl FnMut(&FusionNet, usize) -> Result<()>,
) -> Result<TrainReport> {
    if config.epochs == 0 {
        return Err(Error::Config("epochs must be positive".into()));
    }
    if !config.lr.is_finite() || config.lr < 0.0 {
        return Err(Error::Config(format!("learning rate {} must be finite and non-negative", config.lr)));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if let Some(v) = validation {
        if v.is_empty() {
            return Err(Error::Config("empty validation set".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam = AdamState {
        m: net.params().zero_gradients(),
        v: net.params().zero_gradients(),
        t: 0,
    };
    let mut report = TrainReport {
        epochs: Vec::new(),
        stopped_early: false,
        steps: 0,
    };
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<MultimodalSample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (_, grads) = net.gradients(&batch)?;
            apply_update(net, &grads, config, &mut adam)?;
            report.steps += 1;
            observer(net, report.steps)?;
        }

        let train_eval = evaluate(net, data, ModalityMask::ALL)?;
        if !train_eval.loss.is_finite() {
            return Err(Error::Numeric(format!("training loss at epoch {epoch}")));
        }
        let val_loss = validation
            .map(|v| evaluate(net, v, ModalityMask::ALL).map(|e| e.loss))
            .transpose()?;
        report.epochs.push(EpochRecord {
            epoch,
            loss: train_eval.loss,
            accuracy: train_eval.accuracy,
            val_loss,
            effective_weights: net.effective_weights(),
        });
        log::debug!("epoch {epoch}: loss {:.6} acc {:.4}", train_eval.loss, train_eval.accuracy);

        if let Some(patience) = config.patience {
            let monitored = val_loss.unwrap_or(train_eval.loss);
            if monitored < best {
                best = monitored;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(report)
}

fn apply_update(net: &mut FusionNet, grads: &Gradients, config: &TrainConfig, adam: &mut AdamState) -> Result<()> {
    let lr = config.lr;
    let ids: Vec<_> = net.params().ids().collect();
    match config.optimizer {
        Optimizer::Sgd => {
            for id in ids {
                let g = grads.get(id);
                for (p, gi) in net.params_mut().get_mut(id).data_mut().iter_mut().zip(g) {
                    *p -= lr * gi;
                }
            }
        }
        Optimizer::Adam { beta1, beta2, epsilon } => {
            adam.t += 1;
            let c1 = 1.0 - beta1.powi(adam.t);
            let c2 = 1.0 - beta2.powi(adam.t);
            for id in ids {
                let g = grads.get(id);
                let m = adam.m.get_mut(id);
                for (mi, gi) in m.iter_mut().zip(g) {
                    *mi = beta1 * *mi + (1.0 - beta1) * gi;
                }
                let v = adam.v.get_mut(id);
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                }
                let (m, v) = (adam.m.get(id), adam.v.get(id));
                for ((p, mi), vi) in net.params_mut().get_mut(id).data_mut().iter_mut().zip(m).zip(v) {
                    *p -= lr * (mi / c1) / ((vi / c2).sqrt() + epsilon);
                }
            }
        }
    }
    for id in net.params().ids() {
        if net.params().get(id).data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter {}", net.params().name(id))));
        }
    }
    Ok(())
}
