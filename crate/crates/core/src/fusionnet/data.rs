//! Seeded synthetic multimodal classification data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{MultimodalSample, NUM_CLASSES};
use crate::tensor::Tensor;

/// Each class owns a prototype per modality. A sample copies its class
/// prototypes with additive noise; independently per modality, with
/// probability `dropout`, that modality is replaced by class-free noise. Any
/// single modality is therefore an unreliable cue while the three together
/// almost always identify the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub samples: usize,
    pub image_shape: [usize; 3],
    pub speech_shape: [usize; 2],
    pub text_len: usize,
    pub vocab: usize,
    pub noise: f64,
    pub dropout: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            samples: 500,
            image_shape: [16, 16, 3],
            speech_shape: [16, 16],
            text_len: 8,
            vocab: 32,
            noise: 0.15,
            dropout: 0.3,
        }
    }
}

struct Prototypes {
    image: Vec<Vec<f64>>,
    speech: Vec<Vec<f64>>,
}

/// Generates `config.samples` labelled samples, classes assigned round-robin.
///
/// Prototypes depend only on `seed`, so two calls differing only in
/// `samples` share the same class structure.
pub fn synthetic_dataset(config: &SyntheticConfig) -> Result<Vec<MultimodalSample>> {
    if config.vocab < NUM_CLASSES + 1 {
        return Err(Error::Config(format!("vocab must be at least {}", NUM_CLASSES + 1)));
    }
    if !(0.0..=1.0).contains(&config.dropout) || config.noise < 0.0 {
        return Err(Error::Config("dropout must lie in [0, 1] and noise be non-negative".into()));
    }
    let n_img: usize = config.image_shape.iter().product();
    let n_sp: usize = config.speech_shape.iter().product();
    let mut proto_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let protos = Prototypes {
        image: (0..NUM_CLASSES)
            .map(|_| (0..n_img).map(|_| proto_rng.gen_range(0.2..0.8)).collect())
            .collect(),
        speech: (0..NUM_CLASSES)
            .map(|_| (0..n_sp).map(|_| proto_rng.gen_range(-1.0..1.0)).collect())
            .collect(),
    };
    // Non-pad tokens 1..vocab are split into one band per class.
    let band = (config.vocab - 1) / NUM_CLASSES;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
    let mut out = Vec::with_capacity(config.samples);
    for i in 0..config.samples {
        let class = i % NUM_CLASSES;
        let image: Vec<f64> = if rng.gen_bool(config.dropout) {
            (0..n_img).map(|_| rng.gen_range(0.0..1.0)).collect()
        } else {
            protos.image[class]
                .iter()
                .map(|p| (p + rng.gen_range(-config.noise..=config.noise)).clamp(0.0, 1.0))
                .collect()
        };
        let speech: Vec<f64> = if rng.gen_bool(config.dropout) {
            (0..n_sp).map(|_| rng.gen_range(-1.0..1.0)).collect()
        } else {
            protos.speech[class]
                .iter()
                .map(|p| p + rng.gen_range(-config.noise..=config.noise))
                .collect()
        };
        let text: Vec<usize> = if rng.gen_bool(config.dropout) {
            (0..config.text_len).map(|_| rng.gen_range(1..config.vocab)).collect()
        } else {
            (0..config.text_len)
                .map(|_| 1 + class * band + rng.gen_range(0..band))
                .collect()
        };
        out.push(MultimodalSample::new(
            Tensor::new(config.image_shape.to_vec(), image)?,
            Tensor::new(config.speech_shape.to_vec(), speech)?,
            text,
            Some(class),
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let cfg = SyntheticConfig {
            samples: 40,
            ..Default::default()
        };
        let a = synthetic_dataset(&cfg).unwrap();
        assert_eq!(a, synthetic_dataset(&cfg).unwrap());
        for c in 0..4 {
            assert_eq!(a.iter().filter(|s| s.label() == Some(c)).count(), 10);
        }
        assert!(a.iter().all(|s| s.text().iter().all(|&t| t >= 1 && t < cfg.vocab)));
    }

    #[test]
    fn rejects_tiny_vocab() {
        let cfg = SyntheticConfig {
            vocab: 4,
            ..Default::default()
        };
        assert!(synthetic_dataset(&cfg).is_err());
    }
}
