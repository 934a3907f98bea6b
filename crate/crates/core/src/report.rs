//! Full three-modality explanation of one prediction and its file formats.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::fmt_f64;
use crate::kaap::{
    kaap_map_with, modality_importance_with, select_target, AttributionMap, KaapOptions,
    DEFAULT_K_IMAGE, DEFAULT_K_SPEECH, DEFAULT_K_TEXT,
};
use crate::predictor::{ClassProbs, Modality, MultimodalSample, Predictor};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplainConfig {
    pub k_image: usize,
    pub k_speech: usize,
    pub k_text: usize,
    pub target_override: Option<usize>,
    pub options: KaapOptions,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            k_image: DEFAULT_K_IMAGE,
            k_speech: DEFAULT_K_SPEECH,
            k_text: DEFAULT_K_TEXT,
            target_override: None,
            options: KaapOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerModality<T> {
    pub image: T,
    pub speech: T,
    pub text: T,
}

impl<T: Copy> PerModality<T> {
    pub fn get(&self, m: Modality) -> T {
        match m {
            Modality::Image => self.image,
            Modality::Speech => self.speech,
            Modality::Text => self.text,
        }
    }
}

/// Serialized explanation of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub target_class: usize,
    pub prediction: ClassProbs,
    pub modality_importance: PerModality<f64>,
    pub image_map: Tensor,
    pub speech_map: Vec<f64>,
    pub text_map: Vec<f64>,
    pub k: PerModality<usize>,
    pub normalized: PerModality<bool>,
}

/// Modality importance plus a KAAP map for each modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub prediction: ClassProbs,
    pub importance: crate::kaap::ModalityImportance,
    pub image: AttributionMap,
    pub speech: AttributionMap,
    pub text: AttributionMap,
}

impl Explanation {
    pub fn report(&self) -> Result<AttributionReport> {
        Ok(AttributionReport {
            target_class: self.importance.target_class,
            prediction: self.prediction,
            modality_importance: PerModality {
                image: self.importance.upsilon,
                speech: self.importance.delta,
                text: self.importance.tau,
            },
            image_map: Tensor::new(self.image.shape.clone(), self.image.values.clone())?,
            speech_map: self.speech.values.clone(),
            text_map: self.text.values.clone(),
            k: PerModality {
                image: self.image.k,
                speech: self.speech.k,
                text: self.text.k,
            },
            normalized: PerModality {
                image: self.image.normalized,
                speech: self.speech.normalized,
                text: self.text.normalized,
            },
        })
    }
}

/// Explains the model's prediction (or the overridden class) for `sample`.
pub fn explain<P: Predictor + ?Sized>(model: &P, sample: &MultimodalSample, config: &ExplainConfig) -> Result<Explanation> {
    let prediction = model.predict(sample)?;
    let target = select_target(&prediction, config.target_override)?;
    let importance = modality_importance_with(model, sample, target, config.options)?;
    let map = |m: Modality, k: usize| kaap_map_with(model, sample, m, k, target, config.options);
    Ok(Explanation {
        prediction,
        importance,
        image: map(Modality::Image, config.k_image)?,
        speech: map(Modality::Speech, config.k_speech)?,
        text: map(Modality::Text, config.k_text)?,
    })
}

/// Writes a binary greyscale PGM (P5, maxval 255), min-max scaling `values`
/// (row-major, `width × height`). A constant map renders black.
pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::shape("heatmap", width * height, values.len()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let pixels: Vec<u8> = values
        .iter()
        .map(|v| if range > 0.0 { ((v - min) / range * 255.0).round() as u8 } else { 0 })
        .collect();
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(&pixels)?;
    Ok(())
}

/// `position,token,value` listing of a text map.
pub fn write_text_attribution<W: Write>(w: W, tokens: &[usize], map: &AttributionMap) -> Result<()> {
    if tokens.len() != map.values.len() {
        return Err(Error::shape("text attribution", tokens.len(), map.values.len()));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    w.write_record(["position", "token", "value"])?;
    for (i, (t, v)) in tokens.iter().zip(&map.values).enumerate() {
        w.write_record([i.to_string(), t.to_string(), fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::ConstantModel;

    #[test]
    fn pgm_scaling() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, 2, 1, &[-1.0, 3.0]).unwrap();
        assert_eq!(buf, b"P5\n2 1\n255\n\x00\xff");
        let mut flat = Vec::new();
        write_pgm(&mut flat, 1, 2, &[0.5, 0.5]).unwrap();
        assert_eq!(&flat[flat.len() - 2..], &[0, 0]);
        assert!(write_pgm(Vec::new(), 2, 2, &[0.0]).is_err());
    }

    #[test]
    fn constant_model_report() {
        let s = MultimodalSample::new(Tensor::filled(&[4, 4, 3], 0.3), Tensor::filled(&[4, 4], 1.0), vec![1, 2, 3], None).unwrap();
        let e = explain(&ConstantModel::uniform(), &s, &ExplainConfig::default()).unwrap();
        let r = e.report().unwrap();
        assert_eq!(r.target_class, 0);
        assert_eq!(r.k, PerModality { image: 4, speech: 4, text: 3 });
        assert_eq!(r.modality_importance, PerModality { image: 0.0, speech: 0.0, text: 0.0 });
        assert!(r.image_map.is_zero() && r.speech_map.iter().all(|&v| v == 0.0));
        assert!(!r.normalized.image && !r.normalized.text);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["image_map"]["shape"], serde_json::json!([4, 4]));
        assert_eq!(json["k"]["text"], 3);
    }
}
