//! Black-box prediction interface consumed by the attribution engine.
//!
//! A [`Predictor`] maps a [`MultimodalSample`] (image, speech spectrogram and
//! token sequence) to four per-class scores. Probability-mode models return a
//! distribution; oracle models may return arbitrary real scores, since every
//! attribution quantity is built from differences of outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of emotion classes.
pub const NUM_CLASSES: usize = 4;

/// Token index used for padding; an excluded text modality is all padding.
pub const PAD_TOKEN: usize = 0;

/// Emotion classes in index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Angry = 0,
    Happy = 1,
    Hate = 2,
    Sad = 3,
}

impl Emotion {
    pub const ALL: [Emotion; NUM_CLASSES] =
        [Emotion::Angry, Emotion::Happy, Emotion::Hate, Emotion::Sad];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Emotion::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::OutOfBounds(format!("class index {index} not in 0..{NUM_CLASSES}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Angry => "angry",
            Emotion::Happy => "happy",
            Emotion::Hate => "hate",
            Emotion::Sad => "sad",
        }
    }
}

impl std::fmt::Display for Emotion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-class scores, one entry per [`Emotion`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassProbs(pub [f64; NUM_CLASSES]);

impl ClassProbs {
    pub const UNIFORM: ClassProbs = ClassProbs([0.25; NUM_CLASSES]);

    pub fn values(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Entries in `[0, 1]` summing to one within `tol`.
    pub fn is_distribution(&self, tol: f64) -> bool {
        self.0.iter().all(|&p| (0.0..=1.0).contains(&p))
            && (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Numerically stable softmax of raw scores.
    pub fn softmax(logits: &[f64; NUM_CLASSES]) -> ClassProbs {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out = [0.0; NUM_CLASSES];
        let mut sum = 0.0;
        for (o, &z) in out.iter_mut().zip(logits) {
            *o = (z - max).exp();
            sum += *o;
        }
        for o in &mut out {
            *o /= sum;
        }
        ClassProbs(out)
    }
}

/// The three input modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Speech,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Image, Modality::Speech, Modality::Text];

    /// Player index when modalities are treated as a three-player game.
    pub fn player(self) -> usize {
        match self {
            Modality::Image => 0,
            Modality::Speech => 1,
            Modality::Text => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::Speech => "speech",
            Modality::Text => "text",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Modality::Image),
            "speech" => Ok(Modality::Speech),
            "text" => Ok(Modality::Text),
            other => Err(Error::Config(format!("unknown modality {other:?}"))),
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which modalities are passed to the model; excluded ones are zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModalityMask {
    pub include_image: bool,
    pub include_speech: bool,
    pub include_text: bool,
}

impl ModalityMask {
    pub const ALL: ModalityMask = ModalityMask {
        include_image: true,
        include_speech: true,
        include_text: true,
    };
    pub const NONE: ModalityMask = ModalityMask {
        include_image: false,
        include_speech: false,
        include_text: false,
    };

    pub fn only(m: Modality) -> Self {
        let mut mask = Self::NONE;
        mask.set(m, true);
        mask
    }

    pub fn all_but(m: Modality) -> Self {
        let mut mask = Self::ALL;
        mask.set(m, false);
        mask
    }

    /// Bit `player()` set means the modality is included.
    pub fn from_bits(bits: u8) -> Self {
        ModalityMask {
            include_image: bits & 1 != 0,
            include_speech: bits & 2 != 0,
            include_text: bits & 4 != 0,
        }
    }

    pub fn bits(self) -> u8 {
        self.include_image as u8 | (self.include_speech as u8) << 1 | (self.include_text as u8) << 2
    }

    pub fn includes(self, m: Modality) -> bool {
        match m {
            Modality::Image => self.include_image,
            Modality::Speech => self.include_speech,
            Modality::Text => self.include_text,
        }
    }

    pub fn set(&mut self, m: Modality, include: bool) {
        match m {
            Modality::Image => self.include_image = include,
            Modality::Speech => self.include_speech = include,
            Modality::Text => self.include_text = include,
        }
    }
}

/// One (image, speech spectrogram, token sequence) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampleRecord", into = "SampleRecord")]
pub struct MultimodalSample {
    image: Tensor,
    speech: Tensor,
    text: Vec<usize>,
    label: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    image: Tensor,
    speech: Tensor,
    text: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

impl TryFrom<SampleRecord> for MultimodalSample {
    type Error = Error;

    fn try_from(r: SampleRecord) -> Result<Self> {
        MultimodalSample::new(r.image, r.speech, r.text, r.label)
    }
}

impl From<MultimodalSample> for SampleRecord {
    fn from(s: MultimodalSample) -> Self {
        SampleRecord {
            image: s.image,
            speech: s.speech,
            text: s.text,
            label: s.label,
        }
    }
}

impl MultimodalSample {
    /// Validates ranks (image `(H, W, C)`, speech `(F, T)`), the `[0, 1]`
    /// pixel range and the label range.
    pub fn new(
        image: Tensor,
        speech: Tensor,
        text: Vec<usize>,
        label: Option<usize>,
    ) -> Result<Self> {
        if image.shape().len() != 3 {
            return Err(Error::shape("image rank", 3, image.shape().len()));
        }
        if speech.shape().len() != 2 {
            return Err(Error::shape("speech rank", 2, speech.shape().len()));
        }
        if image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("image values must lie in [0, 1]".into()));
        }
        if let Some(l) = label {
            Emotion::from_index(l)?;
        }
        Ok(MultimodalSample {
            image,
            speech,
            text,
            label,
        })
    }

    pub fn image(&self) -> &Tensor {
        &self.image
    }

    pub fn speech(&self) -> &Tensor {
        &self.speech
    }

    pub fn text(&self) -> &[usize] {
        &self.text
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Replaces the image; the new tensor must keep the original shape.
    pub(crate) fn set_image(&mut self, image: Tensor) {
        debug_assert_eq!(image.shape(), self.image.shape());
        self.image = image;
    }

    pub(crate) fn set_speech(&mut self, speech: Tensor) {
        debug_assert_eq!(speech.shape(), self.speech.shape());
        self.speech = speech;
    }

    pub(crate) fn set_text(&mut self, text: Vec<usize>) {
        debug_assert_eq!(text.len(), self.text.len());
        self.text = text;
    }

    /// A copy with excluded modalities replaced by zeros (all-padding text of
    /// the same length).
    pub fn masked(&self, mask: ModalityMask) -> MultimodalSample {
        let mut out = self.clone();
        out.zero_excluded(mask);
        out
    }

    pub(crate) fn zero_excluded(&mut self, mask: ModalityMask) {
        if !mask.include_image {
            self.image.data_mut().fill(0.0);
        }
        if !mask.include_speech {
            self.speech.data_mut().fill(0.0);
        }
        if !mask.include_text {
            self.text.fill(PAD_TOKEN);
        }
    }

    /// Whether the modality carries any non-zero (non-padding) content.
    pub fn is_present(&self, m: Modality) -> bool {
        match m {
            Modality::Image => !self.image.is_zero(),
            Modality::Speech => !self.speech.is_zero(),
            Modality::Text => self.text.iter().any(|&t| t != PAD_TOKEN),
        }
    }
}

/// Input shapes a model accepts; `None` accepts anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub image_shape: Option<[usize; 3]>,
    pub speech_shape: Option<[usize; 2]>,
    pub text_len: Option<usize>,
    pub vocab: Option<usize>,
}

impl InputSpec {
    pub fn check(&self, sample: &MultimodalSample) -> Result<()> {
        if let Some(s) = self.image_shape {
            if sample.image().shape() != s {
                return Err(Error::shape("image", s, sample.image().shape()));
            }
        }
        if let Some(s) = self.speech_shape {
            if sample.speech().shape() != s {
                return Err(Error::shape("speech", s, sample.speech().shape()));
            }
        }
        if let Some(l) = self.text_len {
            if sample.text().len() != l {
                return Err(Error::shape("text length", l, sample.text().len()));
            }
        }
        if let Some(v) = self.vocab {
            if let Some(&t) = sample.text().iter().find(|&&t| t >= v) {
                return Err(Error::OutOfBounds(format!("token {t} outside vocabulary of {v}")));
            }
        }
        Ok(())
    }
}

/// A pure, thread-safe classifier over multimodal samples.
///
/// Implementations must be deterministic: equal inputs give bit-equal
/// outputs, from any thread.
pub trait Predictor: Send + Sync {
    /// Raw evaluation; callers go through [`Predictor::predict`].
    fn forward(&self, sample: &MultimodalSample) -> Result<ClassProbs>;

    fn input_spec(&self) -> InputSpec {
        InputSpec::default()
    }

    /// Whether outputs are probability distributions.
    fn is_probabilistic(&self) -> bool {
        true
    }

    fn predict(&self, sample: &MultimodalSample) -> Result<ClassProbs> {
        self.input_spec().check(sample)?;
        let out = self.forward(sample)?;
        if !out.is_finite() {
            return Err(Error::Numeric("model output".into()));
        }
        Ok(out)
    }

    fn predict_masked(&self, sample: &MultimodalSample, mask: ModalityMask) -> Result<ClassProbs> {
        if mask == ModalityMask::ALL {
            self.predict(sample)
        } else {
            self.predict(&sample.masked(mask))
        }
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn forward(&self, sample: &MultimodalSample) -> Result<ClassProbs> {
        (**self).forward(sample)
    }
    fn input_spec(&self) -> InputSpec {
        (**self).input_spec()
    }
    fn is_probabilistic(&self) -> bool {
        (**self).is_probabilistic()
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn forward(&self, sample: &MultimodalSample) -> Result<ClassProbs> {
        (**self).forward(sample)
    }
    fn input_spec(&self) -> InputSpec {
        (**self).input_spec()
    }
    fn is_probabilistic(&self) -> bool {
        (**self).is_probabilistic()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MultimodalSample {
        MultimodalSample::new(
            Tensor::filled(&[2, 2, 1], 0.5),
            Tensor::filled(&[2, 2], -1.0),
            vec![3, 0, 2],
            None,
        )
        .unwrap()
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(ClassProbs([0.1, 0.6, 0.2, 0.1]).argmax(), 1);
        assert_eq!(ClassProbs::UNIFORM.argmax(), 0);
        assert_eq!(ClassProbs([0.0, 0.4, 0.4, 0.2]).argmax(), 1);
    }

    #[test]
    fn mask_bits_round_trip() {
        for bits in 0..8u8 {
            assert_eq!(ModalityMask::from_bits(bits).bits(), bits);
        }
        assert_eq!(ModalityMask::ALL.bits(), 7);
        assert_eq!(ModalityMask::only(Modality::Speech).bits(), 2);
        assert_eq!(ModalityMask::all_but(Modality::Speech).bits(), 5);
    }

    #[test]
    fn masking_zeroes_and_pads() {
        let s = sample();
        let m = s.masked(ModalityMask::only(Modality::Image));
        assert_eq!(m.image(), s.image());
        assert!(m.speech().is_zero());
        assert_eq!(m.text(), &[PAD_TOKEN; 3]);
        assert!(!m.is_present(Modality::Text));
        assert_eq!(s.masked(ModalityMask::ALL), s);
    }

    #[test]
    fn sample_rejects_bad_ranks_and_pixels() {
        let bad_rank = MultimodalSample::new(Tensor::zeros(&[2, 2]), Tensor::zeros(&[2, 2]), vec![], None);
        assert!(matches!(bad_rank, Err(Error::Shape { .. })));
        let bad_px = MultimodalSample::new(Tensor::filled(&[1, 1, 1], 1.5), Tensor::zeros(&[2, 2]), vec![], None);
        assert!(bad_px.is_err());
        let bad_label = MultimodalSample::new(Tensor::zeros(&[1, 1, 1]), Tensor::zeros(&[1, 1]), vec![], Some(4));
        assert!(bad_label.is_err());
    }

    #[test]
    fn input_spec_reports_mismatch() {
        let spec = InputSpec {
            image_shape: Some([2, 2, 1]),
            speech_shape: Some([3, 3]),
            text_len: None,
            vocab: Some(4),
        };
        assert!(matches!(spec.check(&sample()), Err(Error::Shape { .. })));
    }

    #[test]
    fn sample_json_round_trip() {
        let s = sample().with_label(Some(2));
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<MultimodalSample>(&json).unwrap(), s);
    }
}
