//! Model-agnostic multimodal attribution.
//!
//! The crate explains a four-class emotion classifier over (image, speech
//! spectrogram, text) inputs with KP values and multi-scale KAAP maps
//! ([`kaap`]), validates them against exhaustive Shapley values and
//! straight-line reference implementations ([`oracle`]), and ships a small
//! hybrid-fusion classifier to explain ([`fusionnet`]).

pub mod error;
pub mod fmt;
pub mod fusionnet;
pub mod kaap;
pub mod kselect;
pub mod labelfuse;
pub mod model_file;
pub mod oracle;
pub mod partition;
pub mod predictor;
pub mod report;
pub mod tensor;
pub mod toy;

pub use error::{Error, Result};
pub use model_file::{make_toy_model, ModelFile, ToyModel};
pub use predictor::{ClassProbs, Emotion, Modality, ModalityMask, MultimodalSample, Predictor};
pub use tensor::Tensor;
