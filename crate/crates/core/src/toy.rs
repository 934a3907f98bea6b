//! Built-in toy predictors used as fixtures and oracles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{
    ClassProbs, InputSpec, Modality, MultimodalSample, Predictor, NUM_CLASSES, PAD_TOKEN,
};
use crate::tensor::Tensor;

/// Real value assigned to every coalition of `n_players` abstract players.
pub trait ValueFunction: Sync {
    fn n_players(&self) -> usize;

    /// Value of the coalition whose members are the set bits of `coalition`.
    fn value(&self, coalition: u32) -> f64;
}

/// A game stored as an explicit table indexed by coalition bitmask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableGame {
    values: Vec<f64>,
}

impl TableGame {
    /// `values.len()` must be a power of two; entry `s` is `v(s)`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.len().is_power_of_two() {
            return Err(Error::Config(format!(
                "game table length {} is not a power of two",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("game table".into()));
        }
        Ok(TableGame { values })
    }

    pub fn from_fn(n: usize, f: impl Fn(u32) -> f64) -> Result<Self> {
        if n > 20 {
            return Err(Error::TooManyPlayers(n));
        }
        TableGame::new((0..1u32 << n).map(f).collect())
    }

    /// Three-player majority game: `v(S) = 1` iff `|S| >= 2`.
    pub fn majority3() -> Self {
        TableGame::from_fn(3, |s| if s.count_ones() >= 2 { 1.0 } else { 0.0 }).unwrap()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl ValueFunction for TableGame {
    fn n_players(&self) -> usize {
        self.values.len().trailing_zeros() as usize
    }

    fn value(&self, coalition: u32) -> f64 {
        self.values[coalition as usize]
    }
}

/// Returns the same scores for every input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantModel {
    scores: ClassProbs,
}

impl ConstantModel {
    pub fn new(scores: ClassProbs) -> Result<Self> {
        if !scores.is_finite() {
            return Err(Error::Numeric("constant model scores".into()));
        }
        Ok(ConstantModel { scores })
    }

    pub fn uniform() -> Self {
        ConstantModel {
            scores: ClassProbs::UNIFORM,
        }
    }

    pub fn scores(&self) -> ClassProbs {
        self.scores
    }
}

impl Predictor for ConstantModel {
    fn forward(&self, _sample: &MultimodalSample) -> Result<ClassProbs> {
        Ok(self.scores)
    }

    fn is_probabilistic(&self) -> bool {
        self.scores.is_distribution(1e-9)
    }
}

/// Whether a model applies softmax to its scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    Probability,
    Raw,
}

/// Linear per-modality scores summed with a bias.
///
/// Each modality contributes `a_m = W_m · x_m` (image and speech flattened,
/// text as a sum of token embeddings with padding skipped), so a zeroed
/// modality contributes nothing. Output is `b + a_i + a_s + a_t` in raw mode
/// and its softmax in probability mode.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveModel {
    bias: [f64; NUM_CLASSES],
    image_weights: Tensor,
    speech_weights: Tensor,
    text_embedding: Tensor,
    spec: InputSpec,
    output: OutputMode,
}

impl AdditiveModel {
    /// `image_weights` is `(4, H*W*C)`, `speech_weights` is `(4, F*T)` and
    /// `text_embedding` is `(vocab, 4)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        bias: [f64; NUM_CLASSES],
        image_shape: [usize; 3],
        image_weights: Tensor,
        speech_shape: [usize; 2],
        speech_weights: Tensor,
        text_len: usize,
        text_embedding: Tensor,
        output: OutputMode,
    ) -> Result<Self> {
        let n_img: usize = image_shape.iter().product();
        let n_sp: usize = speech_shape.iter().product();
        if image_weights.shape() != [NUM_CLASSES, n_img] {
            return Err(Error::shape("additive image weights", [NUM_CLASSES, n_img], image_weights.shape()));
        }
        if speech_weights.shape() != [NUM_CLASSES, n_sp] {
            return Err(Error::shape("additive speech weights", [NUM_CLASSES, n_sp], speech_weights.shape()));
        }
        if text_embedding.shape().len() != 2 || text_embedding.shape()[1] != NUM_CLASSES {
            return Err(Error::shape("additive text embedding", ["vocab", "4"], text_embedding.shape()));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numeric("additive bias".into()));
        }
        let vocab = text_embedding.shape()[0];
        Ok(AdditiveModel {
            bias,
            image_weights,
            speech_weights,
            text_embedding,
            spec: InputSpec {
                image_shape: Some(image_shape),
                speech_shape: Some(speech_shape),
                text_len: Some(text_len),
                vocab: Some(vocab),
            },
            output,
        })
    }

    pub fn bias(&self) -> [f64; NUM_CLASSES] {
        self.bias
    }

    pub fn output_mode(&self) -> OutputMode {
        self.output
    }

    pub fn image_weights(&self) -> &Tensor {
        &self.image_weights
    }

    pub fn speech_weights(&self) -> &Tensor {
        &self.speech_weights
    }

    pub fn text_embedding(&self) -> &Tensor {
        &self.text_embedding
    }

    /// Contribution vector of one modality for this sample.
    pub fn contribution(&self, sample: &MultimodalSample, m: Modality) -> [f64; NUM_CLASSES] {
        let mut out = [0.0; NUM_CLASSES];
        match m {
            Modality::Image => linear(&self.image_weights, sample.image().data(), &mut out),
            Modality::Speech => linear(&self.speech_weights, sample.speech().data(), &mut out),
            Modality::Text => {
                let emb = self.text_embedding.data();
                for &tok in sample.text() {
                    if tok == PAD_TOKEN {
                        continue;
                    }
                    for (c, o) in out.iter_mut().enumerate() {
                        *o += emb[tok * NUM_CLASSES + c];
                    }
                }
            }
        }
        out
    }
}

fn linear(weights: &Tensor, x: &[f64], out: &mut [f64; NUM_CLASSES]) {
    let w = weights.data();
    let n = x.len();
    for (c, o) in out.iter_mut().enumerate() {
        *o = w[c * n..(c + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

impl Predictor for AdditiveModel {
    fn forward(&self, sample: &MultimodalSample) -> Result<ClassProbs> {
        let mut z = self.bias;
        for m in Modality::ALL {
            for (zc, a) in z.iter_mut().zip(self.contribution(sample, m)) {
                *zc += a;
            }
        }
        Ok(match self.output {
            OutputMode::Raw => ClassProbs(z),
            OutputMode::Probability => ClassProbs::softmax(&z),
        })
    }

    fn input_spec(&self) -> InputSpec {
        self.spec.clone()
    }

    fn is_probabilistic(&self) -> bool {
        self.output == OutputMode::Probability
    }
}

/// Input dimensions shared by a generated model and its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleDims {
    pub image: [usize; 3],
    pub speech: [usize; 2],
    pub text_len: usize,
    pub vocab: usize,
}

impl Default for SampleDims {
    fn default() -> Self {
        SampleDims {
            image: [8, 8, 3],
            speech: [8, 8],
            text_len: 6,
            vocab: 16,
        }
    }
}

/// Random sample: pixels in `[0, 1]`, speech in `[-1, 1]`, tokens drawn from
/// the whole vocabulary (padding included).
pub fn random_sample<R: Rng + ?Sized>(rng: &mut R, dims: &SampleDims) -> Result<MultimodalSample> {
    let n_img: usize = dims.image.iter().product();
    let n_sp: usize = dims.speech.iter().product();
    let image = (0..n_img).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let speech = (0..n_sp).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let text = (0..dims.text_len).map(|_| rng.gen_range(0..dims.vocab)).collect();
    MultimodalSample::new(
        Tensor::new(dims.image.to_vec(), image)?,
        Tensor::new(dims.speech.to_vec(), speech)?,
        text,
        None,
    )
}

impl AdditiveModel {
    /// Weights and bias drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dims: &SampleDims, scale: f64, output: OutputMode) -> Result<Self> {
        let n_img: usize = dims.image.iter().product();
        let n_sp: usize = dims.speech.iter().product();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-scale..=scale)).collect() };
        let bias: [f64; NUM_CLASSES] = draw(NUM_CLASSES).try_into().expect("four classes");
        AdditiveModel::new(
            bias,
            dims.image,
            Tensor::new(vec![NUM_CLASSES, n_img], draw(NUM_CLASSES * n_img))?,
            dims.speech,
            Tensor::new(vec![NUM_CLASSES, n_sp], draw(NUM_CLASSES * n_sp))?,
            dims.text_len,
            Tensor::new(vec![dims.vocab, NUM_CLASSES], draw(dims.vocab * NUM_CLASSES))?,
            output,
        )
    }
}

impl TableGame {
    /// Game with every coalition value drawn from `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Self> {
        TableGame::new((0..1usize << n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
    }
}

/// Maps a three-player game onto the modalities: the coalition is the set of
/// modalities with non-zero content, and `v(S)` is emitted at `class` (zero
/// elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct TableGameModel {
    game: TableGame,
    class: usize,
}

impl TableGameModel {
    pub fn new(game: TableGame, class: usize) -> Result<Self> {
        if game.n_players() != 3 {
            return Err(Error::Config(format!(
                "table-game model needs a 3-player game, got {}",
                game.n_players()
            )));
        }
        crate::predictor::Emotion::from_index(class)?;
        Ok(TableGameModel { game, class })
    }

    pub fn game(&self) -> &TableGame {
        &self.game
    }

    pub fn class(&self) -> usize {
        self.class
    }
}

impl Predictor for TableGameModel {
    fn forward(&self, sample: &MultimodalSample) -> Result<ClassProbs> {
        let coalition = Modality::ALL
            .iter()
            .filter(|&&m| sample.is_present(m))
            .fold(0u32, |acc, m| acc | 1 << m.player());
        let mut out = [0.0; NUM_CLASSES];
        out[self.class] = self.game.value(coalition);
        Ok(ClassProbs(out))
    }

    fn is_probabilistic(&self) -> bool {
        false
    }
}
