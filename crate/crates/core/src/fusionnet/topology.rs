use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{ClassProbs, InputSpec, Modality, MultimodalSample, Predictor, NUM_CLASSES, PAD_TOKEN};
use crate::tensor::Tensor;

use super::loss::loss_from_logits;
use super::params::{Gradients, ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use super::{softmax, WeightedAddLayer};

/// Deeper ("pre-trained-like") or shallower ("simple") branch stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchKind {
    Pretrained,
    Simple,
}

/// Which pairings of deeper and simpler branches are wired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// All six cross-modality pairs.
    Vista,
    /// One of the three-pair baselines `#2..=#6`.
    Baseline(u8),
}

use Modality::{Image as I, Speech as S, Text as T};

/// Pairs as (pretrained modality, simple modality), in output order.
const VISTA_PAIRS: [(Modality, Modality); 6] = [(I, S), (I, T), (S, I), (S, T), (T, I), (T, S)];

const BASELINE_PAIRS: [[(Modality, Modality); 3]; 6] = [
    [(I, I), (S, S), (T, T)],
    [(I, I), (S, T), (T, S)],
    [(I, S), (S, I), (T, T)],
    [(I, S), (S, T), (T, I)],
    [(I, T), (S, I), (T, S)],
    [(I, T), (S, S), (T, I)],
];

impl Variant {
    /// Baseline `#1` pairs every modality with itself and is rejected.
    pub fn baseline(n: u8) -> Result<Self> {
        match n {
            1 => Err(Error::RejectedConfiguration("#1".into())),
            2..=6 => Ok(Variant::Baseline(n)),
            _ => Err(Error::Config(format!("baseline #{n} does not exist (valid: #2..#6)"))),
        }
    }

    pub fn pairs(self) -> Vec<(Modality, Modality)> {
        match self {
            Variant::Vista => VISTA_PAIRS.to_vec(),
            Variant::Baseline(n) => BASELINE_PAIRS[n as usize - 1].to_vec(),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Vista => f.write_str("vista"),
            Variant::Baseline(n) => write!(f, "baseline#{n}"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "vista" {
            return Ok(Variant::Vista);
        }
        let num = s
            .strip_prefix("baseline")
            .unwrap_or(&s)
            .trim_start_matches('#');
        match num.parse::<u8>() {
            Ok(n) => Variant::baseline(n),
            Err(_) => Err(Error::Config(format!("unknown variant {s:?}"))),
        }
    }
}

impl Serialize for Variant {
    fn serialize<Se: serde::Serializer>(&self, s: Se) -> std::result::Result<Se::Ok, Se::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub seed: u64,
    /// Embedding width of every branch.
    pub d: usize,
    pub variant: Variant,
    pub image_shape: [usize; 3],
    pub speech_shape: [usize; 2],
    pub text_len: usize,
    pub vocab: usize,
    pub embed_dim: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            seed: 0,
            d: 32,
            variant: Variant::Vista,
            image_shape: [16, 16, 3],
            speech_shape: [16, 16],
            text_len: 8,
            vocab: 32,
            embed_dim: 8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Branch {
    embedding: Option<ParamId>,
    layers: Vec<Dense>,
}

#[derive(Debug, Clone)]
struct Pair {
    pretrained: Modality,
    simple: Modality,
    combine: ParamId,
    head: [Dense; 2],
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    /// Head outputs `O_1..O_n`, one per wired pair.
    pub pair_outputs: Vec<Vec<f64>>,
    /// Late-fusion result fed to the output layer.
    pub fused: Vec<f64>,
    pub logits: [f64; NUM_CLASSES],
    pub probs: ClassProbs,
}

/// The fusion classifier with all its parameters.
#[derive(Debug, Clone)]
pub struct FusionNet {
    config: FusionConfig,
    params: ParamStore,
    pretrained: Vec<Branch>,
    simple: Vec<Branch>,
    pairs: Vec<Pair>,
    late_combine: ParamId,
    output: Dense,
}

struct Builder {
    rng: ChaCha8Rng,
    params: ParamStore,
}

impl Builder {
    fn dense(&mut self, name: &str, inp: usize, out: usize) -> Dense {
        let limit = (6.0 / (inp + out) as f64).sqrt();
        let w: Vec<f64> = (0..inp * out).map(|_| self.rng.gen_range(-limit..limit)).collect();
        let w = self.params.add(format!("{name}.w"), Tensor::new(vec![out, inp], w).unwrap());
        let b = self.params.add(format!("{name}.b"), Tensor::zeros(&[out]));
        Dense { w, b }
    }

    fn raw_weights(&mut self, name: &str, m: usize) -> ParamId {
        let raw: Vec<f64> = (0..m).map(|_| self.rng.gen_range(-0.05..0.05)).collect();
        self.params.add(name, Tensor::new(vec![m], raw).unwrap())
    }

    fn embedding(&mut self, name: &str, vocab: usize, dim: usize) -> ParamId {
        let data: Vec<f64> = (0..vocab * dim).map(|_| self.rng.gen_range(-0.5..0.5)).collect();
        self.params.add(name, Tensor::new(vec![vocab, dim], data).unwrap())
    }
}

fn branch_name(kind: BranchKind, m: Modality) -> String {
    let prefix = match kind {
        BranchKind::Pretrained => "pretrained",
        BranchKind::Simple => "simple",
    };
    format!("{prefix}_{m}")
}

impl FusionNet {
    /// Builds the topology with seeded initial parameters.
    pub fn new(config: FusionConfig) -> Result<Self> {
        if let Variant::Baseline(n) = config.variant {
            Variant::baseline(n)?;
        }
        let c = &config;
        if c.d == 0 || c.embed_dim == 0 || c.vocab < 2 || c.text_len == 0 {
            return Err(Error::Config(
                "d, embed_dim and text_len must be positive and vocab at least 2".into(),
            ));
        }
        if c.image_shape.contains(&0) || c.speech_shape.contains(&0) {
            return Err(Error::Config("input shapes must be positive".into()));
        }
        let d = c.d;
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(c.seed),
            params: ParamStore::new(),
        };
        let input_width = |m: Modality| match m {
            Modality::Image => c.image_shape.iter().product::<usize>(),
            Modality::Speech => c.speech_shape.iter().product(),
            Modality::Text => c.text_len * c.embed_dim,
        };

        let mut pretrained = Vec::new();
        let mut simple = Vec::new();
        for kind in [BranchKind::Pretrained, BranchKind::Simple] {
            for m in Modality::ALL {
                let name = branch_name(kind, m);
                let embedding =
                    (m == Modality::Text).then(|| b.embedding(&format!("{name}.embedding"), c.vocab, c.embed_dim));
                let widths: Vec<usize> = match kind {
                    BranchKind::Pretrained => vec![input_width(m), 2 * d, 2 * d, d],
                    BranchKind::Simple => vec![input_width(m), d, d],
                };
                let layers = widths
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| b.dense(&format!("{name}.dense{i}"), w[0], w[1]))
                    .collect();
                let branch = Branch { embedding, layers };
                match kind {
                    BranchKind::Pretrained => pretrained.push(branch),
                    BranchKind::Simple => simple.push(branch),
                }
            }
        }

        let pairs = c
            .variant
            .pairs()
            .into_iter()
            .enumerate()
            .map(|(i, (p, s))| {
                let name = format!("pair{}", i + 1);
                let combine = b.raw_weights(&format!("{name}.combine"), 2);
                let head = [
                    b.dense(&format!("{name}.head0"), d, 4 * d),
                    b.dense(&format!("{name}.head1"), 4 * d, 4 * d),
                ];
                Pair {
                    pretrained: p,
                    simple: s,
                    combine,
                    head,
                }
            })
            .collect::<Vec<_>>();
        let late_combine = b.raw_weights("late.combine", pairs.len());
        let output = b.dense("output", 4 * d, NUM_CLASSES);

        Ok(FusionNet {
            config,
            params: b.params,
            pretrained,
            simple,
            pairs,
            late_combine,
            output,
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Wired (pretrained, simple) modality pairs in output order.
    pub fn pairs(&self) -> Vec<(Modality, Modality)> {
        self.pairs.iter().map(|p| (p.pretrained, p.simple)).collect()
    }

    /// Raw-weight parameters of every weighted-add layer: pair layers first,
    /// then the late-fusion layer.
    pub fn weighted_add_params(&self) -> Vec<ParamId> {
        self.pairs
            .iter()
            .map(|p| p.combine)
            .chain(std::iter::once(self.late_combine))
            .collect()
    }

    pub fn weighted_add_layer(&self, id: ParamId) -> WeightedAddLayer {
        WeightedAddLayer::new(self.params.get(id).data().to_vec()).expect("raw weights stay finite")
    }

    /// Effective (softmax) weights of every weighted-add layer by name.
    pub fn effective_weights(&self) -> Vec<(String, Vec<f64>)> {
        self.weighted_add_params()
            .into_iter()
            .map(|id| {
                let name = self.params.name(id);
                let name = name.strip_suffix(".combine").unwrap_or(name).to_string();
                (name, softmax(self.params.get(id).data()))
            })
            .collect()
    }

    fn branch(&self, kind: BranchKind, m: Modality) -> &Branch {
        let i = m.player();
        match kind {
            BranchKind::Pretrained => &self.pretrained[i],
            BranchKind::Simple => &self.simple[i],
        }
    }

    fn run_branch(&self, tape: &mut Tape<'_>, branch: &Branch, input: NodeId) -> Result<NodeId> {
        let mut x = input;
        for layer in &branch.layers {
            x = tape.dense(x, layer.w, layer.b)?;
            x = tape.tanh(x)?;
        }
        Ok(x)
    }

    fn record(&self, tape: &mut Tape<'_>, sample: &MultimodalSample) -> Result<(NodeId, Vec<NodeId>, NodeId)> {
        self.input_spec().check(sample)?;
        let image = tape.input(sample.image().data().to_vec())?;
        let speech = tape.input(sample.speech().data().to_vec())?;

        let mut embeddings = [[None; 3]; 2];
        for (k, kind) in [BranchKind::Pretrained, BranchKind::Simple].into_iter().enumerate() {
            for m in Modality::ALL {
                let branch = self.branch(kind, m);
                let input = match m {
                    Modality::Image => image,
                    Modality::Speech => speech,
                    Modality::Text => tape.embed(branch.embedding.expect("text branch embedding"), sample.text(), PAD_TOKEN)?,
                };
                embeddings[k][m.player()] = Some(self.run_branch(tape, branch, input)?);
            }
        }

        let mut heads = Vec::with_capacity(self.pairs.len());
        for pair in &self.pairs {
            let p = embeddings[0][pair.pretrained.player()].unwrap();
            let s = embeddings[1][pair.simple.player()].unwrap();
            let combined = tape.weighted_add(&[p, s], pair.combine)?;
            let h = tape.dense(combined, pair.head[0].w, pair.head[0].b)?;
            let h = tape.tanh(h)?;
            heads.push(tape.dense(h, pair.head[1].w, pair.head[1].b)?);
        }
        let fused = tape.weighted_add(&heads, self.late_combine)?;
        let logits = tape.dense(fused, self.output.w, self.output.b)?;
        Ok((logits, heads, fused))
    }

    /// Forward pass exposing the pair outputs.
    pub fn forward_detailed(&self, sample: &MultimodalSample) -> Result<FusionOutput> {
        let mut tape = Tape::new(&self.params);
        let (logits, heads, fused) = self.record(&mut tape, sample)?;
        let logits: [f64; NUM_CLASSES] = tape.value(logits).try_into().expect("output width is 4");
        Ok(FusionOutput {
            pair_outputs: heads.iter().map(|&h| tape.value(h).to_vec()).collect(),
            fused: tape.value(fused).to_vec(),
            logits,
            probs: ClassProbs::softmax(&logits),
        })
    }

    /// Loss and parameter gradients for one labelled sample.
    pub fn sample_gradients(&self, sample: &MultimodalSample) -> Result<(f64, Gradients)> {
        let target = sample
            .label()
            .ok_or_else(|| Error::Config("training sample without label".into()))?;
        let mut tape = Tape::new(&self.params);
        let (logits, _, _) = self.record(&mut tape, sample)?;
        let z: [f64; NUM_CLASSES] = tape.value(logits).try_into().expect("output width is 4");
        let (loss, dz, _) = loss_from_logits(&z, target);
        if !loss.is_finite() {
            return Err(Error::Numeric("loss".into()));
        }
        let mut grads = self.params.zero_gradients();
        tape.backward(logits, &dz, &mut grads);
        Ok((loss, grads))
    }

    /// Mean loss over `batch` and its exact gradient.
    ///
    /// Samples are evaluated in parallel; the reduction runs in batch order.
    pub fn gradients(&self, batch: &[MultimodalSample]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let per_sample: Vec<(f64, Gradients)> = batch
            .par_iter()
            .map(|s| self.sample_gradients(s))
            .collect::<Result<_>>()?;
        let scale = 1.0 / batch.len() as f64;
        let mut total = self.params.zero_gradients();
        let mut loss = 0.0;
        for (l, g) in &per_sample {
            loss += l;
            total.add_scaled(g, scale);
        }
        Ok((loss * scale, total))
    }

    /// Mean loss over `batch` without gradients.
    pub fn mean_loss(&self, batch: &[MultimodalSample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let losses: Vec<f64> = batch
            .par_iter()
            .map(|s| {
                let out = self.forward_detailed(s)?;
                let target = s.label().ok_or_else(|| Error::Config("sample without label".into()))?;
                Ok(loss_from_logits(&out.logits, target).0)
            })
            .collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / batch.len() as f64)
    }
}

impl Predictor for FusionNet {
    fn forward(&self, sample: &MultimodalSample) -> Result<ClassProbs> {
        Ok(self.forward_detailed(sample)?.probs)
    }

    fn input_spec(&self) -> InputSpec {
        InputSpec {
            image_shape: Some(self.config.image_shape),
            speech_shape: Some(self.config.speech_shape),
            text_len: Some(self.config.text_len),
            vocab: Some(self.config.vocab),
        }
    }
}
