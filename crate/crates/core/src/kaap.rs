//! KP values, multi-scale KAAP attribution maps and modality importance.
//!
//! A KP value scores one feature group `f` of a `k`-group partition from two
//! marginal contributions at the target class:
//!
//! ```text
//! KP_f(k) = (1/k)·(p({f}) − p(∅)) + (1 − 1/k)·(p(all) − p(all \ {f}))
//! ```
//!
//! A KAAP map sums KP values over partition granularities `j = 2..=k`,
//! weighting each by `j/l` (sequences of length `l`) or `j²/w²` (`w × w`
//! grids), spreads each group's value over its elements and normalizes the
//! result to sum to one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{make_parts_1d, make_parts_2d, perturb, perturb_tokens, Part, PerturbMode};
use crate::predictor::{ClassProbs, Emotion, Modality, ModalityMask, MultimodalSample, Predictor};

/// Default partition granularity for images.
pub const DEFAULT_K_IMAGE: usize = 7;
/// Default partition granularity for speech spectrograms.
pub const DEFAULT_K_SPEECH: usize = 7;
/// Default partition granularity for text.
pub const DEFAULT_K_TEXT: usize = 5;

/// The two marginal-contribution weights of a KP value.
///
/// `w12` weighs adding a group to the empty coalition and `w34` adding it to
/// the other `k − 1` groups; `w34 = (k − 1)·w12` and `w12 + w34 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpWeights {
    pub k: usize,
    pub w12: f64,
    pub w34: f64,
}

impl KpWeights {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("k = {k} must be at least 2")));
        }
        let w12 = 1.0 / k as f64;
        Ok(KpWeights { k, w12, w34: 1.0 - w12 })
    }

    /// The coefficients as printed in the step-by-step procedure,
    /// `1/j` and `1/(1 − j)`. Only used as a negative control.
    pub fn unnormalized_pseudocode(k: usize) -> Result<Self> {
        let mut w = Self::new(k)?;
        w.w34 = 1.0 / (1.0 - k as f64);
        Ok(w)
    }

    pub fn combine(&self, mc_single: f64, mc_full: f64) -> f64 {
        self.w12 * mc_single + self.w34 * mc_full
    }
}

/// Selects which KP coefficients the engine uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightRule {
    #[default]
    Balanced,
    /// Deliberately wrong coefficients for mutation testing.
    Pseudocode,
}

impl WeightRule {
    fn weights(self, k: usize) -> Result<KpWeights> {
        match self {
            WeightRule::Balanced => KpWeights::new(k),
            WeightRule::Pseudocode => KpWeights::unnormalized_pseudocode(k),
        }
    }
}

/// `v_with − v_without`.
pub fn marginal_contribution(v_with: f64, v_without: f64) -> f64 {
    v_with - v_without
}

/// `(1/k)·mc_single + (1 − 1/k)·mc_full`.
pub fn kp_value(mc_single: f64, mc_full: f64, k: usize) -> Result<f64> {
    Ok(KpWeights::new(k)?.combine(mc_single, mc_full))
}

/// Target class: the override if given, else the argmax of `p_full`.
pub fn select_target(p_full: &ClassProbs, class_override: Option<usize>) -> Result<usize> {
    match class_override {
        Some(c) => Emotion::from_index(c).map(Emotion::index),
        None => Ok(p_full.argmax()),
    }
}

/// Attribution over the elements of one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub modality: Modality,
    /// `[w, w]` for images, `[T]` for speech frames, `[L]` for words.
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    /// Accumulated values before normalization.
    pub raw_values: Vec<f64>,
    /// Set when the raw sum was positive and `values` sums to one.
    pub normalized: bool,
    pub target_class: usize,
    /// Largest partition granularity included.
    pub k: usize,
}

impl AttributionMap {
    fn finish(modality: Modality, shape: Vec<usize>, raw: Vec<f64>, target_class: usize, k: usize) -> Self {
        let sum: f64 = raw.iter().sum();
        let (values, normalized) = if sum > 0.0 {
            (raw.iter().map(|v| v / sum).collect(), true)
        } else {
            (raw.clone(), false)
        };
        AttributionMap {
            modality,
            shape,
            values,
            raw_values: raw,
            normalized,
            target_class,
            k,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Options for the attribution engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KaapOptions {
    pub weight_rule: WeightRule,
}

/// Side length (grid) or length (sequence) of a modality's attribution domain.
pub(crate) fn domain_size(sample: &MultimodalSample, modality: Modality) -> Result<usize> {
    match modality {
        Modality::Image => {
            let s = sample.image().shape();
            if s[0] != s[1] {
                return Err(Error::shape("square image for grid partition", [s[0], s[0]], [s[0], s[1]]));
            }
            Ok(s[0])
        }
        Modality::Speech => {
            let s = sample.speech().shape();
            if s[0] != s[1] {
                return Err(Error::shape("square spectrogram for grid partition", [s[0], s[0]], [s[0], s[1]]));
            }
            Ok(s[0])
        }
        Modality::Text => {
            if sample.text().is_empty() {
                return Err(Error::Config("text attribution needs at least one token".into()));
            }
            Ok(sample.text().len())
        }
    }
}

/// Clamps `k_max` to the domain size, warning when it changes.
pub(crate) fn effective_k(k_max: usize, size: usize, modality: Modality) -> Result<usize> {
    if k_max < 2 {
        return Err(Error::Config(format!("k_max = {k_max} must be at least 2")));
    }
    if k_max > size {
        log::warn!("k_max {k_max} exceeds the {modality} domain size {size}; clamping to {size}");
        return Ok(size);
    }
    Ok(k_max)
}

/// `sample` restricted to `modality` with `part` kept or dropped.
pub(crate) fn perturbed(base: &MultimodalSample, modality: Modality, part: &Part, mode: PerturbMode) -> Result<MultimodalSample> {
    let mut s = base.clone();
    match modality {
        Modality::Image => s.set_image(perturb(base.image(), part, mode)?),
        Modality::Speech => s.set_speech(perturb(base.speech(), part, mode)?),
        Modality::Text => s.set_text(perturb_tokens(base.text(), part, mode)?),
    }
    Ok(s)
}

/// Weight of a granularity-`j` pass over a domain of size `size`.
pub(crate) fn scale_weight(modality: Modality, j: usize, size: usize) -> f64 {
    match modality {
        Modality::Text => j as f64 / size as f64,
        Modality::Image | Modality::Speech => (j as f64 / size as f64).powi(2),
    }
}

/// Grid cells (row-major) or sequence positions covered by `part`.
pub(crate) fn cells(part: &Part, side: usize) -> Vec<usize> {
    match part {
        Part::Span(r) => r.clone().collect(),
        Part::Block { rows, cols } => rows
            .clone()
            .flat_map(|r| cols.clone().map(move |c| r * side + c))
            .collect(),
    }
}

/// Collapses a `(F, T)` grid to `T` frames by averaging over frequency.
pub(crate) fn average_frequency(grid: &[f64], side: usize) -> Vec<f64> {
    (0..side)
        .map(|t| (0..side).map(|f| grid[f * side + t]).sum::<f64>() / side as f64)
        .collect()
}

fn map_shape(modality: Modality, size: usize) -> Vec<usize> {
    match modality {
        Modality::Image => vec![size, size],
        Modality::Speech | Modality::Text => vec![size],
    }
}

/// KAAP map of one modality at granularity `k_max`, explaining `target`.
///
/// The other modalities are zeroed for every evaluation, including the
/// reference predictions `p_f` and `p_b`.
pub fn kaap_map<P: Predictor + ?Sized>(
    model: &P,
    sample: &MultimodalSample,
    modality: Modality,
    k_max: usize,
    target: usize,
) -> Result<AttributionMap> {
    kaap_map_with(model, sample, modality, k_max, target, KaapOptions::default())
}

pub fn kaap_map_with<P: Predictor + ?Sized>(
    model: &P,
    sample: &MultimodalSample,
    modality: Modality,
    k_max: usize,
    target: usize,
    options: KaapOptions,
) -> Result<AttributionMap> {
    let size = domain_size(sample, modality)?;
    let k = effective_k(k_max, size, modality)?;
    let maps = kaap_maps_prefix(model, sample, modality, k, target, options)?;
    Ok(maps.into_iter().last().unwrap_or_else(|| {
        let n = if modality == Modality::Image { size * size } else { size };
        AttributionMap::finish(modality, map_shape(modality, size), vec![0.0; n], target, k)
    }))
}

/// KAAP maps for every granularity `2..=k_max` (after clamping), sharing
/// the perturbed predictions. Entry `i` equals `kaap_map(.., i + 2, ..)`.
pub fn kaap_maps_prefix<P: Predictor + ?Sized>(
    model: &P,
    sample: &MultimodalSample,
    modality: Modality,
    k_max: usize,
    target: usize,
    options: KaapOptions,
) -> Result<Vec<AttributionMap>> {
    Emotion::from_index(target)?;
    let size = domain_size(sample, modality)?;
    let k = effective_k(k_max, size, modality)?;

    let base = sample.masked(ModalityMask::only(modality));
    let p_f = model.predict(&base)?.get(target);
    let p_b = model.predict(&sample.masked(ModalityMask::NONE))?.get(target);

    let mut tasks = Vec::new();
    for j in 2..=k {
        let scheme = match modality {
            Modality::Text => make_parts_1d(size, j)?,
            Modality::Image | Modality::Speech => make_parts_2d(size, j)?,
        };
        tasks.extend(scheme.parts().into_iter().map(|p| (j, p)));
    }

    // Predictions run in parallel; accumulation below is sequential in task
    // order so results do not depend on the thread count.
    let kps: Vec<f64> = tasks
        .par_iter()
        .map(|(j, part)| {
            let p1 = model.predict(&perturbed(&base, modality, part, PerturbMode::KeepOnly)?)?.get(target);
            let p2 = model.predict(&perturbed(&base, modality, part, PerturbMode::Drop)?)?.get(target);
            let w = options.weight_rule.weights(*j)?;
            Ok(w.combine(marginal_contribution(p1, p_b), marginal_contribution(p_f, p2)))
        })
        .collect::<Result<_>>()?;

    let cell_count = if modality == Modality::Text { size } else { size * size };
    let mut raw = vec![0.0; cell_count];
    let mut maps = Vec::with_capacity(k.saturating_sub(1));
    let mut idx = 0;
    for j in 2..=k {
        let weight = scale_weight(modality, j, size);
        while idx < tasks.len() && tasks[idx].0 == j {
            for c in cells(&tasks[idx].1, size) {
                raw[c] += weight * kps[idx];
            }
            idx += 1;
        }
        let values = match modality {
            Modality::Speech => average_frequency(&raw, size),
            Modality::Image | Modality::Text => raw.clone(),
        };
        maps.push(AttributionMap::finish(modality, map_shape(modality, size), values, target, j));
    }
    Ok(maps)
}

/// Importance of each modality as a three-player KP value at `k = 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityImportance {
    /// Visual.
    pub upsilon: f64,
    /// Spoken.
    pub delta: f64,
    /// Textual.
    pub tau: f64,
    pub target_class: usize,
}

impl ModalityImportance {
    pub fn get(&self, m: Modality) -> f64 {
        match m {
            Modality::Image => self.upsilon,
            Modality::Speech => self.delta,
            Modality::Text => self.tau,
        }
    }

    pub fn sum(&self) -> f64 {
        self.upsilon + self.delta + self.tau
    }
}

pub fn modality_importance<P: Predictor + ?Sized>(
    model: &P,
    sample: &MultimodalSample,
    target: usize,
) -> Result<ModalityImportance> {
    modality_importance_with(model, sample, target, KaapOptions::default())
}

pub fn modality_importance_with<P: Predictor + ?Sized>(
    model: &P,
    sample: &MultimodalSample,
    target: usize,
    options: KaapOptions,
) -> Result<ModalityImportance> {
    Emotion::from_index(target)?;
    let w = options.weight_rule.weights(3)?;
    let p_f = model.predict(sample)?.get(target);
    let p_b = model.predict_masked(sample, ModalityMask::NONE)?.get(target);
    let mut s = [0.0; 3];
    for m in Modality::ALL {
        let only = model.predict_masked(sample, ModalityMask::only(m))?.get(target);
        let without = model.predict_masked(sample, ModalityMask::all_but(m))?.get(target);
        s[m.player()] = w.combine(marginal_contribution(only, p_b), marginal_contribution(p_f, without));
    }
    Ok(ModalityImportance {
        upsilon: s[0],
        delta: s[1],
        tau: s[2],
        target_class: target,
    })
}
