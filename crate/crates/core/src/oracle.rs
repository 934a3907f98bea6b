//! Ground-truth engines: exhaustive Shapley values and straight-line
//! reference versions of the attribution procedures.
//!
//! The reference functions deliberately avoid batching, caching, parallelism
//! and the perturbation helpers of [`crate::partition`], so that they can act
//! as differential oracles for [`crate::kaap`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kaap::{AttributionMap, ModalityImportance};
use crate::partition::{make_parts_1d, make_parts_2d, Part};
use crate::predictor::{Emotion, Modality, MultimodalSample, Predictor, PAD_TOKEN};
use crate::tensor::Tensor;
use crate::toy::ValueFunction;

/// Largest game solved by enumeration.
pub const MAX_PLAYERS: usize = 16;

/// Largest per-axis domain accepted by [`reference_kaap`].
pub const MAX_REFERENCE_SIDE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub values: Vec<f64>,
    pub full: f64,
    pub empty: f64,
}

/// Exact Shapley values by enumerating every coalition in bitmask order.
pub fn exact_shapley<G: ValueFunction + ?Sized>(game: &G) -> Result<ShapleyResult> {
    let n = game.n_players();
    if n > MAX_PLAYERS {
        return Err(Error::TooManyPlayers(n));
    }
    let mut fact = vec![1.0f64; n + 1];
    for i in 1..=n {
        fact[i] = fact[i - 1] * i as f64;
    }
    // Coefficient for a coalition of size s not containing the player.
    let coef: Vec<f64> = (0..n.max(1))
        .map(|s| if s < n { fact[s] * fact[n - s - 1] / fact[n] } else { 0.0 })
        .collect();
    let values = (0..n)
        .map(|i| {
            let bit = 1u32 << i;
            (0..1u32 << n)
                .filter(|s| s & bit == 0)
                .map(|s| coef[s.count_ones() as usize] * (game.value(s | bit) - game.value(s)))
                .sum()
        })
        .collect();
    let full = if n == 0 { game.value(0) } else { game.value((1u32 << n) - 1) };
    Ok(ShapleyResult {
        values,
        full,
        empty: game.value(0),
    })
}

/// Single-modality prediction: only `modality` carries `data`.
enum ModalityData<'a> {
    Grid(&'a Tensor),
    Tokens(&'a [usize]),
}

fn predict_type<P: Predictor + ?Sized>(
    model: &P,
    sample: &MultimodalSample,
    modality: Modality,
    data: ModalityData<'_>,
    target: usize,
) -> Result<f64> {
    let image = match (&data, modality) {
        (ModalityData::Grid(t), Modality::Image) => (*t).clone(),
        _ => Tensor::zeros(sample.image().shape()),
    };
    let speech = match (&data, modality) {
        (ModalityData::Grid(t), Modality::Speech) => (*t).clone(),
        _ => Tensor::zeros(sample.speech().shape()),
    };
    let text = match (&data, modality) {
        (ModalityData::Tokens(t), Modality::Text) => t.to_vec(),
        _ => vec![PAD_TOKEN; sample.text().len()],
    };
    let s = MultimodalSample::new(image, speech, text, None)?;
    Ok(model.predict(&s)?.get(target))
}

/// Straight-line KAAP map used as the differential reference.
#[allow(clippy::needless_range_loop)]
pub fn reference_kaap<P: Predictor + ?Sized>(
    model: &P,
    sample: &MultimodalSample,
    modality: Modality,
    k_max: usize,
    target: usize,
) -> Result<AttributionMap> {
    Emotion::from_index(target)?;
    let w = crate::kaap::domain_size(sample, modality)?;
    if w > MAX_REFERENCE_SIDE {
        return Err(Error::Config(format!(
            "reference path limited to {MAX_REFERENCE_SIDE} per axis, got {w}"
        )));
    }
    let k = crate::kaap::effective_k(k_max, w, modality)?;

    let (p_f, p_b) = match modality {
        Modality::Image => (
            predict_type(model, sample, modality, ModalityData::Grid(sample.image()), target)?,
            predict_type(model, sample, modality, ModalityData::Grid(&sample.image().zeros_like()), target)?,
        ),
        Modality::Speech => (
            predict_type(model, sample, modality, ModalityData::Grid(sample.speech()), target)?,
            predict_type(model, sample, modality, ModalityData::Grid(&sample.speech().zeros_like()), target)?,
        ),
        Modality::Text => (
            predict_type(model, sample, modality, ModalityData::Tokens(sample.text()), target)?,
            predict_type(model, sample, modality, ModalityData::Tokens(&vec![PAD_TOKEN; w]), target)?,
        ),
    };

    let mut kaap = match modality {
        Modality::Text => vec![0.0; w],
        _ => vec![0.0; w * w],
    };

    for i in 2..=k {
        let parts = match modality {
            Modality::Text => make_parts_1d(w, i)?,
            _ => make_parts_2d(w, i)?,
        }
        .parts();
        for j in 0..parts.len() {
            let part = &parts[j];
            let (p_1, p_2) = match (modality, part) {
                (Modality::Text, Part::Span(r)) => {
                    let text = sample.text();
                    let mut data_1 = vec![PAD_TOKEN; w];
                    let mut data_2 = text.to_vec();
                    for idx in r.clone() {
                        data_1[idx] = text[idx];
                        data_2[idx] = PAD_TOKEN;
                    }
                    (
                        predict_type(model, sample, modality, ModalityData::Tokens(&data_1), target)?,
                        predict_type(model, sample, modality, ModalityData::Tokens(&data_2), target)?,
                    )
                }
                (Modality::Image | Modality::Speech, Part::Block { rows, cols }) => {
                    let src = if modality == Modality::Image { sample.image() } else { sample.speech() };
                    let channels = src.shape().get(2).copied().unwrap_or(1);
                    let mut data_1 = src.zeros_like();
                    let mut data_2 = src.clone();
                    for r in rows.clone() {
                        for c in cols.clone() {
                            for ch in 0..channels {
                                let idx = (r * w + c) * channels + ch;
                                data_1.data_mut()[idx] = src.data()[idx];
                                data_2.data_mut()[idx] = 0.0;
                            }
                        }
                    }
                    (
                        predict_type(model, sample, modality, ModalityData::Grid(&data_1), target)?,
                        predict_type(model, sample, modality, ModalityData::Grid(&data_2), target)?,
                    )
                }
                _ => unreachable!("scheme kind follows modality"),
            };

            let kp_values = (1.0 / i as f64) * (p_1 - p_b) + (1.0 - 1.0 / i as f64) * (p_f - p_2);

            match part {
                Part::Span(r) => {
                    for idx in r.clone() {
                        kaap[idx] += (i as f64 / w as f64) * kp_values;
                    }
                }
                Part::Block { rows, cols } => {
                    for r in rows.clone() {
                        for c in cols.clone() {
                            kaap[r * w + c] += (i as f64 / w as f64).powi(2) * kp_values;
                        }
                    }
                }
            }
        }
    }

    if modality == Modality::Speech {
        let mut frames = vec![0.0; w];
        for (t, frame) in frames.iter_mut().enumerate() {
            let mut total = 0.0;
            for f in 0..w {
                total += kaap[f * w + t];
            }
            *frame = total / w as f64;
        }
        kaap = frames;
    }

    let total: f64 = kaap.iter().sum();
    let normalized = total > 0.0;
    let values = if normalized { kaap.iter().map(|v| v / total).collect() } else { kaap.clone() };
    Ok(AttributionMap {
        modality,
        shape: if modality == Modality::Image { vec![w, w] } else { vec![w] },
        values,
        raw_values: kaap,
        normalized,
        target_class: target,
        k,
    })
}

/// Straight-line modality importance: eight predictions, three scores.
pub fn reference_modality_importance<P: Predictor + ?Sized>(
    model: &P,
    sample: &MultimodalSample,
    target: usize,
) -> Result<ModalityImportance> {
    Emotion::from_index(target)?;
    let img = sample.image();
    let speech = sample.speech();
    let text = sample.text();
    let zero_img = img.zeros_like();
    let zero_speech = speech.zeros_like();
    let zero_text = vec![PAD_TOKEN; text.len()];
    let predict_proba = |i: &Tensor, t: &[usize], s: &Tensor| -> Result<f64> {
        let x = MultimodalSample::new(i.clone(), s.clone(), t.to_vec(), None)?;
        Ok(model.predict(&x)?.get(target))
    };

    let p_f = predict_proba(img, text, speech)?;
    let p_b = predict_proba(&zero_img, &zero_text, &zero_speech)?;
    let p_i1 = predict_proba(img, &zero_text, &zero_speech)?;
    let p_i2 = predict_proba(&zero_img, text, speech)?;
    let s_i = 1.0 / 3.0 * (p_i1 - p_b) + 2.0 / 3.0 * (p_f - p_i2);

    let p_t1 = predict_proba(&zero_img, text, &zero_speech)?;
    let p_t2 = predict_proba(img, &zero_text, speech)?;
    let s_t = 1.0 / 3.0 * (p_t1 - p_b) + 2.0 / 3.0 * (p_f - p_t2);

    let p_s1 = predict_proba(&zero_img, &zero_text, speech)?;
    let p_s2 = predict_proba(img, text, &zero_speech)?;
    let s_s = 1.0 / 3.0 * (p_s1 - p_b) + 2.0 / 3.0 * (p_f - p_s2);

    Ok(ModalityImportance {
        upsilon: s_i,
        delta: s_s,
        tau: s_t,
        target_class: target,
    })
}

/// Bin counts of `|KP − Shapley|` gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapHistogram {
    /// Upper edges of each bin; the last bin is open-ended.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub max_gap: f64,
    pub mean_gap: f64,
}

impl GapHistogram {
    pub fn from_gaps(gaps: &[f64], edges: Vec<f64>) -> Self {
        let mut counts = vec![0; edges.len() + 1];
        for &g in gaps {
            let bin = edges.iter().position(|&e| g <= e).unwrap_or(edges.len());
            counts[bin] += 1;
        }
        GapHistogram {
            edges,
            counts,
            max_gap: gaps.iter().copied().fold(0.0, f64::max),
            mean_gap: if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{ConstantModel, TableGame};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn additive_game() {
        let a = [0.5, -1.25, 2.0, 0.0];
        let g = TableGame::from_fn(4, |s| (0..4).filter(|i| s >> i & 1 == 1).map(|i| a[i]).sum()).unwrap();
        assert!(close(&exact_shapley(&g).unwrap().values, &a, 1e-12));
    }

    #[test]
    fn majority_game_thirds() {
        let r = exact_shapley(&TableGame::majority3()).unwrap();
        assert!(close(&r.values, &[1.0 / 3.0; 3], 1e-15));
        assert_eq!((r.full, r.empty), (1.0, 0.0));
    }

    #[test]
    fn permutation_average_agrees() {
        // Independent route: average marginal contributions over all 24 orders.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = TableGame::new((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut perm_avg = [0.0; 4];
        let mut count = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let order = [a, b, c, d];
                        let mut seen = 0u32;
                        for &x in &order {
                            seen |= 1 << x;
                        }
                        if seen != 15 {
                            continue;
                        }
                        count += 1.0;
                        let mut coalition = 0u32;
                        for &p in &order {
                            perm_avg[p] += g.value(coalition | 1 << p) - g.value(coalition);
                            coalition |= 1 << p;
                        }
                    }
                }
            }
        }
        let perm: Vec<f64> = perm_avg.iter().map(|v| v / count).collect();
        assert!(close(&exact_shapley(&g).unwrap().values, &perm, 1e-12));
    }

    #[test]
    fn too_many_players() {
        struct Big;
        impl ValueFunction for Big {
            fn n_players(&self) -> usize {
                17
            }
            fn value(&self, _: u32) -> f64 {
                0.0
            }
        }
        assert!(matches!(exact_shapley(&Big), Err(Error::TooManyPlayers(17))));
    }

    #[test]
    fn reference_constant_model_and_degenerate_domain() {
        let m = ConstantModel::uniform();
        let s = MultimodalSample::new(Tensor::filled(&[1, 1, 3], 0.5), Tensor::filled(&[1, 1], 2.0), vec![4], None).unwrap();
        let map = reference_kaap(&m, &s, Modality::Image, 2, 0).unwrap();
        assert_eq!((map.k, map.values.clone(), map.normalized), (1, vec![0.0], false));
        let mi = reference_modality_importance(&m, &s, 0).unwrap();
        assert_eq!((mi.upsilon, mi.delta, mi.tau), (0.0, 0.0, 0.0));
    }

    #[test]
    fn histogram_bins() {
        let h = GapHistogram::from_gaps(&[0.0, 0.05, 0.2, 3.0], vec![0.01, 0.1, 1.0]);
        assert_eq!(h.counts, vec![1, 1, 1, 1]);
        assert_eq!(h.max_gap, 3.0);
    }
}
