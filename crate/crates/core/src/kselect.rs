//! Dice similarity of attribution maps and convergence-based choice of `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kaap::{domain_size, effective_k, kaap_maps_prefix, select_target, AttributionMap, KaapOptions};
use crate::predictor::{Modality, MultimodalSample, Predictor};

/// Default top fraction used to binarize maps.
pub const DEFAULT_TOP_FRACTION: f64 = 0.25;
/// Default mean-dice level at which `k` is considered converged.
pub const DEFAULT_THRESHOLD: f64 = 0.95;
/// Largest granularity examined by default.
pub const DEFAULT_K_MAX: usize = 10;

/// Indices of the `ceil(q·n)` largest values; ties go to the lowest index.
pub fn top_fraction_mask(values: &[f64], q: f64) -> Vec<bool> {
    let n = values.len();
    let count = ((q * n as f64).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut mask = vec![false; n];
    for &i in &order[..count] {
        mask[i] = true;
    }
    mask
}

/// Dice coefficient `2|A∩B| / (|A| + |B|)` of the top-`q` masks; 1 when both
/// masks are empty.
pub fn dice(a: &AttributionMap, b: &AttributionMap, q: f64) -> Result<f64> {
    if a.shape != b.shape || a.modality != b.modality {
        return Err(Error::shape("dice map domain", &a.shape, &b.shape));
    }
    dice_values(&a.values, &b.values, q)
}

pub fn dice_values(a: &[f64], b: &[f64], q: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("dice map length", a.len(), b.len()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!("top fraction {q} must lie in (0, 1]")));
    }
    let ma = top_fraction_mask(a, q);
    let mb = top_fraction_mask(b, q);
    let size_a = ma.iter().filter(|&&x| x).count();
    let size_b = mb.iter().filter(|&&x| x).count();
    if size_a + size_b == 0 {
        return Ok(1.0);
    }
    let both = ma.iter().zip(&mb).filter(|(x, y)| **x && **y).count();
    Ok(2.0 * both as f64 / (size_a + size_b) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceCurve {
    pub modality: Modality,
    /// `(k, mean dice between the k−1 and k maps)` for `k = 3..=k_max`.
    pub points: Vec<(usize, f64)>,
    pub selected_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectKConfig {
    pub k_max: usize,
    pub threshold: f64,
    pub q: f64,
    pub target_override: Option<usize>,
}

impl Default for SelectKConfig {
    fn default() -> Self {
        SelectKConfig {
            k_max: DEFAULT_K_MAX,
            threshold: DEFAULT_THRESHOLD,
            q: DEFAULT_TOP_FRACTION,
            target_override: None,
        }
    }
}

/// Smallest `k` whose mean adjacent-granularity dice reaches the threshold,
/// or the (clamped) `k_max` when none does.
pub fn select_k<P: Predictor + ?Sized>(
    model: &P,
    samples: &[MultimodalSample],
    modality: Modality,
    config: &SelectKConfig,
) -> Result<DiceCurve> {
    if samples.is_empty() {
        return Err(Error::Config("select_k needs at least one sample".into()));
    }
    // Clamp once to the smallest domain so every sample yields the same k range.
    let mut k_max = config.k_max;
    for s in samples {
        k_max = effective_k(k_max, domain_size(s, modality)?, modality)?;
    }
    let mut sums = vec![0.0; k_max.saturating_sub(2)];
    for s in samples {
        let target = select_target(&model.predict(s)?, config.target_override)?;
        let maps = kaap_maps_prefix(model, s, modality, k_max, target, KaapOptions::default())?;
        for (i, pair) in maps.windows(2).enumerate() {
            sums[i] += dice(&pair[0], &pair[1], config.q)?;
        }
    }
    let points: Vec<(usize, f64)> = sums
        .iter()
        .enumerate()
        .map(|(i, s)| (i + 3, s / samples.len() as f64))
        .collect();
    let selected_k = match points.iter().find(|(_, d)| *d >= config.threshold) {
        Some(&(k, _)) => k,
        None => {
            log::warn!("{modality} dice never reached {}; using k_max = {k_max}", config.threshold);
            k_max.max(2)
        }
    };
    Ok(DiceCurve {
        modality,
        points,
        selected_k,
    })
}
