//! Regular partitions of sequences and square grids into feature groups.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::predictor::PAD_TOKEN;
use crate::tensor::Tensor;

/// One feature group of a [`PartitionScheme`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Part {
    /// Contiguous index range of a sequence.
    Span(Range<usize>),
    /// Rectangular block of a grid; spans every channel of an image.
    Block { rows: Range<usize>, cols: Range<usize> },
}

impl Part {
    /// Number of grid cells or sequence positions covered.
    pub fn size(&self) -> usize {
        match self {
            Part::Span(r) => r.len(),
            Part::Block { rows, cols } => rows.len() * cols.len(),
        }
    }
}

/// Balanced division of `[0, l)` into `j` parts, or of a `w × w` grid into
/// `j × j` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionScheme {
    Linear { len: usize, spans: Vec<Range<usize>> },
    Grid { side: usize, spans: Vec<Range<usize>> },
}

impl PartitionScheme {
    /// Parts in order; grid blocks are enumerated row-major.
    pub fn parts(&self) -> Vec<Part> {
        match self {
            PartitionScheme::Linear { spans, .. } => spans.iter().cloned().map(Part::Span).collect(),
            PartitionScheme::Grid { spans, .. } => spans
                .iter()
                .flat_map(|r| {
                    spans.iter().map(move |c| Part::Block {
                        rows: r.clone(),
                        cols: c.clone(),
                    })
                })
                .collect(),
        }
    }

    pub fn part_count(&self) -> usize {
        match self {
            PartitionScheme::Linear { spans, .. } => spans.len(),
            PartitionScheme::Grid { spans, .. } => spans.len() * spans.len(),
        }
    }

    /// Per-axis group count `j`.
    pub fn groups_per_axis(&self) -> usize {
        match self {
            PartitionScheme::Linear { spans, .. } | PartitionScheme::Grid { spans, .. } => spans.len(),
        }
    }
}

fn balanced_spans(l: usize, j: usize) -> Result<Vec<Range<usize>>> {
    if j < 2 {
        return Err(Error::Config(format!("part count {j} must be at least 2")));
    }
    if j > l {
        return Err(Error::Config(format!("part count {j} exceeds length {l}")));
    }
    let (base, extra) = (l / j, l % j);
    let mut start = 0;
    Ok((0..j)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// `j` contiguous ranges over `[0, l)`; the first `l mod j` have one extra
/// element.
pub fn make_parts_1d(l: usize, j: usize) -> Result<PartitionScheme> {
    Ok(PartitionScheme::Linear {
        len: l,
        spans: balanced_spans(l, j)?,
    })
}

/// `j × j` blocks of a `w × w` grid with 1-D balanced boundaries per axis.
pub fn make_parts_2d(w: usize, j: usize) -> Result<PartitionScheme> {
    Ok(PartitionScheme::Grid {
        side: w,
        spans: balanced_spans(w, j)?,
    })
}

/// How a perturbation treats the selected part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbMode {
    /// Zero everything outside the part.
    KeepOnly,
    /// Zero the part.
    Drop,
}

fn out_of_bounds(part: &Part, shape: &[usize]) -> Error {
    Error::OutOfBounds(format!("{part:?} outside input of shape {shape:?}"))
}

/// Perturbs a rank-1 (with a span), rank-2 `(rows, cols)` or rank-3
/// `(rows, cols, channels)` tensor (with a block).
pub fn perturb(input: &Tensor, part: &Part, mode: PerturbMode) -> Result<Tensor> {
    let shape = input.shape();
    let mut out = match mode {
        PerturbMode::KeepOnly => input.zeros_like(),
        PerturbMode::Drop => input.clone(),
    };
    match (part, shape.len()) {
        (Part::Span(r), 1) => {
            if r.end > shape[0] {
                return Err(out_of_bounds(part, shape));
            }
            let src = &input.data()[r.clone()];
            let dst = &mut out.data_mut()[r.clone()];
            match mode {
                PerturbMode::KeepOnly => dst.copy_from_slice(src),
                PerturbMode::Drop => dst.fill(0.0),
            }
        }
        (Part::Block { rows, cols }, 2 | 3) => {
            if rows.end > shape[0] || cols.end > shape[1] {
                return Err(out_of_bounds(part, shape));
            }
            let channels = shape.get(2).copied().unwrap_or(1);
            let row_stride = shape[1] * channels;
            for r in rows.clone() {
                let span = r * row_stride + cols.start * channels..r * row_stride + cols.end * channels;
                let src = &input.data()[span.clone()];
                let dst = &mut out.data_mut()[span];
                match mode {
                    PerturbMode::KeepOnly => dst.copy_from_slice(src),
                    PerturbMode::Drop => dst.fill(0.0),
                }
            }
        }
        _ => return Err(out_of_bounds(part, shape)),
    }
    Ok(out)
}

/// Token-sequence perturbation; "zero" is the padding token.
pub fn perturb_tokens(tokens: &[usize], part: &Part, mode: PerturbMode) -> Result<Vec<usize>> {
    let Part::Span(r) = part else {
        return Err(Error::OutOfBounds(format!("{part:?} is not a sequence span")));
    };
    if r.end > tokens.len() {
        return Err(out_of_bounds(part, &[tokens.len()]));
    }
    Ok(tokens
        .iter()
        .enumerate()
        .map(|(i, &t)| match (mode, r.contains(&i)) {
            (PerturbMode::KeepOnly, true) | (PerturbMode::Drop, false) => t,
            _ => PAD_TOKEN,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizes(s: &PartitionScheme) -> Vec<usize> {
        match s {
            PartitionScheme::Linear { spans, .. } | PartitionScheme::Grid { spans, .. } => {
                spans.iter().map(|r| r.len()).collect()
            }
        }
    }

    #[test]
    fn even_division() {
        let s = make_parts_1d(6, 3).unwrap();
        assert_eq!(s.parts(), vec![Part::Span(0..2), Part::Span(2..4), Part::Span(4..6)]);
    }

    #[test]
    fn remainder_goes_first() {
        assert_eq!(sizes(&make_parts_1d(7, 3).unwrap()), vec![3, 2, 2]);
        assert_eq!(sizes(&make_parts_1d(5, 5).unwrap()), vec![1; 5]);
    }

    #[test]
    fn grid_examples() {
        let s = make_parts_2d(4, 2).unwrap();
        assert_eq!(s.part_count(), 4);
        assert!(s.parts().iter().all(|p| p.size() == 4));
        assert_eq!(
            s.parts()[1],
            Part::Block {
                rows: 0..2,
                cols: 2..4
            }
        );
        assert_eq!(sizes(&make_parts_2d(128, 7).unwrap()), vec![19, 19, 18, 18, 18, 18, 18]);
        let nine = make_parts_2d(3, 3).unwrap();
        assert_eq!(nine.part_count(), 9);
        assert!(nine.parts().iter().all(|p| p.size() == 1));
    }

    #[test]
    fn invalid_counts() {
        assert!(make_parts_1d(3, 4).is_err());
        assert!(make_parts_1d(3, 1).is_err());
        assert!(make_parts_2d(5, 0).is_err());
    }

    #[test]
    fn drop_everything_and_keep_on_zero() {
        let x = Tensor::new(vec![2, 2, 2], (1..=8).map(f64::from).collect()).unwrap();
        let full = Part::Block { rows: 0..2, cols: 0..2 };
        assert!(perturb(&x, &full, PerturbMode::Drop).unwrap().is_zero());
        let z = x.zeros_like();
        let p = Part::Block { rows: 0..1, cols: 1..2 };
        assert!(perturb(&z, &p, PerturbMode::KeepOnly).unwrap().is_zero());
    }

    #[test]
    fn block_spans_channels() {
        let x = Tensor::new(vec![2, 2, 2], (1..=8).map(f64::from).collect()).unwrap();
        let p = Part::Block { rows: 1..2, cols: 0..1 };
        let kept = perturb(&x, &p, PerturbMode::KeepOnly).unwrap();
        assert_eq!(kept.data(), &[0.0, 0.0, 0.0, 0.0, 5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_bounds_parts() {
        let x = Tensor::zeros(&[3, 3]);
        assert!(perturb(&x, &Part::Block { rows: 0..4, cols: 0..1 }, PerturbMode::Drop).is_err());
        assert!(perturb(&x, &Part::Span(0..1), PerturbMode::Drop).is_err());
        assert!(perturb_tokens(&[1, 2], &Part::Span(1..3), PerturbMode::Drop).is_err());
    }

    #[test]
    fn token_perturbation() {
        let t = [4, 5, 6, 7];
        assert_eq!(perturb_tokens(&t, &Part::Span(1..3), PerturbMode::KeepOnly).unwrap(), vec![0, 5, 6, 0]);
        assert_eq!(perturb_tokens(&t, &Part::Span(1..3), PerturbMode::Drop).unwrap(), vec![4, 0, 0, 7]);
    }

    proptest! {
        #[test]
        fn spans_cover_disjointly_and_balance(l in 2usize..=256, j in 2usize..=10) {
            prop_assume!(j <= l);
            let s = make_parts_1d(l, j).unwrap();
            prop_assert_eq!(s.part_count(), j);
            let mut next = 0;
            for p in s.parts() {
                let Part::Span(r) = p else { unreachable!() };
                prop_assert_eq!(r.start, next);
                next = r.end;
            }
            prop_assert_eq!(next, l);
            let sz = sizes(&s);
            prop_assert!(sz.iter().max().unwrap() - sz.iter().min().unwrap() <= 1);
        }

        #[test]
        fn keep_plus_drop_is_identity(
            w in 2usize..12, c in 1usize..4, j in 2usize..6, seed in any::<u64>(), which in any::<usize>()
        ) {
            prop_assume!(j <= w);
            let data: Vec<f64> = (0..w * w * c)
                .map(|i| ((seed.wrapping_add(i as u64).wrapping_mul(2654435761) % 1000) as f64) / 997.0)
                .collect();
            let x = Tensor::new(vec![w, w, c], data).unwrap();
            let parts = make_parts_2d(w, j).unwrap().parts();
            let part = &parts[which % parts.len()];
            let a = perturb(&x, part, PerturbMode::KeepOnly).unwrap();
            let b = perturb(&x, part, PerturbMode::Drop).unwrap();
            for ((u, v), o) in a.data().iter().zip(b.data()).zip(x.data()) {
                prop_assert_eq!(u + v, *o);
            }
        }
    }
}
