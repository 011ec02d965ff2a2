//! Soft Mean Recall and pixel-wise AuROC.

use std::cmp::Ordering;

use crate::error::Result;
use crate::map::{PixelMap, TamperMask};
use crate::scalar::Score;

/// Per-image score with the class counts it was computed from.
///
/// `value` is `None` when the ground truth cannot support the metric
/// (no positives for Mean Recall; no positives or no negatives for AuROC).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricResult<S> {
    pub value: Option<S>,
    pub positives: usize,
    pub negatives: usize,
}

impl<S: Score> MetricResult<S> {
    pub fn defined(value: S, positives: usize, negatives: usize) -> Self {
        Self {
            value: Some(value),
            positives,
            negatives,
        }
    }

    pub fn undefined(positives: usize, negatives: usize) -> Self {
        Self {
            value: None,
            positives,
            negatives,
        }
    }

    pub fn is_undefined(&self) -> bool {
        self.value.is_none()
    }
}

fn check_dims<S: Score>(pred: &PixelMap<S>, gt: &TamperMask) -> Result<()> {
    pred.check_same_dims(gt.width(), gt.height())
}

/// Mean predicted score over ground-truth-positive pixels.
///
/// For a 0/1 prediction this is classical recall; for an average of
/// participant rasters it equals the mean per-participant recall.
pub fn mean_recall<S: Score>(pred: &PixelMap<S>, gt: &TamperMask) -> Result<MetricResult<S>> {
    check_dims(pred, gt)?;
    let positives = gt.positive_count();
    let negatives = gt.len() - positives;
    if positives == 0 {
        return Ok(MetricResult::undefined(positives, negatives));
    }
    let total: S = pred
        .values()
        .iter()
        .zip(gt.bits())
        .filter(|(_, &bit)| bit)
        .map(|(&v, _)| v)
        .sum();
    Ok(MetricResult::defined(total / S::count(positives), positives, negatives))
}

/// Pixel-wise area under the ROC curve as the Mann-Whitney statistic.
///
/// Pixels are sorted by score and tied groups receive their average rank,
/// so each (positive, negative) pair contributes 1 when the positive scores
/// higher, 0.5 on a tie and 0 otherwise. Ranks are accumulated doubled in
/// integers, which keeps the statistic exact regardless of `S`.
pub fn auroc<S: Score>(pred: &PixelMap<S>, gt: &TamperMask) -> Result<MetricResult<S>> {
    check_dims(pred, gt)?;
    let positives = gt.positive_count();
    let negatives = gt.len() - positives;
    if positives == 0 || negatives == 0 {
        return Ok(MetricResult::undefined(positives, negatives));
    }

    let mut order: Vec<(S, bool)> = pred.values().iter().copied().zip(gt.bits().iter().copied()).collect();
    // PixelMap guarantees no NaN.
    order.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    // Sum over positives of 2 * (1-based average rank).
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0usize;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && order[end].0 == order[start].0 {
            end += 1;
        }
        let group_positives = order[start..end].iter().filter(|(_, p)| *p).count() as u128;
        // Ranks start+1 ..= end average to (start + 1 + end) / 2.
        doubled_rank_sum += group_positives * (start as u128 + 1 + end as u128);
        start = end;
    }

    let p = positives as u128;
    let n = negatives as u128;
    let doubled_u = doubled_rank_sum - p * (p + 1);
    let value = u128_to_score::<S>(doubled_u) / u128_to_score::<S>(2 * p * n);
    Ok(MetricResult::defined(value, positives, negatives))
}

fn u128_to_score<S: Score>(v: u128) -> S {
    S::from_u128(v).expect("count representable in score type")
}
