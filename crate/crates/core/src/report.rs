//! Per-group detection tables, enhancement deltas and semantic trends.
//!
//! "Average AuROC" is the mean of per-image AuROCs within a group. Images
//! with undefined scores are counted but never enter a mean.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{ArtifactKind, Corpus};
use crate::error::{Error, Result};
use crate::map::{align, Resample};
use crate::metrics::{auroc, MetricResult};
use crate::saliency::{SaliencyAssignment, SaliencyBin, BIN_COUNT};
use crate::scalar::Score;
use crate::semantic::SemanticChange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Original,
    SaliencyEnhanced,
    ResizedBaseline,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Original => "original",
            Condition::SaliencyEnhanced => "saliency-enhanced",
            Condition::ResizedBaseline => "resized-baseline",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "original" => Ok(Condition::Original),
            "saliency-enhanced" => Ok(Condition::SaliencyEnhanced),
            "resized-baseline" => Ok(Condition::ResizedBaseline),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore<S> {
    pub image_id: String,
    pub result: MetricResult<S>,
}

/// Per-image AuROC of one detector under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRun<S> {
    pub detector_name: String,
    pub condition: Condition,
    /// Corpus order; undefined results are kept.
    pub scores: Vec<ImageScore<S>>,
    /// Ids skipped through the exclusion list.
    pub excluded: Vec<String>,
}

impl<S: Score> DetectorRun<S> {
    pub fn image_ids(&self) -> BTreeSet<&str> {
        self.scores.iter().map(|s| s.image_id.as_str()).collect()
    }
}

pub(crate) fn index_assignments<S>(assignments: &[SaliencyAssignment<S>]) -> HashMap<&str, &SaliencyAssignment<S>> {
    assignments.iter().map(|a| (a.image_id.as_str(), a)).collect()
}

/// Scores every non-excluded image's heatmap against its tamper mask.
///
/// Heatmaps are aligned to the mask resolution first. Errors name the first
/// failing image in corpus order, independent of scheduling.
pub fn evaluate_run<S: Score>(
    corpus: &Corpus,
    assignments: &[SaliencyAssignment<S>],
    heatmap: &ArtifactKind,
    condition: Condition,
    exclude: &HashSet<String>,
) -> Result<DetectorRun<S>> {
    let detector_name = match heatmap {
        ArtifactKind::DetectorHeatmap(name) => name.clone(),
        other => other.to_string(),
    };
    let by_id = index_assignments(assignments);
    let (excluded, included): (Vec<_>, Vec<_>) = corpus.records().iter().partition(|r| exclude.contains(&r.id));
    for r in &excluded {
        log::info!("excluding `{}` from {detector_name}/{condition}", r.id);
    }
    let results: Vec<Result<ImageScore<S>>> = included
        .par_iter()
        .map(|record| {
            if !by_id.contains_key(record.id.as_str()) {
                return Err(Error::MissingAssignment(record.id.clone()));
            }
            let path = record.artifact(heatmap)?;
            let gt = record.load_mask()?;
            let map = crate::corpus::load_map::<S>(path)?;
            let aligned = align(&map, gt.width(), gt.height(), Resample::Soft)?;
            Ok(ImageScore {
                image_id: record.id.clone(),
                result: auroc(&aligned, &gt)?,
            })
        })
        .collect();
    let scores = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DetectorRun {
        detector_name,
        condition,
        scores,
        excluded: excluded.into_iter().map(|r| r.id.clone()).collect(),
    })
}

/// Count, defined count and mean of one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStats<S> {
    pub count: usize,
    pub defined: usize,
    pub mean: Option<S>,
}

impl<S: Score> BinStats<S> {
    pub fn undefined_count(&self) -> usize {
        self.count - self.defined
    }

    fn from_values(count: usize, values: &[S]) -> Self {
        let mean = (!values.is_empty()).then(|| values.iter().copied().sum::<S>() / S::count(values.len()));
        Self {
            count,
            defined: values.len(),
            mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinReport<S> {
    pub detector_name: String,
    pub condition: Condition,
    pub bins: [BinStats<S>; BIN_COUNT],
    pub overall: BinStats<S>,
    /// Excluded-list images plus run images without an assignment.
    pub excluded: usize,
}

impl<S: Score> BinReport<S> {
    /// Spread between the best and worst defined group means.
    pub fn range(&self) -> Option<S> {
        range_of(self.bins.iter().filter_map(|b| b.mean))
    }
}

fn range_of<S: Score>(values: impl Iterator<Item = S>) -> Option<S> {
    values
        .fold(None, |acc: Option<(S, S)>, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
        .map(|(lo, hi)| hi - lo)
}

/// Groups a run by saliency bin and averages the defined AuROCs.
pub fn bin_means<S: Score>(run: &DetectorRun<S>, assignments: &[SaliencyAssignment<S>]) -> BinReport<S> {
    let by_id = index_assignments(assignments);
    let mut counts = [0usize; BIN_COUNT];
    let mut values: [Vec<S>; BIN_COUNT] = Default::default();
    let mut unassigned = 0;
    for s in &run.scores {
        let Some(a) = by_id.get(s.image_id.as_str()) else {
            unassigned += 1;
            continue;
        };
        counts[a.bin.index() - 1] += 1;
        if let Some(v) = s.result.value {
            values[a.bin.index() - 1].push(v);
        }
    }
    let bins: [BinStats<S>; BIN_COUNT] = std::array::from_fn(|i| BinStats::from_values(counts[i], &values[i]));
    let all: Vec<S> = values.iter().flatten().copied().collect();
    let overall = BinStats::from_values(counts.iter().sum(), &all);
    BinReport {
        detector_name: run.detector_name.clone(),
        condition: run.condition,
        bins,
        overall,
        excluded: run.excluded.len() + unassigned,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinDelta<S> {
    pub bin: SaliencyBin,
    pub before: Option<S>,
    pub after: Option<S>,
}

impl<S: Score> BinDelta<S> {
    /// `after - before` when both group means exist.
    pub fn delta(&self) -> Option<S> {
        Some(self.after? - self.before?)
    }
}

/// Before/after comparison of one detector across saliency groups.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTable<S> {
    pub detector_name: String,
    pub before_condition: Condition,
    pub after_condition: Condition,
    pub bins: [BinDelta<S>; BIN_COUNT],
    pub before_range: Option<S>,
    pub after_range: Option<S>,
}

impl<S: Score> DeltaTable<S> {
    /// Whether the between-group spread shrank after the change.
    pub fn variation_shrank(&self) -> Option<bool> {
        Some(self.after_range? < self.before_range?)
    }
}

pub fn enhancement_delta<S: Score>(
    before: &DetectorRun<S>,
    after: &DetectorRun<S>,
    assignments: &[SaliencyAssignment<S>],
) -> Result<DeltaTable<S>> {
    let (b_ids, a_ids) = (before.image_ids(), after.image_ids());
    if b_ids != a_ids {
        let only_before: Vec<_> = b_ids.difference(&a_ids).take(3).copied().collect();
        let only_after: Vec<_> = a_ids.difference(&b_ids).take(3).copied().collect();
        return Err(Error::ImageSetMismatch(format!(
            "only before: {only_before:?}, only after: {only_after:?}"
        )));
    }
    let rb = bin_means(before, assignments);
    let ra = bin_means(after, assignments);
    let bins = std::array::from_fn(|i| BinDelta {
        bin: SaliencyBin::ALL[i],
        before: rb.bins[i].mean,
        after: ra.bins[i].mean,
    });
    Ok(DeltaTable {
        detector_name: after.detector_name.clone(),
        before_condition: before.condition,
        after_condition: after.condition,
        bins,
        before_range: rb.range(),
        after_range: ra.range(),
    })
}

/// Direction of a per-group series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
    Mixed,
    /// Fewer than two groups have data.
    Insufficient,
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::Increasing => "increasing",
            Trend::Decreasing => "decreasing",
            Trend::Flat => "flat",
            Trend::Mixed => "mixed",
            Trend::Insufficient => "insufficient",
        }
    }

    /// Classifies consecutive differences; `|d| <= tol` counts as no change.
    pub fn of<S: Score>(series: &[S], tol: S) -> Trend {
        if series.len() < 2 {
            return Trend::Insufficient;
        }
        let (mut up, mut down) = (false, false);
        for w in series.windows(2) {
            let d = w[1] - w[0];
            up |= d > tol;
            down |= d < -tol;
        }
        match (up, down) {
            (false, false) => Trend::Flat,
            (true, false) => Trend::Increasing,
            (false, true) => Trend::Decreasing,
            (true, true) => Trend::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticBin<S> {
    pub count: usize,
    pub mean: Option<SemanticChange<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTrend<S> {
    pub bins: [SemanticBin<S>; BIN_COUNT],
    /// One entry per component, in `COMPONENT_NAMES` order.
    pub trends: [Trend; 4],
    pub unassigned: usize,
}

const TREND_TOLERANCE: f64 = 1e-12;

pub fn semantic_trend<S: Score>(
    assignments: &[SaliencyAssignment<S>],
    results: &[(String, SemanticChange<S>)],
) -> SemanticTrend<S> {
    let by_id = index_assignments(assignments);
    let mut sums = [[S::zero(); 4]; BIN_COUNT];
    let mut counts = [0usize; BIN_COUNT];
    let mut unassigned = 0;
    for (id, change) in results {
        let Some(a) = by_id.get(id.as_str()) else {
            unassigned += 1;
            continue;
        };
        let slot = a.bin.index() - 1;
        counts[slot] += 1;
        for (s, c) in sums[slot].iter_mut().zip(change.components()) {
            *s = *s + c;
        }
    }
    let bins: [SemanticBin<S>; BIN_COUNT] = std::array::from_fn(|i| SemanticBin {
        count: counts[i],
        mean: (counts[i] > 0).then(|| SemanticChange::from_components(sums[i].map(|s| s / S::count(counts[i])))),
    });
    let trends = std::array::from_fn(|c| {
        let series: Vec<S> = bins.iter().filter_map(|b| b.mean.map(|m| m.components()[c])).collect();
        Trend::of(&series, S::lit(TREND_TOLERANCE))
    });
    SemanticTrend {
        bins,
        trends,
        unassigned,
    }
}
