//! Saliency fusion, manipulation saliency scoring and five-group stratification.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{align, PixelMap, Resample, TamperMask};
use crate::metrics::{mean_recall, MetricResult};
use crate::scalar::Score;

/// Number of saliency groups.
pub const BIN_COUNT: usize = 5;

const UPPER_EDGES: [f64; BIN_COUNT] = [0.2, 0.4, 0.6, 0.8, 1.0];
const LABELS: [&str; BIN_COUNT] = ["< .2", ".2 - .4", ".4 - .6", ".6 - .8", "> .8"];

/// One of the five saliency groups: `[0, .2)`, `[.2, .4)`, `[.4, .6)`,
/// `[.6, .8)` and `[.8, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SaliencyBin(u8);

impl SaliencyBin {
    pub const ALL: [SaliencyBin; BIN_COUNT] = [
        SaliencyBin(1),
        SaliencyBin(2),
        SaliencyBin(3),
        SaliencyBin(4),
        SaliencyBin(5),
    ];

    /// 1-based index.
    pub fn from_index(index: usize) -> Option<Self> {
        (1..=BIN_COUNT).contains(&index).then_some(SaliencyBin(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub(crate) fn slot(self) -> usize {
        self.index() - 1
    }

    pub fn lower(self) -> f64 {
        if self.0 == 1 {
            0.0
        } else {
            UPPER_EDGES[self.slot() - 1]
        }
    }

    pub fn upper(self) -> f64 {
        UPPER_EDGES[self.slot()]
    }

    pub fn label(self) -> &'static str {
        LABELS[self.slot()]
    }

    /// Whether `score` falls in this bin (half-open, with 1.0 folded into bin 5).
    pub fn contains<S: Score>(self, score: S) -> bool {
        assign_bin(score).map(|b| b == self).unwrap_or(false)
    }
}

impl fmt::Display for SaliencyBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Maps a Mean Recall score to its saliency group.
pub fn assign_bin<S: Score>(score: S) -> Result<SaliencyBin> {
    if !score.in_unit_interval() {
        return Err(Error::OutOfRange(score.to_f64().unwrap_or(f64::NAN)));
    }
    let index = UPPER_EDGES[..BIN_COUNT - 1]
        .iter()
        .take_while(|&&edge| score >= S::lit(edge))
        .count();
    Ok(SaliencyBin(index as u8 + 1))
}

/// Pointwise mean of pre-aligned saliency maps.
pub fn fuse_saliency<S: Score>(maps: &[PixelMap<S>]) -> Result<PixelMap<S>> {
    let first = maps.first().ok_or(Error::EmptyInput("no saliency maps to fuse"))?;
    for m in &maps[1..] {
        m.check_same_dims(first.width(), first.height())?;
    }
    if maps.len() == 1 {
        return Ok(first.clone());
    }
    let n = S::count(maps.len());
    let values = (0..first.values().len())
        .map(|i| {
            let sum: S = maps.iter().map(|m| m.values()[i]).sum();
            // Rounding can push the mean a hair past the inputs' extremes.
            let (lo, hi) = maps.iter().fold((S::one(), S::zero()), |(lo, hi), m| {
                (lo.min(m.values()[i]), hi.max(m.values()[i]))
            });
            (sum / n).max(lo).min(hi)
        })
        .collect();
    Ok(PixelMap::from_parts_unchecked(first.width(), first.height(), values))
}

/// Mean Recall of a fused saliency map against the manipulation mask,
/// after aligning the map to the mask's resolution.
pub fn saliency_score<S: Score>(fused: &PixelMap<S>, gt: &TamperMask) -> Result<MetricResult<S>> {
    let aligned = align(fused, gt.width(), gt.height(), Resample::Soft)?;
    mean_recall(&aligned, gt)
}

/// Where a saliency score came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaliencySource {
    MachineFused,
    HumanStudy,
}

impl SaliencySource {
    pub fn as_str(self) -> &'static str {
        match self {
            SaliencySource::MachineFused => "machine-fused",
            SaliencySource::HumanStudy => "human-study",
        }
    }
}

impl FromStr for SaliencySource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "machine-fused" => Ok(SaliencySource::MachineFused),
            "human-study" => Ok(SaliencySource::HumanStudy),
            other => Err(format!("unknown saliency source `{other}`")),
        }
    }
}

/// Saliency score and group of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyAssignment<S> {
    pub image_id: String,
    pub score: S,
    pub bin: SaliencyBin,
    pub source: SaliencySource,
}

impl<S: Score> SaliencyAssignment<S> {
    pub fn new(image_id: impl Into<String>, score: S, source: SaliencySource) -> Result<Self> {
        Ok(Self {
            image_id: image_id.into(),
            score,
            bin: assign_bin(score)?,
            source,
        })
    }
}

/// Per-group image counts and dataset proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct BinDistribution<S> {
    pub counts: [usize; BIN_COUNT],
    pub proportions: [S; BIN_COUNT],
}

impl<S: Score> BinDistribution<S> {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Associative merge of two partial histograms.
    pub fn merge(&self, other: &Self) -> Self {
        let mut counts = self.counts;
        for (c, o) in counts.iter_mut().zip(other.counts) {
            *c += o;
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: [usize; BIN_COUNT]) -> Self {
        let total: usize = counts.iter().sum();
        let proportions = if total == 0 {
            [S::zero(); BIN_COUNT]
        } else {
            counts.map(|c| S::count(c) / S::count(total))
        };
        Self { counts, proportions }
    }
}

pub fn bin_distribution<S: Score>(assignments: &[SaliencyAssignment<S>]) -> BinDistribution<S> {
    let mut counts = [0usize; BIN_COUNT];
    for a in assignments {
        counts[a.bin.slot()] += 1;
    }
    BinDistribution::from_counts(counts)
}
