//! Two-task bounding-box study responses and their aggregation into
//! per-pixel confidence maps.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{PixelMap, TamperMask};
use crate::metrics::{auroc, mean_recall, MetricResult};
use crate::scalar::Score;

/// Axis-aligned box in native image pixels. `x`/`y` may lie outside the
/// image; boxes are clamped when rasterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: i64,
    pub y: i64,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: i64, y: i64, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    /// Pixel ranges `[x0, x1) x [y0, y1)` covered inside a `width` x `height`
    /// image, or `None` when the clamped box is empty.
    pub fn clamp(&self, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w as i64).min(width as i64);
        let y1 = (self.y + self.h as i64).min(height as i64);
        (x0 < x1 && y0 < y1).then_some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
    }
}

/// Which of the two study questions a box list answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// "Which regions grab your attention the most?" Always asked first.
    Saliency,
    /// "Which regions do you believe were manipulated, if any?"
    Manipulation,
}

/// One participant's answers for one image (the exchange record).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResponse {
    #[serde(default)]
    pub study_id: String,
    #[serde(default)]
    pub session_id: String,
    pub image_id: String,
    pub participant_id: String,
    pub saliency_boxes: Vec<BoundingBox>,
    /// Empty means the participant judged the image pristine.
    #[serde(default)]
    pub manipulation_boxes: Vec<BoundingBox>,
    pub timestamp: DateTime<Utc>,
}

impl StudyResponse {
    pub fn boxes(&self, task: Task) -> &[BoundingBox] {
        match task {
            Task::Saliency => &self.saliency_boxes,
            Task::Manipulation => &self.manipulation_boxes,
        }
    }

    /// Schema checks against the image the response is for.
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidResponse(m));
        if self.image_id.is_empty() {
            return bad("empty image_id".into());
        }
        if self.participant_id.is_empty() {
            return bad("empty participant_id".into());
        }
        if self.saliency_boxes.is_empty() {
            return bad("saliency task needs at least one box".into());
        }
        for (task, boxes) in [
            (Task::Saliency, &self.saliency_boxes),
            (Task::Manipulation, &self.manipulation_boxes),
        ] {
            for b in boxes.iter() {
                if b.w == 0 || b.h == 0 {
                    return bad(format!("{task:?} box {b:?} has zero size"));
                }
                if b.clamp(width, height).is_none() {
                    return bad(format!("{task:?} box {b:?} lies outside the {width}x{height} image"));
                }
            }
        }
        Ok(())
    }
}

/// Union raster of a box list: a pixel is set iff at least one box covers it.
pub fn rasterize_boxes(boxes: &[BoundingBox], width: u32, height: u32) -> Result<TamperMask> {
    let mut mask = TamperMask::empty(width, height)?;
    for (x0, y0, x1, y1) in boxes.iter().filter_map(|b| b.clamp(width, height)) {
        for y in y0..y1 {
            for x in x0..x1 {
                mask.set(x, y);
            }
        }
    }
    Ok(mask)
}

/// Fraction of respondents covering each pixel; every value is `k / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap<S> {
    pub map: PixelMap<S>,
    pub respondent_count: usize,
}

/// Pointwise mean of each participant's union raster for one task.
pub fn aggregate_responses<S: Score>(
    responses: &[StudyResponse],
    task: Task,
    width: u32,
    height: u32,
) -> Result<ConfidenceMap<S>> {
    let first = responses
        .first()
        .ok_or(Error::EmptyInput("no responses to aggregate"))?;
    if let Some(other) = responses.iter().find(|r| r.image_id != first.image_id) {
        return Err(Error::MixedImageIds(first.image_id.clone(), other.image_id.clone()));
    }
    let mut cover = vec![0u32; width as usize * height as usize];
    for r in responses {
        let raster = rasterize_boxes(r.boxes(task), width, height)?;
        for (c, &bit) in cover.iter_mut().zip(raster.bits()) {
            *c += bit as u32;
        }
    }
    let n = S::count(responses.len());
    let values = cover.into_iter().map(|k| S::count(k as usize) / n).collect();
    Ok(ConfidenceMap {
        map: PixelMap::from_parts_unchecked(width, height, values),
        respondent_count: responses.len(),
    })
}

/// Saliency of the manipulation as seen by participants: Mean Recall of
/// the aggregated saliency-task map against the tamper mask.
pub fn human_saliency_score<S: Score>(responses: &[StudyResponse], gt: &TamperMask) -> Result<MetricResult<S>> {
    let agg = aggregate_responses::<S>(responses, Task::Saliency, gt.width(), gt.height())?;
    mean_recall(&agg.map, gt)
}

/// Human localization accuracy: AuROC of the aggregated manipulation-task
/// map against the tamper mask.
pub fn human_detection_score<S: Score>(responses: &[StudyResponse], gt: &TamperMask) -> Result<MetricResult<S>> {
    let agg = aggregate_responses::<S>(responses, Task::Manipulation, gt.width(), gt.height())?;
    auroc(&agg.map, gt)
}
