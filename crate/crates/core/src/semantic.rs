//! Semantic change between pristine and tampered tag predictions.
//!
//! Tag lists come from an external vision-language model run several times
//! per image. Tag report files look like this, with a tab between each tag
//! and its probability:
//!
//! ```text
//! image_id = rt-001
//! variant = pristine
//! model = clip-vit-b32
//! model_version = 1
//! noun_corpus = nouns-v1
//! [trial 1]
//! dog    0.30
//! grass  0.20
//! ...
//! [trial 2]
//! ...
//! ```
//!
//! Tag and probability are tab separated; blank and `#` lines are ignored.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Score;

/// Top-k size used by the overlap, IoU and probability-change metrics.
pub const TOP_K: usize = 5;

/// Number of stochastic trials per image variant unless configured otherwise.
pub const DEFAULT_TRIALS: usize = 5;

/// Ranked (tag, probability) list from one model inference.
#[derive(Debug, Clone, PartialEq)]
pub struct TagTrial<S> {
    /// 1-based position in its report.
    pub trial_index: usize,
    entries: Vec<(String, S)>,
}

impl<S: Score> TagTrial<S> {
    /// Validates uniqueness, range and nonincreasing order. Length is
    /// checked where a metric needs it.
    pub fn new(trial_index: usize, entries: Vec<(String, S)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (tag, p) in &entries {
            if tag.is_empty() || tag.contains(char::is_whitespace) {
                return Err(Error::InvalidTrial(format!("bad tag `{tag}`")));
            }
            if !seen.insert(tag.as_str()) {
                return Err(Error::InvalidTrial(format!("tag `{tag}` repeated")));
            }
            if !p.in_unit_interval() {
                return Err(Error::InvalidTrial(format!(
                    "probability {p} of `{tag}` outside [0, 1]"
                )));
            }
        }
        if let Some(w) = entries.windows(2).find(|w| w[0].1 < w[1].1) {
            return Err(Error::InvalidTrial(format!(
                "not sorted: `{}` {} before `{}` {}",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
        Ok(Self { trial_index, entries })
    }

    pub fn entries(&self) -> &[(String, S)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn probability(&self, tag: &str) -> Option<S> {
        self.entries.iter().find(|(t, _)| t == tag).map(|(_, p)| *p)
    }
}

/// The `k` highest-probability tags, ties broken by lexicographic tag order.
pub fn top_k<S: Score>(trial: &TagTrial<S>, k: usize) -> Result<Vec<&str>> {
    if trial.len() < k {
        return Err(Error::TooFewTags {
            have: trial.len(),
            need: k,
        });
    }
    let mut ranked: Vec<&(String, S)> = trial.entries.iter().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("validated probabilities")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked.into_iter().take(k).map(|(t, _)| t.as_str()).collect())
}

/// The four semantic change components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticChange<S> {
    pub top1_overlap: S,
    pub top5_overlap: S,
    pub top5_iou: S,
    /// Summed absolute probability drift of the pristine top-5 tags, in `[0, 5]`.
    pub top5_prob_change: S,
}

impl<S: Score> SemanticChange<S> {
    pub fn components(&self) -> [S; 4] {
        [
            self.top1_overlap,
            self.top5_overlap,
            self.top5_iou,
            self.top5_prob_change,
        ]
    }

    pub fn from_components(c: [S; 4]) -> Self {
        Self {
            top1_overlap: c[0],
            top5_overlap: c[1],
            top5_iou: c[2],
            top5_prob_change: c[3],
        }
    }
}

pub const COMPONENT_NAMES: [&str; 4] = ["top1_overlap", "top5_overlap", "top5_iou", "top5_prob_change"];

/// Metrics for one (pristine, tampered) trial pair.
///
/// Probability change is anchored on the pristine top-5 tags; a tag absent
/// from the tampered list counts as probability 0.
pub fn trial_metrics<S: Score>(pristine: &TagTrial<S>, tampered: &TagTrial<S>) -> Result<SemanticChange<S>> {
    let p5 = top_k(pristine, TOP_K)?;
    let t5 = top_k(tampered, TOP_K)?;
    let top1_overlap = if p5[0] == t5[0] { S::one() } else { S::zero() };

    let p_set: HashSet<&str> = p5.iter().copied().collect();
    let t_set: HashSet<&str> = t5.iter().copied().collect();
    let inter = p_set.intersection(&t_set).count();
    let union = p_set.union(&t_set).count();

    let tampered_probs: HashMap<&str, S> = tampered.entries.iter().map(|(t, p)| (t.as_str(), *p)).collect();
    let mut change = S::zero();
    for tag in &p5 {
        let before = pristine.probability(tag).expect("tag from pristine list");
        let after = match tampered_probs.get(tag) {
            Some(&p) => p,
            None => {
                log::debug!(
                    "tag `{tag}` missing from tampered trial {}, using 0",
                    tampered.trial_index
                );
                S::zero()
            }
        };
        change = change + (before - after).abs();
    }

    Ok(SemanticChange {
        top1_overlap,
        top5_overlap: S::count(inter) / S::count(TOP_K),
        top5_iou: S::count(inter) / S::count(union),
        top5_prob_change: change,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Pristine,
    Tampered,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Pristine => "pristine",
            Variant::Tampered => "tampered",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pristine" => Ok(Variant::Pristine),
            "tampered" => Ok(Variant::Tampered),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

/// All trials of one image variant.
#[derive(Debug, Clone, PartialEq)]
pub struct TagReport<S> {
    pub image_id: String,
    pub variant: Variant,
    pub model: String,
    pub model_version: String,
    pub noun_corpus: String,
    pub trials: Vec<TagTrial<S>>,
}

/// Mean of the per-pair metrics, pairing trial `i` with trial `i`.
pub fn aggregate_semantic<S: Score>(pristine: &TagReport<S>, tampered: &TagReport<S>) -> Result<SemanticChange<S>> {
    if pristine.variant != Variant::Pristine {
        return Err(Error::VariantMismatch {
            expected: "pristine",
            found: pristine.variant.as_str(),
        });
    }
    if tampered.variant != Variant::Tampered {
        return Err(Error::VariantMismatch {
            expected: "tampered",
            found: tampered.variant.as_str(),
        });
    }
    if pristine.image_id != tampered.image_id {
        return Err(Error::ImageIdMismatch(
            pristine.image_id.clone(),
            tampered.image_id.clone(),
        ));
    }
    if pristine.trials.len() != tampered.trials.len() {
        return Err(Error::TrialCountMismatch {
            pristine: pristine.trials.len(),
            tampered: tampered.trials.len(),
        });
    }
    if pristine.trials.is_empty() {
        return Err(Error::EmptyInput("tag report has no trials"));
    }
    let mut sums = [S::zero(); 4];
    for (p, t) in pristine.trials.iter().zip(&tampered.trials) {
        let m = trial_metrics(p, t)?;
        for (s, c) in sums.iter_mut().zip(m.components()) {
            *s = *s + c;
        }
    }
    let n = S::count(pristine.trials.len());
    Ok(SemanticChange::from_components(sums.map(|s| s / n)))
}

/// (trial number, header line, entries)
type TrialBlock<S> = (usize, usize, Vec<(String, S)>);

pub fn parse_tag_report<S: Score>(text: &str, path: &Path) -> Result<TagReport<S>> {
    let err = |line: usize, m: String| Error::parse(path, line, m);
    let mut header: HashMap<&str, (&str, usize)> = HashMap::new();
    let mut trials: Vec<TrialBlock<S>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let idx = inner
                .strip_prefix("trial ")
                .and_then(|n| n.trim().parse::<usize>().ok())
                .ok_or_else(|| err(line_no, format!("bad trial header `{line}`")))?;
            if idx != trials.len() + 1 {
                return Err(err(
                    line_no,
                    format!("expected trial {}, found {idx}", trials.len() + 1),
                ));
            }
            trials.push((idx, line_no, Vec::new()));
            continue;
        }
        match trials.last_mut() {
            None => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| err(line_no, format!("expected `key = value`, found `{line}`")))?;
                let (k, v) = (k.trim(), v.trim());
                if header.insert(k, (v, line_no)).is_some() {
                    return Err(err(line_no, format!("header `{k}` repeated")));
                }
            }
            Some((_, _, entries)) => {
                let (tag, p) = line
                    .split_once('\t')
                    .ok_or_else(|| err(line_no, format!("expected `tag<TAB>probability`, found `{line}`")))?;
                let p: f64 = p
                    .trim()
                    .parse()
                    .map_err(|_| err(line_no, format!("bad probability `{}`", p.trim())))?;
                entries.push((tag.trim().to_string(), S::lit(p)));
            }
        }
    }
    let mut field = |key: &str| -> Result<String> {
        header
            .remove(key)
            .map(|(v, _)| v.to_string())
            .ok_or_else(|| err(1, format!("missing header `{key}`")))
    };
    let image_id = field("image_id")?;
    let variant = field("variant")?.parse::<Variant>().map_err(|m| err(1, m))?;
    let model = field("model")?;
    let model_version = field("model_version")?;
    let noun_corpus = field("noun_corpus")?;
    if let Some((k, (_, line))) = header.into_iter().next() {
        return Err(err(line, format!("unknown header `{k}`")));
    }
    if trials.is_empty() {
        return Err(err(1, "no trial blocks".into()));
    }
    let trials = trials
        .into_iter()
        .map(|(idx, line, entries)| {
            let trial = TagTrial::new(idx, entries).map_err(|e| err(line, e.to_string()))?;
            if trial.len() < TOP_K {
                return Err(Error::TooFewTags {
                    have: trial.len(),
                    need: TOP_K,
                });
            }
            Ok(trial)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TagReport {
        image_id,
        variant,
        model,
        model_version,
        noun_corpus,
        trials,
    })
}

pub fn load_tag_report<S: Score>(path: impl AsRef<Path>) -> Result<TagReport<S>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tag_report(&text, path)
}

pub fn render_tag_report<S: Score>(report: &TagReport<S>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "image_id = {}", report.image_id);
    let _ = writeln!(out, "variant = {}", report.variant);
    let _ = writeln!(out, "model = {}", report.model);
    let _ = writeln!(out, "model_version = {}", report.model_version);
    let _ = writeln!(out, "noun_corpus = {}", report.noun_corpus);
    // Blocks are numbered by position, which is what the parser expects.
    for (i, t) in report.trials.iter().enumerate() {
        let _ = writeln!(out, "[trial {}]", i + 1);
        for (tag, p) in t.entries() {
            let _ = writeln!(out, "{tag}\t{p}");
        }
    }
    out
}
