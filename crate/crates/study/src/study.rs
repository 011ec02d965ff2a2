//! Study state: session assembly, per-image task phases and stored responses.
//!
//! `Study` is a pure state machine. Every mutation is expressed as an
//! [`Event`]; `plan_*` methods validate a request and return the event
//! without changing anything, and `apply` commits it. Replaying a journal
//! through `apply` reproduces the exact state, including session counters,
//! so assignment stays deterministic across restarts.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use salbias_core::{BoundingBox, Corpus, StudyResponse};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StudyError};

pub const DEFAULT_IMAGES_PER_SESSION: usize = 10;
pub const DEFAULT_TARGET_REVIEWS: usize = 5;

/// An image participants can be shown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyImage {
    pub id: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study_id: String,
    pub images_per_session: usize,
    pub target_reviews_per_image: usize,
    pub shuffle_seed: u64,
    /// sha256 of the manifest the images came from, if any.
    #[serde(default)]
    pub corpus_sha256: String,
    pub images: Vec<StudyImage>,
}

impl StudyConfig {
    pub fn new(study_id: impl Into<String>, images: Vec<StudyImage>) -> Self {
        Self {
            study_id: study_id.into(),
            images_per_session: DEFAULT_IMAGES_PER_SESSION,
            target_reviews_per_image: DEFAULT_TARGET_REVIEWS,
            shuffle_seed: 0,
            corpus_sha256: String::new(),
            images,
        }
    }

    pub fn from_corpus(study_id: impl Into<String>, corpus: &Corpus) -> Self {
        let images = corpus
            .records()
            .iter()
            .map(|r| StudyImage {
                id: r.id.clone(),
                width: r.width,
                height: r.height,
            })
            .collect();
        Self {
            corpus_sha256: corpus.fingerprint().to_string(),
            ..Self::new(study_id, images)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(StudyError::InvalidConfig(m.to_string()));
        if self.study_id.is_empty() || self.study_id.contains('/') {
            return bad("study_id must be nonempty and contain no `/`");
        }
        if self.images_per_session == 0 {
            return bad("images_per_session must be at least 1");
        }
        if self.target_reviews_per_image == 0 {
            return bad("target_reviews_per_image must be at least 1");
        }
        let mut seen = std::collections::HashSet::new();
        for img in &self.images {
            if !seen.insert(img.id.as_str()) {
                return Err(StudyError::InvalidConfig(format!("duplicate image `{}`", img.id)));
            }
            if img.width == 0 || img.height == 0 {
                return Err(StudyError::InvalidConfig(format!("image `{}` has zero size", img.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Open,
    Complete,
    Abandoned,
}

/// Per-image progress within a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageStatus {
    Pending,
    /// Saliency boxes recorded; waiting for the manipulation task.
    SaliencyAnswered,
    Stored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionImage {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub status: ImageStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub study_id: String,
    pub participant_id: String,
    pub images: Vec<SessionImage>,
    pub state: SessionState,
}

impl Session {
    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.iter().map(|i| i.image_id.as_str())
    }

    pub fn stored_count(&self) -> usize {
        self.images.iter().filter(|i| i.status == ImageStatus::Stored).count()
    }

    fn image_mut(&mut self, image_id: &str) -> Option<&mut SessionImage> {
        self.images.iter_mut().find(|i| i.image_id == image_id)
    }
}

/// Which part of the two-task protocol a submission answers.
///
/// Clients either send the saliency boxes first and the manipulation boxes
/// second, or one combined record carrying both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Saliency,
    Manipulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    #[serde(default)]
    pub phase: Option<Phase>,
    #[serde(flatten)]
    pub response: StudyResponse,
}

impl From<StudyResponse> for Submission {
    fn from(response: StudyResponse) -> Self {
        Self { phase: None, response }
    }
}

/// Journal record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Started {
        config: StudyConfig,
    },
    SessionOpened {
        session_id: String,
        participant_id: String,
        image_ids: Vec<String>,
    },
    SaliencyAnswered {
        session_id: String,
        image_id: String,
        boxes: Vec<BoundingBox>,
        timestamp: DateTime<Utc>,
    },
    ResponseStored {
        response: StudyResponse,
    },
    SessionAbandoned {
        session_id: String,
    },
}

/// Result of an accepted submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub session_id: String,
    pub image_id: String,
    /// True once the full two-task response is stored.
    pub stored: bool,
    pub session_progress: usize,
    pub session_size: usize,
    pub session_state: SessionState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageProgress {
    pub image_id: String,
    pub completed: usize,
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub study_id: String,
    pub target_reviews_per_image: usize,
    pub total_responses: usize,
    pub sessions_open: usize,
    pub sessions_complete: usize,
    pub sessions_abandoned: usize,
    pub images: Vec<ImageProgress>,
    /// Every image has reached the target.
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct Study {
    config: StudyConfig,
    image_index: HashMap<String, usize>,
    sessions: BTreeMap<String, Session>,
    sessions_issued: u64,
    open_by_participant: HashMap<String, String>,
    completed: Vec<usize>,
    pending: Vec<usize>,
    partial: HashMap<(String, String), (Vec<BoundingBox>, DateTime<Utc>)>,
    responses: Vec<StudyResponse>,
}

impl Study {
    pub fn new(config: StudyConfig) -> Result<Self> {
        config.validate()?;
        let image_index = config
            .images
            .iter()
            .enumerate()
            .map(|(i, img)| (img.id.clone(), i))
            .collect();
        let n = config.images.len();
        Ok(Self {
            config,
            image_index,
            sessions: BTreeMap::new(),
            sessions_issued: 0,
            open_by_participant: HashMap::new(),
            completed: vec![0; n],
            pending: vec![0; n],
            partial: HashMap::new(),
            responses: Vec::new(),
        })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn session(&self, session_id: &str) -> Option<&Session> {
        self.sessions.get(session_id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn responses(&self) -> &[StudyResponse] {
        &self.responses
    }

    pub fn image(&self, image_id: &str) -> Option<&StudyImage> {
        self.image_index.get(image_id).map(|&i| &self.config.images[i])
    }

    /// Completed reviews per image, in configuration order.
    pub fn review_counts(&self) -> &[usize] {
        &self.completed
    }

    pub fn progress(&self) -> Progress {
        let count = |s: SessionState| self.sessions.values().filter(|x| x.state == s).count();
        Progress {
            study_id: self.config.study_id.clone(),
            target_reviews_per_image: self.config.target_reviews_per_image,
            total_responses: self.responses.len(),
            sessions_open: count(SessionState::Open),
            sessions_complete: count(SessionState::Complete),
            sessions_abandoned: count(SessionState::Abandoned),
            images: self
                .config
                .images
                .iter()
                .enumerate()
                .map(|(i, img)| ImageProgress {
                    image_id: img.id.clone(),
                    completed: self.completed[i],
                    pending: self.pending[i],
                })
                .collect(),
            finished: self
                .completed
                .iter()
                .all(|&c| c >= self.config.target_reviews_per_image),
        }
    }

    fn next_session_id(&self) -> String {
        format!("{}-s{:06}", self.config.study_id, self.sessions_issued + 1)
    }

    /// Chooses the images for a new session.
    ///
    /// Images whose completed-plus-pending count is below the target are
    /// eligible. They are shuffled with a generator seeded from the study
    /// seed and the number of sessions issued so far, then stably sorted by
    /// load, so the least-reviewed images win and ties fall in seeded order.
    /// The chosen images are shuffled again for presentation.
    pub fn plan_session(&self, participant_id: &str) -> Result<Event> {
        if participant_id.is_empty() {
            return Err(StudyError::SchemaViolation("empty participant id".into()));
        }
        if let Some(sid) = self.open_by_participant.get(participant_id) {
            return Err(StudyError::ParticipantBusy {
                participant: participant_id.to_string(),
                session_id: sid.clone(),
            });
        }
        let target = self.config.target_reviews_per_image;
        let load = |i: usize| self.completed[i] + self.pending[i];
        let mut eligible: Vec<usize> = (0..self.config.images.len()).filter(|&i| load(i) < target).collect();
        if eligible.is_empty() {
            return Err(StudyError::StudyExhausted);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.shuffle_seed);
        rng.set_stream(self.sessions_issued);
        eligible.shuffle(&mut rng);
        eligible.sort_by_key(|&i| load(i));
        eligible.truncate(self.config.images_per_session);
        eligible.shuffle(&mut rng);
        Ok(Event::SessionOpened {
            session_id: self.next_session_id(),
            participant_id: participant_id.to_string(),
            image_ids: eligible.into_iter().map(|i| self.config.images[i].id.clone()).collect(),
        })
    }

    /// Validates a submission and returns the event that records it.
    pub fn plan_response(&self, session_id: &str, submission: &Submission) -> Result<Event> {
        let session = self
            .sessions
            .get(session_id)
            .ok_or_else(|| StudyError::UnknownSession(session_id.to_string()))?;
        let r = &submission.response;
        let slot = session
            .images
            .iter()
            .find(|i| i.image_id == r.image_id)
            .ok_or_else(|| StudyError::ImageNotInSession {
                session_id: session_id.to_string(),
                image_id: r.image_id.clone(),
            })?;
        let duplicate = |what| StudyError::DuplicateResponse {
            session_id: session_id.to_string(),
            image_id: r.image_id.clone(),
            what,
        };
        if slot.status == ImageStatus::Stored {
            return Err(duplicate("stored response"));
        }
        if session.state != SessionState::Open {
            return Err(StudyError::SessionClosed(session_id.to_string()));
        }
        let schema = |m: String| Err(StudyError::SchemaViolation(m));
        if !r.session_id.is_empty() && r.session_id != session_id {
            return schema(format!("body names session `{}`", r.session_id));
        }
        if !r.study_id.is_empty() && r.study_id != self.config.study_id {
            return schema(format!("body names study `{}`", r.study_id));
        }
        if r.participant_id != session.participant_id {
            return schema(format!(
                "participant `{}` does not own session `{session_id}`",
                r.participant_id
            ));
        }

        let key = (session_id.to_string(), r.image_id.clone());
        let earlier = self.partial.get(&key);
        let order = |m: &str| Err(StudyError::TaskOrderViolation(m.to_string()));
        let saliency_boxes = match (submission.phase, earlier) {
            (Some(Phase::Saliency), Some(_)) => return Err(duplicate("saliency answer")),
            (Some(Phase::Saliency), None) => {
                if !r.manipulation_boxes.is_empty() {
                    return order("manipulation boxes sent with the saliency phase");
                }
                if r.saliency_boxes.is_empty() {
                    return schema("saliency task needs at least one box".into());
                }
                r.saliency_boxes.clone()
            }
            (Some(Phase::Manipulation), None) => return order("manipulation task answered before the saliency task"),
            (None, None) if r.saliency_boxes.is_empty() && !r.manipulation_boxes.is_empty() => {
                return order("manipulation boxes submitted without saliency boxes")
            }
            (None, None) => r.saliency_boxes.clone(),
            (_, Some((first, _))) => {
                if !r.saliency_boxes.is_empty() && &r.saliency_boxes != first {
                    return schema("saliency boxes differ from the recorded saliency answer".into());
                }
                first.clone()
            }
        };

        let image = self.image(&r.image_id).expect("session images come from the config");
        let mut full = StudyResponse {
            study_id: self.config.study_id.clone(),
            session_id: session_id.to_string(),
            image_id: r.image_id.clone(),
            participant_id: r.participant_id.clone(),
            saliency_boxes,
            manipulation_boxes: r.manipulation_boxes.clone(),
            timestamp: r.timestamp,
        };
        full.validate(image.width, image.height)
            .map_err(|e| StudyError::SchemaViolation(e.to_string()))?;

        if submission.phase == Some(Phase::Saliency) {
            return Ok(Event::SaliencyAnswered {
                session_id: session_id.to_string(),
                image_id: full.image_id,
                boxes: full.saliency_boxes,
                timestamp: full.timestamp,
            });
        }
        if let Some((_, ts)) = earlier {
            full.timestamp = full.timestamp.max(*ts);
        }
        Ok(Event::ResponseStored { response: full })
    }

    pub fn plan_abandon(&self, session_id: &str) -> Result<Event> {
        let session = self
            .sessions
            .get(session_id)
            .ok_or_else(|| StudyError::UnknownSession(session_id.to_string()))?;
        if session.state != SessionState::Open {
            return Err(StudyError::SessionClosed(session_id.to_string()));
        }
        Ok(Event::SessionAbandoned {
            session_id: session_id.to_string(),
        })
    }

    /// Commits an event. Returns `false` for a replayed duplicate, which is
    /// ignored. Events produced by `plan_*` on the current state always apply.
    pub fn apply(&mut self, event: &Event) -> Result<bool> {
        match event {
            Event::Started { config } => {
                if config != &self.config {
                    return Err(StudyError::InvalidConfig(
                        "journal was written for a different study configuration".into(),
                    ));
                }
                Ok(true)
            }
            Event::SessionOpened {
                session_id,
                participant_id,
                image_ids,
            } => {
                if self.sessions.contains_key(session_id) {
                    return Ok(false);
                }
                let mut images = Vec::with_capacity(image_ids.len());
                for id in image_ids {
                    let img = self.image(id).ok_or_else(|| StudyError::UnknownImage(id.clone()))?;
                    images.push(SessionImage {
                        image_id: id.clone(),
                        width: img.width,
                        height: img.height,
                        status: ImageStatus::Pending,
                    });
                }
                for id in image_ids {
                    self.pending[self.image_index[id]] += 1;
                }
                self.sessions_issued += 1;
                self.open_by_participant
                    .insert(participant_id.clone(), session_id.clone());
                self.sessions.insert(
                    session_id.clone(),
                    Session {
                        session_id: session_id.clone(),
                        study_id: self.config.study_id.clone(),
                        participant_id: participant_id.clone(),
                        images,
                        state: SessionState::Open,
                    },
                );
                Ok(true)
            }
            Event::SaliencyAnswered {
                session_id,
                image_id,
                boxes,
                timestamp,
            } => {
                let key = (session_id.clone(), image_id.clone());
                if self.partial.contains_key(&key) {
                    return Ok(false);
                }
                let slot = self.slot_mut(session_id, image_id)?;
                if slot.status != ImageStatus::Pending {
                    return Ok(false);
                }
                slot.status = ImageStatus::SaliencyAnswered;
                self.partial.insert(key, (boxes.clone(), *timestamp));
                Ok(true)
            }
            Event::ResponseStored { response } => {
                let slot = self.slot_mut(&response.session_id, &response.image_id)?;
                if slot.status == ImageStatus::Stored {
                    return Ok(false);
                }
                slot.status = ImageStatus::Stored;
                let idx = self.image_index[&response.image_id];
                self.partial
                    .remove(&(response.session_id.clone(), response.image_id.clone()));
                let session = self.sessions.get_mut(&response.session_id).expect("slot found");
                if session.state == SessionState::Open {
                    self.pending[idx] -= 1;
                }
                self.completed[idx] += 1;
                if session.images.iter().all(|i| i.status == ImageStatus::Stored) {
                    session.state = SessionState::Complete;
                    self.open_by_participant.remove(&session.participant_id);
                }
                self.responses.push(response.clone());
                Ok(true)
            }
            Event::SessionAbandoned { session_id } => {
                let session = self
                    .sessions
                    .get_mut(session_id)
                    .ok_or_else(|| StudyError::UnknownSession(session_id.clone()))?;
                if session.state != SessionState::Open {
                    return Ok(false);
                }
                session.state = SessionState::Abandoned;
                for img in &session.images {
                    if img.status != ImageStatus::Stored {
                        self.pending[self.image_index[&img.image_id]] -= 1;
                    }
                }
                self.open_by_participant.remove(&session.participant_id);
                Ok(true)
            }
        }
    }

    fn slot_mut(&mut self, session_id: &str, image_id: &str) -> Result<&mut SessionImage> {
        let session = self
            .sessions
            .get_mut(session_id)
            .ok_or_else(|| StudyError::UnknownSession(session_id.to_string()))?;
        session
            .image_mut(image_id)
            .ok_or_else(|| StudyError::ImageNotInSession {
                session_id: session_id.to_string(),
                image_id: image_id.to_string(),
            })
    }
}
