//! Durable study service: a single writer appends to the journal before
//! mutating state, and readers get the last published snapshot.

use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use crate::error::{Result, StudyError};
use crate::journal::Journal;
use crate::study::{Ack, Event, Progress, Session, Study, StudyConfig, Submission};

/// Read-only view published after every committed event.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub progress: Progress,
}

struct Writer {
    journal: Journal<Event>,
    study: Study,
}

pub struct StudyService {
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl StudyService {
    /// Opens the journal at `path`, replaying any earlier run of the same
    /// study. A fresh journal starts with the configuration record.
    pub fn open(config: StudyConfig, path: impl AsRef<Path>) -> Result<Self> {
        let mut study = Study::new(config)?;
        let (mut journal, events) = Journal::<Event>::open(path)?;
        match events.first() {
            None => journal.append(&Event::Started {
                config: study.config().clone(),
            })?,
            Some(Event::Started { .. }) => {}
            Some(_) => {
                return Err(StudyError::Journal {
                    path: journal.path().to_path_buf(),
                    message: "journal does not start with a study configuration".into(),
                })
            }
        }
        let mut ignored = 0;
        for ev in &events {
            if !study.apply(ev)? {
                ignored += 1;
            }
        }
        if ignored > 0 {
            log::warn!(
                "{}: ignored {ignored} duplicate journal records",
                journal.path().display()
            );
        }
        log::info!(
            "study `{}`: replayed {} records, {} stored responses",
            study.config().study_id,
            events.len(),
            study.responses().len()
        );
        let snapshot = RwLock::new(Arc::new(Snapshot {
            progress: study.progress(),
        }));
        Ok(Self {
            writer: Mutex::new(Writer { journal, study }),
            snapshot,
        })
    }

    pub fn study_id(&self) -> String {
        self.snapshot().progress.study_id.clone()
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn progress(&self) -> Progress {
        self.snapshot().progress.clone()
    }

    fn commit<T>(
        &self,
        plan: impl FnOnce(&Study) -> Result<Event>,
        then: impl FnOnce(&Study, &Event) -> T,
    ) -> Result<T> {
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let event = plan(&w.study)?;
        // Journal first: state only changes once the record is durable.
        w.journal.append(&event)?;
        w.study.apply(&event)?;
        let out = then(&w.study, &event);
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(Snapshot {
            progress: w.study.progress(),
        });
        Ok(out)
    }

    pub fn next_session(&self, participant_id: &str) -> Result<Session> {
        self.commit(
            |s| s.plan_session(participant_id),
            |s, ev| match ev {
                Event::SessionOpened { session_id, .. } => s.session(session_id).expect("just opened").clone(),
                _ => unreachable!(),
            },
        )
    }

    /// Persists a submission; the acknowledgment is returned only after
    /// the record is on disk.
    pub fn record_response(&self, session_id: &str, submission: &Submission) -> Result<Ack> {
        self.commit(
            |s| s.plan_response(session_id, submission),
            |s, ev| {
                let session = s.session(session_id).expect("validated");
                Ack {
                    session_id: session_id.to_string(),
                    image_id: submission.response.image_id.clone(),
                    stored: matches!(ev, Event::ResponseStored { .. }),
                    session_progress: session.stored_count(),
                    session_size: session.images.len(),
                    session_state: session.state,
                }
            },
        )
    }

    pub fn abandon_session(&self, session_id: &str) -> Result<Session> {
        self.commit(
            |s| s.plan_abandon(session_id),
            |s, _| s.session(session_id).expect("validated").clone(),
        )
    }

    pub fn session(&self, session_id: &str) -> Option<Session> {
        self.with_study(|s| s.session(session_id).cloned())
    }

    /// Runs `f` against the live state under the writer lock.
    pub fn with_study<T>(&self, f: impl FnOnce(&Study) -> T) -> T {
        f(&self.writer.lock().unwrap_or_else(|e| e.into_inner()).study)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::StudyImage;
    use chrono::DateTime;
    use salbias_core::{BoundingBox, StudyResponse};

    fn config() -> StudyConfig {
        let images = (0..4)
            .map(|i| StudyImage {
                id: format!("i{i}"),
                width: 8,
                height: 8,
            })
            .collect();
        StudyConfig {
            images_per_session: 2,
            target_reviews_per_image: 2,
            ..StudyConfig::new("s", images)
        }
    }

    fn answer(sess: &Session, image_id: &str) -> Submission {
        StudyResponse {
            study_id: String::new(),
            session_id: sess.session_id.clone(),
            image_id: image_id.into(),
            participant_id: sess.participant_id.clone(),
            saliency_boxes: vec![BoundingBox::new(0, 0, 2, 2)],
            manipulation_boxes: vec![],
            timestamp: DateTime::from_timestamp(0, 0).unwrap(),
        }
        .into()
    }

    #[test]
    fn state_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("study.jsonl");
        let svc = StudyService::open(config(), &path).unwrap();
        let sess = svc.next_session("p").unwrap();
        let ack = svc
            .record_response(&sess.session_id, &answer(&sess, &sess.images[0].image_id))
            .unwrap();
        assert!(ack.stored);
        assert_eq!((ack.session_progress, ack.session_size), (1, 2));
        assert_eq!(svc.progress().total_responses, 1);
        drop(svc);

        let svc = StudyService::open(config(), &path).unwrap();
        assert_eq!(svc.progress().total_responses, 1);
        let err = svc
            .record_response(&sess.session_id, &answer(&sess, &sess.images[0].image_id))
            .unwrap_err();
        assert_eq!(err.kind(), "DuplicateResponse");
        assert_eq!(svc.next_session("p").unwrap_err().kind(), "ParticipantBusy");
        let next = svc.next_session("q").unwrap();
        assert_eq!(next.session_id, "s-s000002");
    }

    #[test]
    fn rejected_submissions_are_not_journaled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("study.jsonl");
        let svc = StudyService::open(config(), &path).unwrap();
        let before = std::fs::read(&path).unwrap();
        assert!(svc
            .record_response("missing", &answer(&svc.next_session("p").unwrap(), "i0"))
            .is_err());
        let lines = |b: &[u8]| b.iter().filter(|&&c| c == b'\n').count();
        // Only the session-opened record was added.
        assert_eq!(lines(&std::fs::read(&path).unwrap()), lines(&before) + 1);
    }

    #[test]
    fn config_change_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("study.jsonl");
        drop(StudyService::open(config(), &path).unwrap());
        let mut other = config();
        other.target_reviews_per_image = 3;
        assert_eq!(StudyService::open(other, &path).err().unwrap().kind(), "InvalidConfig");
    }
}
