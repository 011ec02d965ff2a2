use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown study `{0}`")]
    UnknownStudy(String),
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("every image already has its target number of reviews or is assigned to an open session")]
    StudyExhausted,
    #[error("participant `{participant}` already has open session `{session_id}`")]
    ParticipantBusy { participant: String, session_id: String },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is no longer open")]
    SessionClosed(String),
    #[error("image `{image_id}` is not part of session `{session_id}`")]
    ImageNotInSession { session_id: String, image_id: String },
    #[error("session `{session_id}` already has a {what} for image `{image_id}`")]
    DuplicateResponse {
        session_id: String,
        image_id: String,
        what: &'static str,
    },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("task order violation: {0}")]
    TaskOrderViolation(String),
    #[error("journal {}: {message}", path.display())]
    Journal { path: PathBuf, message: String },
    #[error("journal i/o on {}: {source}", path.display())]
    JournalIo { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] salbias_core::Error),
}

impl StudyError {
    pub fn kind(&self) -> &'static str {
        match self {
            StudyError::InvalidConfig(_) => "InvalidConfig",
            StudyError::UnknownStudy(_) => "UnknownStudy",
            StudyError::UnknownImage(_) => "UnknownImage",
            StudyError::StudyExhausted => "StudyExhausted",
            StudyError::ParticipantBusy { .. } => "ParticipantBusy",
            StudyError::UnknownSession(_) => "UnknownSession",
            StudyError::SessionClosed(_) => "SessionClosed",
            StudyError::ImageNotInSession { .. } => "ImageNotInSession",
            StudyError::DuplicateResponse { .. } => "DuplicateResponse",
            StudyError::SchemaViolation(_) => "SchemaViolation",
            StudyError::TaskOrderViolation(_) => "TaskOrderViolation",
            StudyError::Journal { .. } => "JournalCorrupt",
            StudyError::JournalIo { .. } => "JournalIo",
            StudyError::Core(e) => e.kind(),
        }
    }

    pub(crate) fn journal_io(path: &std::path::Path, source: std::io::Error) -> Self {
        StudyError::JournalIo {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = StudyError> = std::result::Result<T, E>;
