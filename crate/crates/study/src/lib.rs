//! Two-task annotation study service.
//!
//! Participants receive sessions of images chosen fewest-reviews-first,
//! answer the saliency question before the manipulation question for each
//! image, and every accepted answer is journaled before it is acknowledged.

pub mod error;
pub mod http;
pub mod journal;
pub mod service;
pub mod study;

pub use error::{Result, StudyError};
pub use http::{router, serve, StudyServer};
pub use journal::Journal;
pub use service::StudyService;
pub use study::{
    Ack, Event, ImageStatus, Phase, Progress, Session, SessionState, Study, StudyConfig, StudyImage, Submission,
};
