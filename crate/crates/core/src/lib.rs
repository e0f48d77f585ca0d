//! Counter-speech intervention engine: detection, retrieval-grounded reply
//! generation, human review, a randomized intervention experiment and its
//! statistical analysis.

pub mod analysis;
pub mod classifier;
pub mod clock;
pub mod experiment;
pub mod fixtures;
pub mod ingest;
pub mod responder;
pub mod review;
pub mod store;
pub mod types;

pub use analysis::{AnalysisError, AnalysisFilter, AnalysisReport, Metric, Observation, Tail, TestResult};
pub use classifier::{ClassifierError, EmbeddingProvider, EmbeddingVector, HateModel};
pub use clock::{Clock, ManualClock, SystemClock};
pub use experiment::{Experiment, ExperimentAssignment, ExperimentError, ScheduleConfig};
pub use ingest::{IngestError, MetricsSnapshot, PostRecord};
pub use responder::{Article, ArticleStore, CandidateReply, Responder, ResponderError};
pub use review::{Decision, RejectionCode, ReviewDesk, ReviewError, ReviewItem, ReviewState};
pub use store::{Event, Store, StoreError, StoreState};
pub use types::{Arm, AuthorId, PostId, ReplyId, ReviewerId, ThreadPosition, Timestamp};
