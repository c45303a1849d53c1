//! Persistent document format.
//!
//! A document is a directory holding one append-only log per participant
//! (the multilog, which is what gets replicated) and a local `meta` area for
//! filters and snapshots:
//!
//! ```text
//! <root>/<doc>/multilog/<participant>/chunk-0000000001.log
//! <root>/<doc>/meta/filters/<name>.json
//! <root>/<doc>/meta/snapshots/<name>.json
//! ```

pub mod codec;
mod document;
mod filter;
mod logdir;

pub use codec::{CodecError, DecodeFailure, Record};
pub use document::{CollectAll, DocumentDir, RetentionPolicy, SnapshotMeta};
pub use filter::{CompiledFilter, Criterion, FilterSpec, Predicate};
pub use logdir::{chunk_file_name, Cursor, LogDir, ReadBatch, DEFAULT_CHUNK_THRESHOLD};

use crate::acg::{AcgError, DocId, ParticipantId};

/// A replicated log: the log of `participant` in `doc`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LogKey {
    pub doc: DocId,
    pub participant: ParticipantId,
}

impl LogKey {
    pub fn new(doc: impl Into<DocId>, participant: impl Into<ParticipantId>) -> Self {
        LogKey {
            doc: doc.into(),
            participant: participant.into(),
        }
    }
}

impl std::fmt::Display for LogKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.doc, self.participant)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MultilogError {
    #[error("log of {0} is owned by another participant")]
    NotOwner(ParticipantId),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("chunk {seq} of {participant} was collected; oldest retained is {lowest}")]
    CursorBeforeRetention {
        participant: ParticipantId,
        seq: u64,
        lowest: u64,
    },
    #[error("corrupt record in {participant} chunk {seq} at {offset}: {reason}")]
    Corrupt {
        participant: ParticipantId,
        seq: u64,
        offset: u64,
        reason: String,
    },
    #[error("name already in use: {0}")]
    NameCollision(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid name {0:?}")]
    InvalidName(String),
    #[error("metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] AcgError),
}
