//! Actions, constraints and the action-constraint graph.
//!
//! A document's state is not stored directly. Instead the graph records every
//! operation ([`Action`]) and the concurrency invariants between operations
//! ([`Constraint`]). Any *sound* ordering of a subset of the actions is a
//! legal view of the document; see [`is_sound`].

mod action;
mod constraint;
mod graph;
mod ids;
mod sound;

pub use action::{fnv1a64, key_of, key_of_all, Action};
pub use constraint::{derived, ActionRef, Constraint, ConstraintKind, ConstraintRecord, Derived};
pub use graph::{Acg, Decided, NodeIx};
pub use ids::{ActionId, DocId, ParticipantId};
pub use sound::{check_sound, is_maximal, is_sound, Violation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AcgError {
    #[error("action {0} already present with different content")]
    DuplicateDivergent(ActionId),
    #[error("unknown action {0}")]
    UnknownAction(ActionId),
    #[error("action {0} is already committed")]
    AlreadyCommitted(ActionId),
    #[error("action {0} is already aborted")]
    AlreadyAborted(ActionId),
}
