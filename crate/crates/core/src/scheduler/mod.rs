//! Best-first generation of sound schedules.
//!
//! Finding the largest sound schedule is NP-hard, so the scheduler runs a
//! randomized greedy construction with restarts. Each pass walks actions in a
//! priority order and admits an action together with everything that must
//! enable it, provided the admitted set stays free of `NotAfter` cycles. A
//! rejected action can never become admissible later in the same pass (the
//! set only grows), so one pass yields a schedule to which no further action
//! group can be added.
//!
//! Candidates are ranked by the number of included actions, then by how many
//! actions of the local participant survive, then by preferring earlier
//! timestamps.

mod greedy;
mod incremental;
mod signature;

use std::collections::BTreeSet;
use std::fmt;

use crate::acg::{ActionId, DocId, ParticipantId};

pub use greedy::next_schedules;
pub use incremental::{Delta, IncrementalScheduler};
pub use signature::ScheduleSignature;

/// Opaque schedule identifier, derived from the schedule's signature so that
/// equivalent schedules share it on every site.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScheduleId(pub u64);

impl fmt::Display for ScheduleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl fmt::Debug for ScheduleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScheduleId({self})")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub sched_id: ScheduleId,
    pub order: Vec<ActionId>,
}

impl Schedule {
    /// Number of included actions, the quality metric.
    pub fn score(&self) -> usize {
        self.order.len()
    }

    pub fn contains(&self, id: &ActionId) -> bool {
        self.order.contains(id)
    }
}

#[derive(Clone, Debug)]
pub struct ScheduleRequest {
    pub max_candidates: usize,
    /// Actions of this participant win ties.
    pub local_participant: Option<ParticipantId>,
    pub restarts: usize,
    pub rng_seed: u64,
    /// Actions removed from consideration (filters). Everything they enable
    /// is removed as well.
    pub excluded: BTreeSet<ActionId>,
    /// Only schedule actions of these documents. `None` means every document.
    pub scope: Option<BTreeSet<DocId>>,
}

impl Default for ScheduleRequest {
    fn default() -> Self {
        ScheduleRequest {
            max_candidates: 8,
            local_participant: None,
            restarts: 8,
            rng_seed: 0,
            excluded: BTreeSet::new(),
            scope: None,
        }
    }
}

impl ScheduleRequest {
    pub fn local(mut self, p: impl Into<ParticipantId>) -> Self {
        self.local_participant = Some(p.into());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn candidates(mut self, n: usize) -> Self {
        self.max_candidates = n;
        self
    }

    pub fn restarts(mut self, n: usize) -> Self {
        self.restarts = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedError {
    #[error("scheduler state built at generation {state}, delta based on {delta}")]
    StaleState { state: u64, delta: u64 },
}
