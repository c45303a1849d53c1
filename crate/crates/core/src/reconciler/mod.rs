//! Commitment.
//!
//! Sites periodically multicast proposals. Every site delivers the same
//! proposals in the same order and applies each decision that is still
//! consistent with what was decided before, so all sites grow the same
//! committed prefix. A discarded decision is simply dropped; its proposer
//! will propose again from its updated view.

mod fifo;
mod proposal;

use std::collections::BTreeMap;

pub use fifo::{CommitState, Delivered, Fifo, ProposalInput};
pub use proposal::{Decision, Proposal};

use crate::acg::Acg;

/// A commitment algorithm. FIFO ([`Fifo`]) is the one provided.
pub trait Reconciler {
    /// Builds this site's next proposal from its current view.
    fn propose(&mut self, input: &ProposalInput<'_>) -> Proposal;

    /// Applies a proposal delivered by the total-order multicast and
    /// reflects accepted decisions into `acg`.
    fn deliver(&mut self, acg: &mut Acg, proposal: &Proposal) -> Delivered;

    fn state(&self) -> &CommitState;
}

/// Bytes received per log, as reported in proposals.
pub type Frontier = BTreeMap<crate::multilog::LogKey, u64>;
