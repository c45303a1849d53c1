//! Optimistic replication over action-constraint graphs.
//!
//! Sites log actions to per-participant append-only logs, replicate the logs
//! in the background, compute sound schedules of everything they know, and
//! agree on a committed prefix through a background commitment protocol.
//! See the guide in `book/` for a tour.

pub mod acg;
pub mod apps;
pub mod harness;
pub mod multilog;
pub mod reconciler;
pub mod scheduler;
pub mod sim;
pub mod site;

// Book chapters, compiled so their snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/actions-and-constraints.md")]
    mod actions_and_constraints {}
    #[doc = include_str!("../../../book/src/scheduling.md")]
    mod scheduling {}
    #[doc = include_str!("../../../book/src/multilogs.md")]
    mod multilogs {}
    #[doc = include_str!("../../../book/src/sites.md")]
    mod sites {}
    #[doc = include_str!("../../../book/src/commitment.md")]
    mod commitment {}
    #[doc = include_str!("../../../book/src/dictionary.md")]
    mod dictionary {}
    #[doc = include_str!("../../../book/src/calendar.md")]
    mod calendar {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
