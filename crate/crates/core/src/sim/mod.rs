//! Deterministic simulated network.
//!
//! Logs replicate asynchronously as byte prefixes of their source, one FIFO
//! channel per (log, destination). Proposals go through a global sequencer
//! that gives every site the same total order. A disconnected site neither
//! sends nor receives; everything it missed or held back flows when it
//! reconnects.

mod net;
pub mod script;

pub use crate::multilog::LogKey;
pub use net::{Event, SimError, SimNet, SiteId};
pub use script::{Expect, ParseError, Script, ScriptEvent};

#[cfg(test)]
mod tests;
