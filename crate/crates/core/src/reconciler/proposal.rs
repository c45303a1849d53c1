use std::fmt;

use crate::acg::{ActionId, Constraint, ConstraintKind, ParticipantId};
use crate::multilog::codec::{CodecError, Reader, Writer};
use crate::multilog::LogKey;

use super::Frontier;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Decision {
    Commit(ActionId),
    Abort(ActionId),
    /// The first action goes before the second.
    Serialize(ActionId, ActionId),
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Commit(a) => write!(f, "commit {a}"),
            Decision::Abort(a) => write!(f, "abort {a}"),
            Decision::Serialize(a, b) => write!(f, "serialize {a} < {b}"),
        }
    }
}

/// A batch of decisions from one site.
///
/// Besides the decisions, a proposal carries the constraints its proposer
/// knows about the decided actions, and how many bytes of each log the
/// proposer had received. Receivers judge decisions against constraints
/// shipped this way only, so the verdict never depends on which log records
/// happen to have arrived locally.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proposal {
    pub proposer: ParticipantId,
    pub seq: u64,
    pub decisions: Vec<Decision>,
    pub constraints: Vec<Constraint>,
    pub frontier: Frontier,
}

impl Proposal {
    pub fn new(proposer: ParticipantId, seq: u64) -> Self {
        Proposal {
            proposer,
            seq,
            decisions: Vec::new(),
            constraints: Vec::new(),
            frontier: Frontier::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    /// Payload of a `P` record.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(self.proposer.as_str()).u64(self.seq);
        w.u32(self.decisions.len() as u32);
        for d in &self.decisions {
            match d {
                Decision::Commit(a) => {
                    w.u8(0).id(a);
                }
                Decision::Abort(a) => {
                    w.u8(1).id(a);
                }
                Decision::Serialize(a, b) => {
                    w.u8(2).id(a).id(b);
                }
            }
        }
        w.u32(self.constraints.len() as u32);
        for c in &self.constraints {
            w.u8(c.kind().as_byte()).id(c.a()).id(c.b());
        }
        w.u32(self.frontier.len() as u32);
        for (log, len) in &self.frontier {
            w.str(log.doc.as_str()).str(log.participant.as_str()).u64(*len);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Proposal, CodecError> {
        let mut r = Reader::new(bytes);
        let proposer = r.str()?.into();
        let seq = r.u64()?;
        let mut decisions = Vec::new();
        for _ in 0..r.count(21)? {
            decisions.push(match r.u8()? {
                0 => Decision::Commit(r.id()?),
                1 => Decision::Abort(r.id()?),
                2 => Decision::Serialize(r.id()?, r.id()?),
                t => return Err(CodecError::BadTag(t)),
            });
        }
        let mut constraints = Vec::new();
        for _ in 0..r.count(41)? {
            let k = r.u8()?;
            let kind = ConstraintKind::from_byte(k).ok_or(CodecError::BadTag(k))?;
            constraints.push(Constraint::new(kind, r.id()?, r.id()?));
        }
        let mut frontier = Frontier::new();
        for _ in 0..r.count(16)? {
            let doc = r.str()?;
            let participant = r.str()?;
            frontier.insert(LogKey::new(doc, participant), r.u64()?);
        }
        r.finish()?;
        Ok(Proposal {
            proposer,
            seq,
            decisions,
            constraints,
            frontier,
        })
    }
}
