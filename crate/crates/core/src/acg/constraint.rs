use std::fmt;

use super::ids::{ActionId, DocId, ParticipantId};

/// The three primitive constraint types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstraintKind {
    /// `a` is never after `b` in any schedule.
    NotAfter = 0,
    /// `b` in a schedule implies `a` in the same schedule.
    Enables = 1,
    /// Sites must agree on one relative order of `a` and `b`.
    NonCommuting = 2,
}

impl ConstraintKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(ConstraintKind::NotAfter),
            1 => Some(ConstraintKind::Enables),
            2 => Some(ConstraintKind::NonCommuting),
            _ => None,
        }
    }

    pub fn as_byte(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::NotAfter => "NotAfter",
            ConstraintKind::Enables => "Enables",
            ConstraintKind::NonCommuting => "NonCommuting",
        })
    }
}

/// A constraint with both endpoints resolved to full action identities.
///
/// Identity is the whole triple. `NonCommuting` is stored with the smaller
/// endpoint first so that both argument orders denote the same constraint.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Constraint {
    kind: ConstraintKind,
    a: ActionId,
    b: ActionId,
}

impl Constraint {
    pub fn new(kind: ConstraintKind, a: ActionId, b: ActionId) -> Self {
        if kind == ConstraintKind::NonCommuting && b < a {
            Constraint { kind, a: b, b: a }
        } else {
            Constraint { kind, a, b }
        }
    }

    pub fn not_after(a: ActionId, b: ActionId) -> Self {
        Constraint::new(ConstraintKind::NotAfter, a, b)
    }

    pub fn enables(a: ActionId, b: ActionId) -> Self {
        Constraint::new(ConstraintKind::Enables, a, b)
    }

    pub fn non_commuting(a: ActionId, b: ActionId) -> Self {
        Constraint::new(ConstraintKind::NonCommuting, a, b)
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn a(&self) -> &ActionId {
        &self.a
    }

    pub fn b(&self) -> &ActionId {
        &self.b
    }

    pub fn is_cross_document(&self) -> bool {
        self.a.doc != self.b.doc
    }

    pub fn touches(&self, id: &ActionId) -> bool {
        &self.a == id || &self.b == id
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {})", self.kind, self.a, self.b)
    }
}

/// Combinations of primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Derived {
    /// All or nothing.
    Atomic,
    /// `b` depends causally on `a`.
    Causal,
    /// `a` and `b` are never both in the same schedule.
    Antagonism,
}

/// Expands a derived constraint into its primitives.
pub fn derived(kind: Derived, a: &ActionId, b: &ActionId) -> Vec<Constraint> {
    match kind {
        Derived::Atomic => vec![
            Constraint::enables(a.clone(), b.clone()),
            Constraint::enables(b.clone(), a.clone()),
        ],
        Derived::Causal => vec![
            Constraint::enables(a.clone(), b.clone()),
            Constraint::not_after(a.clone(), b.clone()),
        ],
        Derived::Antagonism => {
            if a == b {
                vec![Constraint::not_after(a.clone(), a.clone())]
            } else {
                vec![
                    Constraint::not_after(a.clone(), b.clone()),
                    Constraint::not_after(b.clone(), a.clone()),
                ]
            }
        }
    }
}

/// How a logged constraint names one of its actions. The short forms are
/// relative to the log that holds the constraint.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ActionRef {
    /// Same issuer and same document as the containing log.
    Local { timestamp: u64 },
    /// Same document, any issuer.
    SameDoc { issuer: ParticipantId, timestamp: u64 },
    CrossDoc {
        doc: DocId,
        issuer: ParticipantId,
        timestamp: u64,
    },
}

impl ActionRef {
    /// Shortest form naming `target` from the log of `log_issuer` in `log_doc`.
    pub fn relative_to(target: &ActionId, log_doc: &DocId, log_issuer: &ParticipantId) -> Self {
        if &target.doc != log_doc {
            ActionRef::CrossDoc {
                doc: target.doc.clone(),
                issuer: target.issuer.clone(),
                timestamp: target.timestamp,
            }
        } else if &target.issuer != log_issuer {
            ActionRef::SameDoc {
                issuer: target.issuer.clone(),
                timestamp: target.timestamp,
            }
        } else {
            ActionRef::Local {
                timestamp: target.timestamp,
            }
        }
    }

    pub fn resolve(&self, log_doc: &DocId, log_issuer: &ParticipantId) -> ActionId {
        match self {
            ActionRef::Local { timestamp } => ActionId {
                doc: log_doc.clone(),
                issuer: log_issuer.clone(),
                timestamp: *timestamp,
            },
            ActionRef::SameDoc { issuer, timestamp } => ActionId {
                doc: log_doc.clone(),
                issuer: issuer.clone(),
                timestamp: *timestamp,
            },
            ActionRef::CrossDoc { doc, issuer, timestamp } => ActionId {
                doc: doc.clone(),
                issuer: issuer.clone(),
                timestamp: *timestamp,
            },
        }
    }
}

/// A constraint as written in a log. Its issuer is the owner of that log.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConstraintRecord {
    pub kind: ConstraintKind,
    pub a: ActionRef,
    pub b: ActionRef,
}

impl ConstraintRecord {
    pub fn for_log(c: &Constraint, log_doc: &DocId, log_issuer: &ParticipantId) -> Self {
        ConstraintRecord {
            kind: c.kind(),
            a: ActionRef::relative_to(c.a(), log_doc, log_issuer),
            b: ActionRef::relative_to(c.b(), log_doc, log_issuer),
        }
    }

    pub fn resolve(&self, log_doc: &DocId, log_issuer: &ParticipantId) -> Constraint {
        Constraint::new(
            self.kind,
            self.a.resolve(log_doc, log_issuer),
            self.b.resolve(log_doc, log_issuer),
        )
    }
}
