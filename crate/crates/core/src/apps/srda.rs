//! The replicated dictionary.
//!
//! A dictionary document holds tuples identified by a string, each with a
//! set of named string attributes. Writes become actions; reads are local
//! and look at the current tentative view.

use std::any::Any;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::acg::{derived, key_of, Acg, Action, ActionId, Constraint, Derived, DocId};
use crate::site::{Application, Site, SiteError, View};

pub const SRDA_TAG: &str = "srda";

pub type Attrs = BTreeMap<String, String>;

/// Payload of a dictionary action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SrdaOp {
    Insert { tid: String, attrs: Attrs },
    Modify { tid: String, attrs: Attrs },
    Remove { tid: String },
}

impl SrdaOp {
    pub fn tid(&self) -> &str {
        match self {
            SrdaOp::Insert { tid, .. } | SrdaOp::Modify { tid, .. } | SrdaOp::Remove { tid } => tid,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            SrdaOp::Insert { .. } => "insert",
            SrdaOp::Modify { .. } => "modify",
            SrdaOp::Remove { .. } => "remove",
        }
    }

    pub fn decode(action: &Action) -> Option<SrdaOp> {
        serde_json::from_slice(&action.payload).ok()
    }

    /// The action carrying this operation. Its key is the tuple identifier.
    pub fn to_action(&self, id: ActionId) -> Action {
        Action::new(id, SRDA_TAG)
            .with_keys([key_of(self.tid())])
            .with_attr("op", self.name())
            .with_attr("tid", self.tid())
            .with_payload(serde_json::to_vec(self).expect("plain data"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SrdaError {
    #[error("tuple {0:?} already exists")]
    TupleExists(String),
    #[error("no tuple {0:?}")]
    NoSuchTuple(String),
    #[error(transparent)]
    Site(#[from] SiteError),
}

/// Conflict detection between concurrent dictionary actions.
#[derive(Clone, Debug, Default)]
pub struct SrdaApp {
    /// Make concurrent inserts of one identifier antagonistic instead of
    /// non-commuting.
    pub antagonistic_inserts: bool,
}

impl Application for SrdaApp {
    fn app_tag(&self) -> &str {
        SRDA_TAG
    }

    fn get_constraint(&mut self, first: &Action, second: &Action) -> Vec<Constraint> {
        let (Some(x), Some(y)) = (SrdaOp::decode(first), SrdaOp::decode(second)) else {
            return Vec::new();
        };
        if x.tid() != y.tid() {
            return Vec::new();
        }
        match (&x, &y) {
            (SrdaOp::Insert { .. }, SrdaOp::Insert { .. }) if self.antagonistic_inserts => {
                derived(Derived::Antagonism, &first.id, &second.id)
            }
            (SrdaOp::Insert { .. }, SrdaOp::Insert { .. }) => {
                vec![Constraint::non_commuting(first.id.clone(), second.id.clone())]
            }
            (SrdaOp::Modify { attrs: a, .. }, SrdaOp::Modify { attrs: b, .. })
                if a.keys().any(|k| b.contains_key(k)) =>
            {
                vec![Constraint::non_commuting(first.id.clone(), second.id.clone())]
            }
            _ => Vec::new(),
        }
    }

    fn new_view(&self, _: &DocId) -> Box<dyn View> {
        Box::<DictState>::default()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tuple {
    pub attrs: Attrs,
    pub inserted_by: ActionId,
    /// Modifies applied since the insert, with the attributes they set.
    pub modifies: Vec<(ActionId, BTreeSet<String>)>,
}

/// Dictionary contents after executing a schedule.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictState {
    pub tuples: BTreeMap<String, Tuple>,
    /// Removes executed so far, by tuple identifier.
    pub removed: BTreeMap<String, Vec<ActionId>>,
    /// Actions whose precondition did not hold when executed.
    pub skipped: Vec<ActionId>,
}

impl DictState {
    /// Sequential execution of `order`, ignoring actions of other documents
    /// or applications.
    pub fn replay<'a>(acg: &Acg, doc: &DocId, order: impl IntoIterator<Item = &'a ActionId>) -> DictState {
        let mut state = DictState::default();
        for id in order {
            if &id.doc != doc {
                continue;
            }
            if let Some(a) = acg.action(id).filter(|a| a.app_tag == SRDA_TAG) {
                state.apply(a);
            }
        }
        state
    }

    pub fn get(&self, tid: &str) -> Option<&Attrs> {
        self.tuples.get(tid).map(|t| &t.attrs)
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Tuples and attributes only.
    pub fn contents(&self) -> BTreeMap<&str, &Attrs> {
        self.tuples.iter().map(|(k, t)| (k.as_str(), &t.attrs)).collect()
    }
}

impl View for DictState {
    fn apply(&mut self, action: &Action) {
        let Some(op) = SrdaOp::decode(action) else {
            self.skipped.push(action.id.clone());
            return;
        };
        let id = action.id.clone();
        match op {
            SrdaOp::Insert { tid, attrs } => match self.tuples.entry(tid) {
                Entry::Occupied(e) => {
                    log::debug!("{id}: insert of live tuple {:?} skipped", e.key());
                    self.skipped.push(id);
                }
                Entry::Vacant(e) => {
                    e.insert(Tuple {
                        attrs,
                        inserted_by: id,
                        modifies: Vec::new(),
                    });
                }
            },
            SrdaOp::Modify { tid, attrs } => match self.tuples.get_mut(&tid) {
                Some(t) => {
                    t.modifies.push((id, attrs.keys().cloned().collect()));
                    t.attrs.extend(attrs);
                }
                None => self.skipped.push(id),
            },
            SrdaOp::Remove { tid } => {
                if self.tuples.remove(&tid).is_some() {
                    self.removed.entry(tid).or_default().push(id);
                } else {
                    self.skipped.push(id);
                }
            }
        }
    }

    fn materialise(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("plain data")
    }

    fn restore(&mut self, blob: &[u8]) {
        *self = serde_json::from_slice(blob).unwrap_or_default();
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// A user session writing to dictionaries on one site. Successive writes of
/// a session are ordered, across documents too, so the user reads their own
/// writes.
#[derive(Clone, Debug, Default)]
pub struct SrdaSession {
    last_write: Option<ActionId>,
}

impl SrdaSession {
    pub fn new() -> Self {
        SrdaSession::default()
    }

    pub fn last_write(&self) -> Option<&ActionId> {
        self.last_write.as_ref()
    }

    /// The current view of `doc`, brought up to date first.
    pub fn view<'s>(site: &'s mut Site, doc: &DocId) -> Result<&'s DictState, SrdaError> {
        if !site.is_open(doc) {
            return Err(SiteError::DocNotOpen(doc.clone()).into());
        }
        site.deliver_schedules();
        Ok(site.view_as::<DictState>(doc).expect("dictionary document"))
    }

    pub fn read(site: &mut Site, doc: &DocId, tid: &str) -> Result<Attrs, SrdaError> {
        Self::view(site, doc)?
            .get(tid)
            .cloned()
            .ok_or_else(|| SrdaError::NoSuchTuple(tid.to_owned()))
    }

    pub fn insert(&mut self, site: &mut Site, doc: &DocId, tid: &str, attrs: Attrs) -> Result<ActionId, SrdaError> {
        let view = Self::view(site, doc)?;
        if view.tuples.contains_key(tid) {
            return Err(SrdaError::TupleExists(tid.to_owned()));
        }
        let removes = view.removed.get(tid).cloned().unwrap_or_default();
        let id = site.next_id(doc)?;
        let mut constraints: Vec<Constraint> = removes
            .into_iter()
            .map(|r| Constraint::not_after(r, id.clone()))
            .collect();
        let op = SrdaOp::Insert {
            tid: tid.to_owned(),
            attrs,
        };
        self.write(site, op, id, &mut constraints)
    }

    pub fn modify(&mut self, site: &mut Site, doc: &DocId, tid: &str, attrs: Attrs) -> Result<ActionId, SrdaError> {
        let view = Self::view(site, doc)?;
        let t = view
            .tuples
            .get(tid)
            .ok_or_else(|| SrdaError::NoSuchTuple(tid.to_owned()))?;
        let ins = t.inserted_by.clone();
        let earlier: Vec<ActionId> = t
            .modifies
            .iter()
            .filter(|(_, set)| attrs.keys().any(|k| set.contains(k)))
            .map(|(m, _)| m.clone())
            .collect();
        let id = site.next_id(doc)?;
        let mut constraints = derived(Derived::Causal, &ins, &id);
        constraints.extend(earlier.into_iter().map(|m| Constraint::not_after(m, id.clone())));
        let op = SrdaOp::Modify {
            tid: tid.to_owned(),
            attrs,
        };
        self.write(site, op, id, &mut constraints)
    }

    pub fn remove(&mut self, site: &mut Site, doc: &DocId, tid: &str) -> Result<ActionId, SrdaError> {
        let view = Self::view(site, doc)?;
        let t = view
            .tuples
            .get(tid)
            .ok_or_else(|| SrdaError::NoSuchTuple(tid.to_owned()))?;
        let ins = t.inserted_by.clone();
        let id = site.next_id(doc)?;
        let mut constraints = derived(Derived::Causal, &ins, &id);
        let op = SrdaOp::Remove { tid: tid.to_owned() };
        self.write(site, op, id, &mut constraints)
    }

    fn write(
        &mut self,
        site: &mut Site,
        op: SrdaOp,
        id: ActionId,
        constraints: &mut Vec<Constraint>,
    ) -> Result<ActionId, SrdaError> {
        if let Some(prev) = &self.last_write {
            if site.acg().contains(prev) {
                constraints.push(Constraint::not_after(prev.clone(), id.clone()));
            }
        }
        site.submit(op.to_action(id.clone()), std::mem::take(constraints))?;
        self.last_write = Some(id.clone());
        Ok(id)
    }
}
