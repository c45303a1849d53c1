//! The shared calendar.
//!
//! Every user or location owns a calendar document; every event is its own
//! document. Creating an event logs an `enable-event` and the creator's
//! invitation in the event document, atomically grouped, plus an
//! `open-event` in the creator's calendar. Each further invitation joins the
//! atomic group and opens the event in the invitee's calendar.
//!
//! Keys identify the event and each (user, slot) pair, compared across
//! documents, so two concurrent invitations of one user at one time in
//! different events reach [`CalendarApp::get_constraint`], which makes them
//! antagonistic.

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::acg::{derived, key_of, key_of_all, Action, ActionId, Constraint, Derived, DocId};
use crate::site::{Application, KeyScope, Site, SiteError, View};

pub const CALENDAR_TAG: &str = "calendar";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum CalendarOp {
    EnableEvent { event: String, name: String, slot: String },
    Invite { event: String, user: String, slot: String },
    CancelEvent { event: String },
    CancelInvitation { event: String, user: String },
    OpenEvent { event: String },
}

impl CalendarOp {
    pub fn decode(action: &Action) -> Option<CalendarOp> {
        serde_json::from_slice(&action.payload).ok()
    }

    fn keys(&self) -> Vec<u64> {
        match self {
            CalendarOp::OpenEvent { .. } => Vec::new(),
            CalendarOp::Invite { event, user, slot } => vec![key_of(event), key_of_all([user.as_str(), slot.as_str()])],
            CalendarOp::EnableEvent { event, .. }
            | CalendarOp::CancelEvent { event }
            | CalendarOp::CancelInvitation { event, .. } => vec![key_of(event)],
        }
    }

    pub fn to_action(&self, id: ActionId) -> Action {
        let kind = serde_json::to_value(self).expect("plain data")["op"]
            .as_str()
            .unwrap_or_default()
            .to_owned();
        Action::new(id, CALENDAR_TAG)
            .with_keys(self.keys())
            .with_attr("op", kind)
            .with_payload(serde_json::to_vec(self).expect("plain data"))
    }
}

/// Calendar document of a user or location.
pub fn calendar_doc(owner: &str) -> DocId {
    DocId::new(format!("cal-{owner}"))
}

#[derive(Clone, Debug, Default)]
pub struct CalendarApp;

impl Application for CalendarApp {
    fn app_tag(&self) -> &str {
        CALENDAR_TAG
    }

    fn key_scope(&self) -> KeyScope {
        KeyScope::Application
    }

    fn get_constraint(&mut self, first: &Action, second: &Action) -> Vec<Constraint> {
        use CalendarOp::*;
        let (Some(x), Some(y)) = (CalendarOp::decode(first), CalendarOp::decode(second)) else {
            return Vec::new();
        };
        match (&x, &y) {
            (
                Invite {
                    event: e1,
                    user: u1,
                    slot: s1,
                },
                Invite {
                    event: e2,
                    user: u2,
                    slot: s2,
                },
            ) if u1 == u2 && s1 == s2 && e1 != e2 => derived(Derived::Antagonism, &first.id, &second.id),
            (
                Invite {
                    event: e1, user: u1, ..
                },
                Invite {
                    event: e2, user: u2, ..
                },
            ) if e1 == e2 && u1 == u2 => {
                vec![Constraint::non_commuting(first.id.clone(), second.id.clone())]
            }
            (EnableEvent { event: e1, .. }, EnableEvent { event: e2, .. }) if e1 == e2 => {
                vec![Constraint::non_commuting(first.id.clone(), second.id.clone())]
            }
            _ => Vec::new(),
        }
    }

    fn new_view(&self, _: &DocId) -> Box<dyn View> {
        Box::<CalendarView>::default()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventState {
    pub name: String,
    pub slot: String,
    pub cancelled: bool,
    /// Invited users and their slot.
    pub invited: BTreeMap<String, String>,
}

/// State of one calendar or event document.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarView {
    pub events: BTreeMap<String, EventState>,
    /// Events opened in this calendar.
    pub opened: BTreeSet<String>,
    pub skipped: Vec<ActionId>,
}

impl View for CalendarView {
    fn apply(&mut self, action: &Action) {
        let Some(op) = CalendarOp::decode(action) else {
            self.skipped.push(action.id.clone());
            return;
        };
        let ok = match op {
            CalendarOp::EnableEvent { event, name, slot } => {
                let fresh = !self.events.contains_key(&event);
                if fresh {
                    self.events.insert(
                        event,
                        EventState {
                            name,
                            slot,
                            ..EventState::default()
                        },
                    );
                }
                fresh
            }
            CalendarOp::Invite { event, user, slot } => match self.events.get_mut(&event) {
                Some(e) if !e.cancelled => {
                    e.invited.insert(user, slot);
                    true
                }
                _ => false,
            },
            CalendarOp::CancelEvent { event } => match self.events.get_mut(&event) {
                Some(e) => {
                    e.cancelled = true;
                    true
                }
                None => false,
            },
            CalendarOp::CancelInvitation { event, user } => self
                .events
                .get_mut(&event)
                .is_some_and(|e| e.invited.remove(&user).is_some()),
            CalendarOp::OpenEvent { event } => {
                self.opened.insert(event);
                true
            }
        };
        if !ok {
            self.skipped.push(action.id.clone());
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

/// An event created or joined on this site.
#[derive(Clone, Debug)]
pub struct EventHandle {
    pub event: String,
    pub slot: String,
    pub enable: ActionId,
    /// Latest invitation; the next one is grouped atomically with it.
    pub last_invite: ActionId,
}

impl EventHandle {
    pub fn doc(&self) -> DocId {
        DocId::new(&self.event)
    }
}

fn submit(
    site: &mut Site,
    doc: &DocId,
    op: CalendarOp,
    constraints: impl FnOnce(&ActionId) -> Vec<Constraint>,
) -> Result<ActionId, SiteError> {
    if !site.is_open(doc) {
        site.open(doc.clone(), CALENDAR_TAG)?;
    }
    let id = site.next_id(doc)?;
    let cs = constraints(&id);
    site.submit(op.to_action(id.clone()), cs)?;
    Ok(id)
}

/// Creates an event document and invites its creator.
pub fn create_event(
    site: &mut Site,
    event: &str,
    name: &str,
    slot: &str,
    creator: &str,
) -> Result<EventHandle, SiteError> {
    let doc = DocId::new(event);
    let enable = submit(
        site,
        &doc,
        CalendarOp::EnableEvent {
            event: event.to_owned(),
            name: name.to_owned(),
            slot: slot.to_owned(),
        },
        |_| Vec::new(),
    )?;
    let mut handle = EventHandle {
        event: event.to_owned(),
        slot: slot.to_owned(),
        last_invite: enable.clone(),
        enable,
    };
    invite(site, &mut handle, creator)?;
    Ok(handle)
}

/// Invites `user` at the event's slot and opens the event in their calendar.
pub fn invite(site: &mut Site, handle: &mut EventHandle, user: &str) -> Result<ActionId, SiteError> {
    let op = CalendarOp::Invite {
        event: handle.event.clone(),
        user: user.to_owned(),
        slot: handle.slot.clone(),
    };
    let prev = handle.last_invite.clone();
    let inv = submit(site, &handle.doc(), op, |id| derived(Derived::Atomic, &prev, id))?;
    handle.last_invite = inv.clone();
    let enable = handle.enable.clone();
    submit(
        site,
        &calendar_doc(user),
        CalendarOp::OpenEvent {
            event: handle.event.clone(),
        },
        |id| derived(Derived::Causal, &enable, id),
    )?;
    Ok(inv)
}

/// Marks two events as alternatives: at most one of them is held.
pub fn alternatives(site: &mut Site, a: &EventHandle, b: &EventHandle) -> Result<(), SiteError> {
    site.add_constraints(derived(Derived::Antagonism, &a.enable, &b.enable))
}

pub fn cancel_event(site: &mut Site, handle: &EventHandle) -> Result<ActionId, SiteError> {
    let enable = handle.enable.clone();
    let op = CalendarOp::CancelEvent {
        event: handle.event.clone(),
    };
    submit(site, &handle.doc(), op, |id| derived(Derived::Causal, &enable, id))
}

pub fn cancel_invitation(site: &mut Site, handle: &EventHandle, user: &str) -> Result<ActionId, SiteError> {
    let enable = handle.enable.clone();
    let op = CalendarOp::CancelInvitation {
        event: handle.event.clone(),
        user: user.to_owned(),
    };
    submit(site, &handle.doc(), op, |id| derived(Derived::Causal, &enable, id))
}

/// (user, slot) pairs booked by more than one live event in the site's
/// current views.
pub fn double_bookings(site: &Site) -> Vec<(String, String)> {
    let mut seen: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
    for doc in site.documents() {
        let Some(view) = site.view_as::<CalendarView>(doc) else {
            continue;
        };
        for (event, state) in &view.events {
            if state.cancelled {
                continue;
            }
            for (user, slot) in &state.invited {
                seen.entry((user.clone(), slot.clone()))
                    .or_default()
                    .insert(event.clone());
            }
        }
    }
    seen.into_iter()
        .filter(|(_, events)| events.len() > 1)
        .map(|(k, _)| k)
        .collect()
}
