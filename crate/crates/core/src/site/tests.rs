use std::any::Any;
use std::collections::BTreeMap;

use super::*;
use crate::acg::{derived, key_of, Derived};

/// Items appended to a list. Actions with payload "x" conflict with every
/// concurrent action on the same key.
struct ListApp;

#[derive(Default)]
struct ListView(Vec<String>);

impl View for ListView {
    fn apply(&mut self, action: &Action) {
        self.0.push(action.id.to_string());
    }
    fn materialise(&self) -> Vec<u8> {
        self.0.join("\n").into_bytes()
    }
    fn restore(&mut self, blob: &[u8]) {
        let text = String::from_utf8_lossy(blob);
        self.0 = text.split('\n').filter(|s| !s.is_empty()).map(str::to_owned).collect();
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

impl Application for ListApp {
    fn app_tag(&self) -> &str {
        "list"
    }
    fn get_constraint(&mut self, first: &Action, second: &Action) -> Vec<Constraint> {
        if first.payload == b"x" || second.payload == b"x" {
            derived(Derived::Antagonism, &first.id, &second.id)
        } else {
            vec![Constraint::non_commuting(first.id.clone(), second.id.clone())]
        }
    }
    fn new_view(&self, _: &DocId) -> Box<dyn View> {
        Box::<ListView>::default()
    }
}

fn site(me: &str, all: &[&str]) -> Site {
    let config = SiteConfig {
        sites: all.iter().map(|s| ParticipantId::new(*s)).collect(),
        ..SiteConfig::default()
    };
    let mut s = Site::new(me, config).unwrap();
    s.register_app(Box::new(ListApp));
    s
}

/// Moves every outbox to every other site until nothing is left.
/// Proposals are delivered in a single global order.
fn pump(sites: &mut [Site]) {
    let mut published: BTreeMap<LogKey, u64> = BTreeMap::new();
    loop {
        let mut appends = Vec::new();
        let mut proposals = Vec::new();
        for (i, s) in sites.iter_mut().enumerate() {
            let out = s.take_outbox();
            for (log, bytes) in out.appends {
                let at = published.entry(log.clone()).or_insert(0);
                appends.push((i, log, *at, bytes.clone()));
                *at += bytes.len() as u64;
            }
            proposals.extend(out.proposals);
        }
        if appends.is_empty() && proposals.is_empty() {
            return;
        }
        for (from, log, at, bytes) in appends {
            for (i, s) in sites.iter_mut().enumerate() {
                if i != from {
                    s.on_log_data(&log, at, &bytes);
                }
            }
        }
        for p in proposals {
            for s in sites.iter_mut() {
                s.on_multicast(&p);
            }
        }
    }
}

fn add(s: &mut Site, doc: &str, payload: &str) -> ActionId {
    let doc = DocId::new(doc);
    let id = s.next_id(&doc).unwrap();
    let action = Action::new(id.clone(), "list")
        .with_keys([key_of("k")])
        .with_payload(payload.as_bytes());
    s.submit(action, vec![]).unwrap();
    id
}

fn list(s: &Site, doc: &str) -> Vec<String> {
    s.view_as::<ListView>(&DocId::new(doc)).unwrap().0.clone()
}

#[test]
fn closed_document_rejects_work() {
    let mut s = site("a", &["a"]);
    let doc = DocId::new("d");
    assert!(matches!(s.next_id(&doc), Err(SiteError::DocNotOpen(_))));
    s.open("d", "list").unwrap();
    let id = s.next_id(&doc).unwrap();
    s.close(&doc);
    let r = s.submit(Action::new(id, "list"), vec![]);
    assert!(matches!(r, Err(SiteError::DocNotOpen(_))));
    assert!(matches!(s.open("e", "nope"), Err(SiteError::UnknownApp(_))));
}

#[test]
fn local_actions_reach_the_view() {
    let mut s = site("a", &["a"]);
    s.open("d", "list").unwrap();
    let x = add(&mut s, "d", "");
    let y = add(&mut s, "d", "");
    s.deliver_schedules();
    assert_eq!(list(&s, "d"), vec![x.to_string(), y.to_string()]);
    assert_eq!(s.stats().upcalls, 0);
    // Nothing changed: the round is skipped.
    s.deliver_schedules();
    assert_eq!(s.stats().schedule_rounds, 1);
}

#[test]
fn concurrent_pairs_get_one_upcall() {
    let mut sites = vec![site("a", &["a", "b"]), site("b", &["a", "b"])];
    for s in sites.iter_mut() {
        s.open("d", "list").unwrap();
    }
    let x = add(&mut sites[0], "d", "");
    let y = add(&mut sites[1], "d", "");
    pump(&mut sites);
    for s in &sites {
        assert_eq!(s.upcalls().len(), 1);
        assert!(s.acg().contains_constraint(&Constraint::non_commuting(
            s.upcalls()[0].0.clone(),
            s.upcalls()[0].1.clone()
        )));
    }
    // Each side logged its own copy of the conflict; neither repeats the call.
    pump(&mut sites);
    assert_eq!(sites[0].stats().upcalls, 1);
    let pair = (x.clone().min(y.clone()), x.max(y));
    let seen = &sites[0].upcalls()[0];
    assert_eq!(
        (seen.0.clone().min(seen.1.clone()), seen.0.clone().max(seen.1.clone())),
        pair
    );
}

#[test]
fn antagonism_commits_one_everywhere() {
    let mut sites = vec![site("a", &["a", "b"]), site("b", &["a", "b"])];
    for s in sites.iter_mut() {
        s.open("d", "list").unwrap();
    }
    add(&mut sites[0], "d", "x");
    add(&mut sites[1], "d", "x");
    pump(&mut sites);
    for _ in 0..3 {
        for s in sites.iter_mut() {
            s.propose();
        }
        pump(&mut sites);
    }
    for s in sites.iter_mut() {
        assert!(!s.has_undecided());
        s.deliver_schedules();
    }
    assert_eq!(
        sites[0].commit_state().committed_prefix(),
        sites[1].commit_state().committed_prefix()
    );
    assert_eq!(sites[0].commit_state().committed_prefix().len(), 1);
    assert_eq!(list(&sites[0], "d"), list(&sites[1], "d"));
}

#[test]
fn cross_document_constraints_are_logged_in_both() {
    let mut s = site("a", &["a"]);
    s.open("d", "list").unwrap();
    s.open("e", "list").unwrap();
    let x = add(&mut s, "d", "");
    let y = s.next_id(&DocId::new("e")).unwrap();
    s.submit(Action::new(y.clone(), "list"), derived(Derived::Atomic, &x, &y))
        .unwrap();
    let out = s.take_outbox();
    let d = LogKey::new("d", "a");
    let e = LogKey::new("e", "a");
    // Each log decodes to its own constraints on its own.
    for log in [&d, &e] {
        let (records, err) = codec::decode_all(&out.appends[log]);
        assert!(err.is_none());
        let constraints = records
            .iter()
            .filter(|(r, _)| matches!(r, Record::Constraint(_)))
            .count();
        assert_eq!(constraints, 2, "{log}");
    }
    assert_eq!(s.groups().len(), 1);
    s.deliver_schedules();
    assert_eq!(s.delivered_id(&DocId::new("d")), s.delivered_id(&DocId::new("e")));
    assert_eq!(s.delivered(&DocId::new("d")), &[x]);
    assert_eq!(s.delivered(&DocId::new("e")), &[y]);
}

#[test]
fn filters_hide_the_enables_closure() {
    let mut s = site("a", &["a"]);
    s.open("d", "list").unwrap();
    let x = add(&mut s, "d", "");
    let y = add(&mut s, "d", "");
    let z = add(&mut s, "d", "");
    s.add_constraints(vec![Constraint::enables(x.clone(), y.clone())])
        .unwrap();
    s.add_filter(&DocId::new("d"), FilterSpec::single("hide-x", &x))
        .unwrap();
    s.deliver_schedules();
    assert_eq!(s.delivered(&DocId::new("d")), std::slice::from_ref(&z));
    s.remove_filter(&DocId::new("d"), "hide-x").unwrap();
    s.deliver_schedules();
    assert_eq!(s.delivered(&DocId::new("d")).len(), 3);
    assert!(matches!(
        s.remove_filter(&DocId::new("d"), "hide-x"),
        Err(SiteError::NoSuchFilter(_))
    ));
}

#[test]
fn executions_extend_or_roll_back() {
    let mut s = site("a", &["a", "b"]);
    s.open("d", "list").unwrap();
    let doc = DocId::new("d");
    let x = add(&mut s, "d", "");
    let sub = vec![x.clone()];
    assert_eq!(
        s.execute(&doc, ScheduleId(1), sub.clone()),
        Execution::Extend { applied: 1 }
    );
    assert_eq!(s.execute(&doc, ScheduleId(1), sub), Execution::NoOp);
    let y = add(&mut s, "d", "");
    assert_eq!(
        s.execute(&doc, ScheduleId(2), vec![y.clone(), x.clone()]),
        Execution::Rollback { replayed: 2 }
    );
    assert_eq!(list(&s, "d"), vec![y.to_string(), x.to_string()]);
    assert_eq!(s.stats().rollbacks, 1);
}

#[test]
fn rollback_restarts_from_the_committed_checkpoint() {
    let mut s = site("a", &["a"]);
    s.open("d", "list").unwrap();
    let doc = DocId::new("d");
    let x = add(&mut s, "d", "");
    s.propose();
    let out = s.take_outbox();
    s.on_multicast(&out.proposals[0]);
    assert!(s.acg().is_committed(&x));
    let y = add(&mut s, "d", "");
    let z = add(&mut s, "d", "");
    s.execute(&doc, ScheduleId(1), vec![x.clone(), y.clone(), z.clone()]);
    let r = s.execute(&doc, ScheduleId(2), vec![x.clone(), z.clone(), y.clone()]);
    assert_eq!(r, Execution::Rollback { replayed: 2 });
    assert_eq!(list(&s, "d"), vec![x.to_string(), z.to_string(), y.to_string()]);
}

#[test]
fn corrupt_remote_bytes_are_counted() {
    let mut s = site("a", &["a", "b"]);
    let log = LogKey::new("d", "b");
    let mut frame = codec::encode(&Record::Action(Action::new(ActionId::new("d", "b", 1), "list")));
    let last = frame.len() - 1;
    frame[last] ^= 0xff;
    s.on_log_data(&log, 0, &frame);
    assert_eq!(s.stats().malformed, 1);
    assert!(s.acg().is_empty());
    // Actions claiming another issuer are refused too.
    let forged = codec::encode(&Record::Action(Action::new(ActionId::new("d", "c", 1), "list")));
    s.on_log_data(&LogKey::new("d", "c2"), 0, &forged);
    assert_eq!(s.stats().malformed, 2);
}

#[test]
fn unstable_actions_wait_for_every_frontier() {
    let mut sites = vec![site("a", &["a", "b"]), site("b", &["a", "b"])];
    sites[0].open("d", "list").unwrap();
    let x = add(&mut sites[0], "d", "");
    // b has not reported anything yet.
    let p = sites[0].propose().unwrap();
    assert!(p.decisions.is_empty());
    pump(&mut sites);
    sites[1].propose();
    pump(&mut sites);
    sites[0].propose();
    pump(&mut sites);
    assert!(sites[1].acg().is_committed(&x));
    assert!(!sites[0].has_undecided());
}

#[test]
fn persisted_site_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let config = SiteConfig {
        sites: vec![ParticipantId::new("a")],
        root: Some(dir.path().to_path_buf()),
        ..SiteConfig::default()
    };
    let make = || {
        let mut s = Site::new("a", config.clone()).unwrap();
        s.register_app(Box::new(ListApp));
        s
    };
    let mut s = make();
    s.open("d", "list").unwrap();
    let x = add(&mut s, "d", "");
    s.add_filter(&DocId::new("d"), FilterSpec::single("f", &ActionId::new("d", "z", 9)))
        .unwrap();
    s.propose();
    let out = s.take_outbox();
    s.on_multicast(&out.proposals[0]);
    let y = add(&mut s, "d", "");
    drop(s);

    let mut s = make();
    s.open("d", "list").unwrap();
    assert_eq!(s.replay_decisions().unwrap(), 1);
    assert!(s.acg().is_committed(&x));
    assert!(s.acg().contains(&y));
    assert_eq!(s.filters(&DocId::new("d")).len(), 1);
    let z = s.next_id(&DocId::new("d")).unwrap();
    assert_eq!(z.timestamp, 3);
}
