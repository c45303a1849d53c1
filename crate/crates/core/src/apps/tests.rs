use super::calendar::{self, calendar_doc};
use super::*;
use crate::acg::{Action, ActionId, Constraint, ConstraintKind, DocId};
use crate::site::{Application, Site, SiteConfig, View};

fn srda_site(me: &str) -> Site {
    let config = SiteConfig {
        sites: vec![me.into()],
        ..SiteConfig::default()
    };
    let mut s = Site::new(me, config).unwrap();
    s.register_app(Box::new(SrdaApp::default()));
    s.register_app(Box::new(CalendarApp));
    s
}

fn op_action(t: u64, issuer: &str, op: SrdaOp) -> Action {
    op.to_action(ActionId::new("d", issuer, t))
}

fn ins(tid: &str, a: &[(&str, &str)]) -> SrdaOp {
    SrdaOp::Insert {
        tid: tid.into(),
        attrs: attrs(a.iter().copied()),
    }
}

fn modify(tid: &str, a: &[(&str, &str)]) -> SrdaOp {
    SrdaOp::Modify {
        tid: tid.into(),
        attrs: attrs(a.iter().copied()),
    }
}

#[test]
fn dictionary_conflicts() {
    let mut app = SrdaApp::default();
    let nc = |v: &[Constraint]| v.len() == 1 && v[0].kind() == ConstraintKind::NonCommuting;
    let i1 = op_action(1, "p", ins("x", &[]));
    let i2 = op_action(1, "q", ins("x", &[]));
    let i3 = op_action(2, "q", ins("y", &[]));
    assert!(nc(&app.get_constraint(&i1, &i2)));
    assert!(app.get_constraint(&i1, &i3).is_empty());

    let m1 = op_action(3, "p", modify("x", &[("a", "1")]));
    let m2 = op_action(3, "q", modify("x", &[("b", "1")]));
    let m3 = op_action(4, "q", modify("x", &[("a", "2"), ("c", "1")]));
    assert!(app.get_constraint(&m1, &m2).is_empty());
    assert!(nc(&app.get_constraint(&m1, &m3)));
    assert!(app.get_constraint(&i1, &m2).is_empty());

    app.antagonistic_inserts = true;
    let v = app.get_constraint(&i1, &i2);
    assert_eq!(v.len(), 2);
    assert!(v.iter().all(|c| c.kind() == ConstraintKind::NotAfter));
}

#[test]
fn replay_semantics() {
    let mut d = DictState::default();
    d.apply(&op_action(1, "p", ins("x", &[("a", "1")])));
    d.apply(&op_action(2, "p", modify("x", &[("a", "2")])));
    assert_eq!(d.get("x"), Some(&attrs([("a", "2")])));
    let blob = d.materialise();
    d.apply(&op_action(3, "p", SrdaOp::Remove { tid: "x".into() }));
    assert!(d.is_empty());
    d.apply(&op_action(4, "p", modify("x", &[])));
    assert_eq!(d.skipped.len(), 1);

    let mut back = DictState::default();
    back.restore(&blob);
    assert_eq!(back.get("x"), Some(&attrs([("a", "2")])));
    // A second insert of a live tuple is a flagged no-op.
    back.apply(&op_action(1, "q", ins("x", &[("z", "9")])));
    assert_eq!(back.get("x"), Some(&attrs([("a", "2")])));
    assert_eq!(back.skipped, vec![ActionId::new("d", "q", 1)]);
}

fn constraints_into(site: &Site, id: &ActionId) -> Vec<Constraint> {
    site.acg()
        .constraints_touching(id)
        .iter()
        .filter(|c| c.b() == id)
        .cloned()
        .collect()
}

#[test]
fn sequential_constraints() {
    let mut site = srda_site("p");
    let doc = DocId::new("d");
    site.open("d", "srda").unwrap();
    let mut s = SrdaSession::new();
    let i = s.insert(&mut site, &doc, "x", attrs([("a", "1")])).unwrap();
    assert!(constraints_into(&site, &i).is_empty());
    assert!(matches!(
        s.insert(&mut site, &doc, "x", Attrs::new()),
        Err(SrdaError::TupleExists(_))
    ));
    let m = s.modify(&mut site, &doc, "x", attrs([("a", "2")])).unwrap();
    let into_m = constraints_into(&site, &m);
    assert!(into_m.contains(&Constraint::enables(i.clone(), m.clone())));
    assert!(into_m.contains(&Constraint::not_after(i.clone(), m.clone())));
    let r = s.remove(&mut site, &doc, "x").unwrap();
    assert!(constraints_into(&site, &r).contains(&Constraint::enables(i.clone(), r.clone())));
    // Session order.
    assert!(constraints_into(&site, &r).contains(&Constraint::not_after(m.clone(), r.clone())));
    let again = s.insert(&mut site, &doc, "x", Attrs::new()).unwrap();
    assert!(constraints_into(&site, &again).contains(&Constraint::not_after(r.clone(), again.clone())));
    assert!(matches!(
        s.remove(&mut site, &doc, "never"),
        Err(SrdaError::NoSuchTuple(_))
    ));
    assert_eq!(SrdaSession::read(&mut site, &doc, "x").unwrap(), Attrs::new());
}

#[test]
fn modifies_of_disjoint_attributes_are_unordered() {
    let mut site = srda_site("p");
    let doc = DocId::new("d");
    site.open("d", "srda").unwrap();
    let mut setup = SrdaSession::new();
    setup.insert(&mut site, &doc, "x", Attrs::new()).unwrap();
    let (mut s1, mut s2) = (SrdaSession::new(), SrdaSession::new());
    let m1 = s1.modify(&mut site, &doc, "x", attrs([("a", "1")])).unwrap();
    let m2 = s2.modify(&mut site, &doc, "x", attrs([("b", "1")])).unwrap();
    assert!(!constraints_into(&site, &m2).iter().any(|c| c.a() == &m1));
    let m3 = s2.modify(&mut site, &doc, "x", attrs([("a", "3")])).unwrap();
    assert!(constraints_into(&site, &m3).contains(&Constraint::not_after(m1, m3.clone())));
}

#[test]
fn aborted_insert_takes_dependents_along() {
    let mut site = srda_site("p");
    let doc = DocId::new("d");
    site.open("d", "srda").unwrap();
    let mut s = SrdaSession::new();
    let i = s.insert(&mut site, &doc, "x", Attrs::new()).unwrap();
    s.modify(&mut site, &doc, "x", attrs([("a", "1")])).unwrap();
    let other = s.insert(&mut site, &doc, "y", Attrs::new()).unwrap();
    site.abort(&i).unwrap();
    site.deliver_schedules();
    assert_eq!(site.delivered(&doc), &[other]);
    assert!(SrdaSession::view(&mut site, &doc).unwrap().get("x").is_none());
}

#[test]
fn session_orders_writes_across_documents() {
    let mut site = srda_site("p");
    site.open("d", "srda").unwrap();
    site.open("e", "srda").unwrap();
    let mut s = SrdaSession::new();
    let w1 = s.insert(&mut site, &DocId::new("d"), "x", Attrs::new()).unwrap();
    let w2 = s.insert(&mut site, &DocId::new("e"), "x", Attrs::new()).unwrap();
    assert!(constraints_into(&site, &w2).contains(&Constraint::not_after(w1, w2.clone())));
    assert_eq!(site.groups().len(), 1);
}

#[test]
fn invitations_collide_across_events() {
    let mut app = CalendarApp;
    let inv = |doc: &str, issuer: &str, user: &str, slot: &str| {
        CalendarOp::Invite {
            event: doc.into(),
            user: user.into(),
            slot: slot.into(),
        }
        .to_action(ActionId::new(doc, issuer, 1))
    };
    let c = inv("GL", "lamia", "marc", "mon");
    let e = inv("NS1", "jm", "marc", "mon");
    let f = inv("NS2", "jm", "marc", "tue");
    assert!(c.shares_key_with(&e));
    assert!(!c.shares_key_with(&f));
    assert_eq!(app.get_constraint(&c, &e).len(), 2);
    assert!(app.get_constraint(&c, &f).is_empty());
    let open = CalendarOp::OpenEvent { event: "GL".into() }.to_action(ActionId::new("cal-marc", "lamia", 1));
    assert!(open.keys.is_empty());
}

#[test]
fn events_group_atomically() {
    let mut site = srda_site("jm");
    let mut ns = calendar::create_event(&mut site, "NS", "seminar", "mon", "jm").unwrap();
    calendar::invite(&mut site, &mut ns, "marc").unwrap();
    site.deliver_schedules();
    let view = site.view_as::<CalendarView>(&ns.doc()).unwrap();
    assert_eq!(view.events["NS"].invited.len(), 2);
    let marc = site.view_as::<CalendarView>(&calendar_doc("marc")).unwrap();
    assert!(marc.opened.contains("NS"));
    // Aborting the enable drops every invitation and calendar entry.
    site.abort(&ns.enable).unwrap();
    site.deliver_schedules();
    assert!(site.delivered(&ns.doc()).is_empty());
    assert!(site.delivered(&calendar_doc("marc")).is_empty());
    assert!(calendar::double_bookings(&site).is_empty());
}

#[test]
fn alternatives_never_double_book() {
    let mut site = srda_site("jm");
    let mut a = calendar::create_event(&mut site, "A", "x", "mon", "jm").unwrap();
    let mut b = calendar::create_event(&mut site, "B", "x", "mon", "jm").unwrap();
    calendar::invite(&mut site, &mut a, "marc").unwrap();
    calendar::invite(&mut site, &mut b, "marc").unwrap();
    site.deliver_schedules();
    assert_eq!(calendar::double_bookings(&site).len(), 2);
    calendar::alternatives(&mut site, &a, &b).unwrap();
    site.deliver_schedules();
    assert!(calendar::double_bookings(&site).is_empty());
    assert_eq!(site.schedules(&a.doc()).len(), 2);
}
