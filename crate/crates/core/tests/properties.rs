use std::collections::HashSet;

use acg_replica::acg::{
    check_sound, derived, is_sound, Acg, Action, ActionId, Constraint, ConstraintKind, Derived, Violation,
};
use acg_replica::apps::{attrs, DictState, SrdaError, SrdaSession};
use acg_replica::harness::{Driver, DriverConfig};
use acg_replica::multilog::codec::{decode, encode, Frame};
use acg_replica::multilog::{LogDir, Record};
use acg_replica::scheduler::{next_schedules, ScheduleRequest};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn id(i: usize) -> ActionId {
    ActionId::new("d", format!("p{}", i % 3), (i / 3 + 1) as u64)
}

fn kind(k: u8) -> ConstraintKind {
    match k % 3 {
        0 => ConstraintKind::NotAfter,
        1 => ConstraintKind::Enables,
        _ => ConstraintKind::NonCommuting,
    }
}

fn graph(n: usize, edges: &[(usize, usize, u8)]) -> Acg {
    let mut g = Acg::new();
    for i in 0..n {
        g.add_action(Action::new(id(i), "t")).unwrap();
    }
    for &(a, b, k) in edges {
        if a % n != b % n {
            g.add_constraint(Constraint::new(kind(k), id(a % n), id(b % n)));
        }
    }
    g
}

fn edges(max: usize) -> impl Strategy<Value = Vec<(usize, usize, u8)>> {
    prop::collection::vec((0..64usize, 0..64usize, any::<u8>()), 0..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dropping_a_suffix_keeps_not_after(n in 1usize..30, es in edges(60), seed in any::<u64>()) {
        let g = graph(n, &es);
        for s in next_schedules(&g, &ScheduleRequest::default().seed(seed), &HashSet::new()) {
            for cut in 0..=s.order.len() {
                let v = check_sound(&g, &s.order[..cut]).unwrap();
                let is_order_violation = matches!(v, Some(Violation::Order { .. } | Violation::SelfExcluded(_)));
                prop_assert!(!is_order_violation, "{v:?}");
            }
        }
    }

    #[test]
    fn antagonistic_pair_never_together(n in 2usize..7, es in edges(10), seed in any::<u64>()) {
        let mut g = graph(n, &es);
        for c in derived(Derived::Antagonism, &id(0), &id(1)) {
            g.add_constraint(c);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let mut order: Vec<ActionId> = (0..n).map(id).filter(|_| rng.gen_bool(0.6)).collect();
            order.extend([id(0), id(1)]);
            order.sort();
            order.dedup();
            order.shuffle(&mut rng);
            prop_assert!(!is_sound(&g, &order).unwrap());
        }
        for s in next_schedules(&g, &ScheduleRequest::default().seed(seed), &HashSet::new()) {
            prop_assert!(!(s.contains(&id(0)) && s.contains(&id(1))));
        }
    }

    #[test]
    fn non_commuting_is_orientation_free(a in 0usize..10, b in 0usize..10) {
        prop_assume!(a != b);
        let mut x = graph(10, &[]);
        let mut y = graph(10, &[]);
        x.add_constraint(Constraint::non_commuting(id(a), id(b)));
        y.add_constraint(Constraint::non_commuting(id(b), id(a)));
        prop_assert!(x.same_content(&y));
    }

    #[test]
    fn insertion_order_is_irrelevant(n in 1usize..20, es in edges(40), seed in any::<u64>()) {
        let reference = graph(n, &es);
        enum Call { Action(usize), Constraint(usize, usize, u8) }
        let mut calls: Vec<Call> = (0..n).map(Call::Action).collect();
        calls.extend(es.iter().filter(|(a, b, _)| a % n != b % n).map(|&(a, b, k)| Call::Constraint(a % n, b % n, k)));
        calls.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut g = Acg::new();
        for c in calls {
            match c {
                Call::Action(i) => { g.add_action(Action::new(id(i), "t")).unwrap(); }
                Call::Constraint(a, b, k) => { g.add_constraint(Constraint::new(kind(k), id(a), id(b))); }
            }
        }
        prop_assert!(g.same_content(&reference));
    }

    #[test]
    fn scheduling_is_deterministic(n in 1usize..40, es in edges(80), seed in any::<u64>()) {
        let g = graph(n, &es);
        let req = ScheduleRequest::default().seed(seed).local("p1");
        prop_assert_eq!(
            next_schedules(&g, &req, &HashSet::new()),
            next_schedules(&g.clone(), &req, &HashSet::new())
        );
    }

    #[test]
    fn codec_round_trips_and_detects_flips(
        doc in "[a-z]{1,8}", issuer in "[a-z0-9]{1,8}", ts in 1u64.., keys in prop::collection::btree_set(any::<u64>(), 0..4),
        attrs in prop::collection::btree_map("[a-z]{1,4}", "\\PC{0,8}", 0..4),
        payload in prop::collection::vec(any::<u8>(), 0..64), flip in any::<prop::sample::Index>(), bit in 0u8..8,
    ) {
        let mut a = Action::new(ActionId::new(doc, issuer, ts), "srda").with_keys(keys).with_payload(payload);
        a.attributes = attrs;
        let rec = Record::Action(a);
        let bytes = encode(&rec);
        prop_assert_eq!(decode(&bytes).unwrap(), Frame::Complete(rec, bytes.len()));
        let mut damaged = bytes.clone();
        let at = flip.index(damaged.len());
        damaged[at] ^= 1 << bit;
        // A flipped length byte may make the frame look longer than the buffer.
        prop_assert!(!matches!(decode(&damaged), Ok(Frame::Complete(..))));
    }

    #[test]
    fn appends_never_rewrite_earlier_bytes(sizes in prop::collection::vec(0usize..200, 1..30), threshold in 32u64..600) {
        let dir = tempfile::tempdir().unwrap();
        let mut log = LogDir::open_owned(dir.path(), "me".into()).unwrap().with_chunk_threshold(threshold);
        let mut seen: Vec<(u64, Vec<u8>)> = Vec::new();
        for (i, size) in sizes.into_iter().enumerate() {
            log.append(&Record::Proposal(vec![i as u8; size])).unwrap();
            for (seq, before) in &seen {
                let now = std::fs::read(log.chunk_path(*seq)).unwrap();
                prop_assert!(now.starts_with(before), "chunk {seq} rewritten");
            }
            seen = log.chunks().unwrap().into_iter().map(|s| (s, std::fs::read(log.chunk_path(s)).unwrap())).collect();
        }
    }
}

fn random_round(driver: &mut Driver, names: &[&str], rng: &mut ChaCha8Rng, sessions: &mut [SrdaSession]) {
    let doc = "dict".into();
    for _ in 0..rng.gen_range(1..6) {
        let s = rng.gen_range(0..names.len());
        let tid = format!("t{}", rng.gen_range(0..4));
        let op = rng.gen_range(0..3);
        let session = &mut sessions[s];
        let r = driver
            .act(names[s], |site| match op {
                0 => session.insert(site, &doc, &tid, attrs([("v", "1")])),
                1 => session.modify(site, &doc, &tid, attrs([("w", "2")])),
                _ => session.remove(site, &doc, &tid),
            })
            .unwrap();
        assert!(
            matches!(r, Ok(_) | Err(SrdaError::TupleExists(_) | SrdaError::NoSuchTuple(_))),
            "{r:?}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sites_agree_on_a_sound_committed_prefix(seed in any::<u64>(), rounds in 1usize..6) {
        let names = ["a", "b", "c"];
        let config = DriverConfig { seed, latency: (1, 30), ..DriverConfig::default() };
        let mut driver = Driver::new(&names, config).unwrap();
        for n in names {
            driver.act(n, |s| s.open("dict", "srda")).unwrap().unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sessions = [SrdaSession::new(), SrdaSession::new(), SrdaSession::new()];
        for _ in 0..rounds {
            random_round(&mut driver, &names, &mut rng, &mut sessions);
            driver.settle(1_000_000).unwrap();
        }
        let w = &driver.world;
        prop_assert!(w.all_decided());
        prop_assert!(w.prefixes_agree());
        prop_assert_eq!(w.stability_violations(), 0);
        let mut states = Vec::new();
        for site in w.sites() {
            let prefix = site.commit_state().committed_prefix();
            prop_assert!(is_sound(site.acg(), prefix).unwrap());
            let once = DictState::replay(site.acg(), &"dict".into(), prefix);
            prop_assert_eq!(&once, &DictState::replay(site.acg(), &"dict".into(), prefix));
            states.push(once);
        }
        prop_assert!(states.windows(2).all(|p| p[0] == p[1]));
    }
}
