use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;

fn net(seed: u64, lat: (u64, u64), sites: &[&str]) -> SimNet {
    let mut n = SimNet::new(seed, lat);
    for s in sites {
        n.add_site(*s);
    }
    n
}

/// Replays events into per-site replicas and multicast histories.
#[derive(Default)]
struct Recorder {
    replicas: BTreeMap<(SiteId, LogKey), Vec<u8>>,
    delivered: BTreeMap<SiteId, Vec<(u64, Vec<u8>)>>,
}

impl Recorder {
    fn on(&mut self, ev: Event) {
        match ev {
            Event::LogData {
                dest,
                log,
                offset,
                bytes,
            } => {
                let r = self.replicas.entry((dest, log)).or_default();
                assert_eq!(r.len() as u64, offset, "gap or overlap in delivery");
                r.extend(bytes);
            }
            Event::Multicast { dest, seq, bytes, .. } => {
                self.delivered.entry(dest).or_default().push((seq, bytes.to_vec()));
            }
            _ => {}
        }
    }
}

#[test]
fn empty_net_is_quiescent_at_zero() {
    let mut n = net(1, (1, 1), &[]);
    assert_eq!(n.run_until_quiescent(10, |_, _| {}).unwrap(), 0);
}

#[test]
fn single_append_arrives_after_one_tick() {
    let mut n = net(1, (1, 1), &["a", "b"]);
    let log = LogKey::new("d", "a");
    n.publish_append(&log, b"xyz");
    let mut rec = Recorder::default();
    assert_eq!(n.run_until_quiescent(10, |_, e| rec.on(e)).unwrap(), 1);
    assert_eq!(rec.replicas[&("b".into(), log.clone())], b"xyz");
    assert_eq!(n.replica_len(&log, &"b".into()), 3);
}

#[test]
fn appends_arrive_in_source_order() {
    let mut n = net(7, (1, 50), &["a", "b"]);
    let log = LogKey::new("d", "a");
    let mut rec = Recorder::default();
    for i in 0..20u8 {
        n.publish_append(&log, &[i]);
        n.set_timer(&"a".into(), 3, 0);
        n.step().into_iter().flatten().for_each(|e| rec.on(e));
    }
    n.run_until_quiescent(1000, |_, e| rec.on(e)).unwrap();
    assert_eq!(rec.replicas[&("b".into(), log)], (0..20).collect::<Vec<u8>>());
}

#[test]
fn disconnected_site_catches_up_on_reconnect() {
    let mut n = net(3, (1, 10), &["a", "b", "c"]);
    let log = LogKey::new("d", "a");
    n.disconnect(&"c".into());
    n.publish_append(&log, b"hello");
    let mut rec = Recorder::default();
    n.run_until_quiescent(1000, |_, e| rec.on(e)).unwrap();
    assert_eq!(rec.replicas[&("b".into(), log.clone())], b"hello");
    assert!(!rec.replicas.contains_key(&("c".into(), log.clone())));
    n.reconnect(&"c".into());
    n.run_until_quiescent(1000, |_, e| rec.on(e)).unwrap();
    assert_eq!(rec.replicas[&("c".into(), log)], b"hello");
}

#[test]
fn multicast_is_totally_ordered() {
    let mut n = net(11, (1, 30), &["a", "b", "c"]);
    n.amcast(&"a".into(), b"from-a".to_vec());
    n.amcast(&"b".into(), b"from-b".to_vec());
    n.disconnect(&"c".into());
    let mut rec = Recorder::default();
    n.run_until_quiescent(1000, |_, e| rec.on(e)).unwrap();
    assert!(!rec.delivered.contains_key(&SiteId::from("c")));
    n.reconnect(&"c".into());
    n.run_until_quiescent(1000, |_, e| rec.on(e)).unwrap();
    let a = &rec.delivered[&SiteId::from("a")];
    assert_eq!(a.len(), 2);
    for s in ["b", "c"] {
        assert_eq!(&rec.delivered[&SiteId::from(s)], a);
    }
}

#[test]
fn disconnected_sender_is_buffered() {
    let mut n = net(2, (1, 5), &["a", "b"]);
    n.disconnect(&"a".into());
    n.amcast(&"a".into(), vec![1]);
    let mut rec = Recorder::default();
    n.run_until_quiescent(100, |_, e| rec.on(e)).unwrap();
    assert!(rec.delivered.is_empty());
    n.reconnect(&"a".into());
    n.run_until_quiescent(100, |_, e| rec.on(e)).unwrap();
    assert_eq!(rec.delivered[&SiteId::from("b")], vec![(0, vec![1])]);
}

#[test]
fn reports_livelock() {
    let mut n = net(2, (1, 5), &["a"]);
    let r = n.run_until_quiescent(100, |net, e| {
        if let Event::Timer { site, .. } = e {
            net.set_timer(&site, 10, 0);
        }
    });
    assert!(r.is_ok());
    n.set_timer(&"a".into(), 10, 0);
    let r = n.run_until_quiescent(100, |net, e| {
        if let Event::Timer { site, .. } = e {
            net.set_timer(&site, 10, 0);
        }
    });
    assert_eq!(r, Err(SimError::NotQuiescent(100)));
}

fn chaos(seed: u64, ops: &[(u8, u8)]) -> (u64, Recorder, SimNet) {
    let sites = ["a", "b", "c"];
    let mut n = net(seed, (1, 40), &sites);
    let mut rec = Recorder::default();
    for (i, (kind, arg)) in ops.iter().enumerate() {
        let site = SiteId::from(sites[*arg as usize % 3]);
        match kind % 4 {
            0 => n.disconnect(&site),
            1 => n.reconnect(&site),
            2 => n.publish_append(&LogKey::new("d", site.clone()), &[i as u8]),
            _ => n.amcast(&site, vec![i as u8]),
        }
        n.set_timer(&site, 5, 0);
        n.step().into_iter().flatten().for_each(|e| rec.on(e));
    }
    for s in sites {
        n.reconnect(&s.into());
    }
    let t = n.run_until_quiescent(1_000_000, |_, e| rec.on(e)).unwrap();
    (t, rec, n)
}

proptest! {
    #[test]
    fn replicas_converge_to_sources(seed in any::<u64>(), ops in proptest::collection::vec((any::<u8>(), any::<u8>()), 0..80)) {
        let (t, rec, n) = chaos(seed, &ops);
        for ((dest, log), bytes) in &rec.replicas {
            prop_assert_eq!(bytes.as_slice(), n.source(log));
            prop_assert_eq!(n.replica_len(log, dest), bytes.len() as u64);
        }
        let orders: Vec<_> = rec.delivered.values().collect();
        for w in orders.windows(2) {
            prop_assert_eq!(w[0], w[1]);
        }
        let (t2, rec2, _) = chaos(seed, &ops);
        prop_assert_eq!(t, t2);
        prop_assert_eq!(rec.delivered, rec2.delivered);
    }
}
