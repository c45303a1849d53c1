use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acg::ParticipantId;
use crate::multilog::LogKey;

/// Sites are named by the participant they host.
pub type SiteId = ParticipantId;

/// Something the simulator hands to a site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Event {
    /// New bytes of a remote log. `offset` is where they start; they always
    /// extend the destination's replica exactly.
    LogData {
        dest: SiteId,
        log: LogKey,
        offset: u64,
        bytes: Vec<u8>,
    },
    /// The `seq`-th message of the global multicast order.
    Multicast {
        dest: SiteId,
        seq: u64,
        sender: SiteId,
        bytes: Arc<Vec<u8>>,
    },
    Timer {
        site: SiteId,
        tag: u32,
    },
    /// A scripted event registered with [`SimNet::at`].
    Script(usize),
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("not quiescent after {0} ticks")]
    NotQuiescent(u64),
    #[error("unknown site {0}")]
    UnknownSite(SiteId),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    Log {
        dest: SiteId,
        log: LogKey,
        from: u64,
        to: u64,
    },
    Sequence {
        sender: SiteId,
        bytes: Arc<Vec<u8>>,
    },
    Ready {
        dest: SiteId,
        upto: u64,
    },
    Timer {
        site: SiteId,
        tag: u32,
    },
    Script(usize),
}

#[derive(Debug, Default)]
struct Channel {
    /// Bytes the destination holds.
    acked: u64,
    /// Bytes already scheduled for delivery.
    sent: u64,
    /// Latest delivery tick scheduled, to keep the channel FIFO.
    last_tick: u64,
}

#[derive(Debug, Default)]
struct Member {
    delivered: u64,
    ready: u64,
    /// FIFO bounds for the links to and from the sequencer.
    send_tick: u64,
    recv_tick: u64,
    /// Messages this site multicast while disconnected.
    outbox: Vec<Arc<Vec<u8>>>,
}

/// Deterministic discrete-time network. One tick is one simulated
/// millisecond. Everything is a function of the seed and the calls made.
#[derive(Debug)]
pub struct SimNet {
    clock: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64, Pending)>>,
    rng: ChaCha8Rng,
    latency: (u64, u64),
    sites: BTreeSet<SiteId>,
    disconnected: BTreeSet<SiteId>,
    sources: BTreeMap<LogKey, Vec<u8>>,
    channels: BTreeMap<(LogKey, SiteId), Channel>,
    sequenced: Vec<(SiteId, Arc<Vec<u8>>)>,
    members: BTreeMap<SiteId, Member>,
}

impl SimNet {
    pub fn new(seed: u64, latency: (u64, u64)) -> Self {
        let (lo, hi) = latency;
        SimNet {
            clock: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            latency: (lo.min(hi), hi.max(lo)),
            sites: BTreeSet::new(),
            disconnected: BTreeSet::new(),
            sources: BTreeMap::new(),
            channels: BTreeMap::new(),
            sequenced: Vec::new(),
            members: BTreeMap::new(),
        }
    }

    pub fn add_site(&mut self, site: impl Into<SiteId>) {
        let site = site.into();
        self.members.entry(site.clone()).or_default();
        self.sites.insert(site);
    }

    pub fn sites(&self) -> impl Iterator<Item = &SiteId> {
        self.sites.iter()
    }

    pub fn now(&self) -> u64 {
        self.clock
    }

    pub fn is_connected(&self, site: &SiteId) -> bool {
        !self.disconnected.contains(site)
    }

    /// Source content of a log, as written by its owner.
    pub fn source(&self, log: &LogKey) -> &[u8] {
        self.sources.get(log).map_or(&[], |v| v.as_slice())
    }

    /// Bytes of `log` that `site` holds.
    pub fn replica_len(&self, log: &LogKey, site: &SiteId) -> u64 {
        if &log.participant == site {
            return self.source(log).len() as u64;
        }
        self.channels.get(&(log.clone(), site.clone())).map_or(0, |c| c.acked)
    }

    fn push(&mut self, tick: u64, p: Pending) {
        self.seq += 1;
        self.queue.push(Reverse((tick, self.seq, p)));
    }

    fn latency(&mut self) -> u64 {
        self.rng.gen_range(self.latency.0..=self.latency.1)
    }

    /// The owner of `log` appended `bytes` to it.
    pub fn publish_append(&mut self, log: &LogKey, bytes: &[u8]) {
        self.sources.entry(log.clone()).or_default().extend_from_slice(bytes);
        let dests: Vec<SiteId> = self.sites.iter().filter(|s| **s != log.participant).cloned().collect();
        for dest in dests {
            self.flush_channel(log, &dest);
        }
    }

    fn flush_channel(&mut self, log: &LogKey, dest: &SiteId) {
        if !self.is_connected(dest) || !self.is_connected(&log.participant) {
            return;
        }
        let len = self.source(log).len() as u64;
        let lat = self.latency();
        let now = self.clock;
        let ch = self.channels.entry((log.clone(), dest.clone())).or_default();
        if ch.sent >= len {
            return;
        }
        let from = ch.sent;
        ch.sent = len;
        let tick = (now + lat).max(ch.last_tick);
        ch.last_tick = tick;
        self.push(
            tick,
            Pending::Log {
                dest: dest.clone(),
                log: log.clone(),
                from,
                to: len,
            },
        );
    }

    /// Atomically multicasts `bytes` to every site, the sender included.
    /// A disconnected sender's message leaves when it reconnects.
    pub fn amcast(&mut self, sender: &SiteId, bytes: Vec<u8>) {
        let bytes = Arc::new(bytes);
        if !self.is_connected(sender) {
            self.members.entry(sender.clone()).or_default().outbox.push(bytes);
            return;
        }
        self.send_to_sequencer(sender.clone(), bytes);
    }

    fn send_to_sequencer(&mut self, sender: SiteId, bytes: Arc<Vec<u8>>) {
        let lat = self.latency();
        // The sequencer link is FIFO per sender as well.
        let m = self.members.entry(sender.clone()).or_default();
        let tick = (self.clock + lat).max(m.send_tick);
        m.send_tick = tick;
        self.push(tick, Pending::Sequence { sender, bytes });
    }

    pub fn set_timer(&mut self, site: &SiteId, delay: u64, tag: u32) {
        self.push(
            self.clock + delay.max(1),
            Pending::Timer {
                site: site.clone(),
                tag,
            },
        );
    }

    /// Registers a scripted event at an absolute tick.
    pub fn at(&mut self, tick: u64, index: usize) {
        self.push(tick.max(self.clock), Pending::Script(index));
    }

    pub fn disconnect(&mut self, site: &SiteId) {
        self.disconnected.insert(site.clone());
        // Undelivered bytes to or from the site must be sent again later.
        for ((log, dest), ch) in self.channels.iter_mut() {
            if dest == site || &log.participant == site {
                ch.sent = ch.acked;
            }
        }
    }

    /// Schedules catch-up of everything the site missed or held back.
    pub fn reconnect(&mut self, site: &SiteId) {
        if !self.disconnected.remove(site) {
            return;
        }
        let logs: Vec<LogKey> = self.sources.keys().cloned().collect();
        let sites: Vec<SiteId> = self.sites.iter().cloned().collect();
        for log in &logs {
            for dest in &sites {
                if dest != &log.participant && (dest == site || &log.participant == site) {
                    self.flush_channel(log, dest);
                }
            }
        }
        let outbox = std::mem::take(&mut self.members.entry(site.clone()).or_default().outbox);
        for bytes in outbox {
            self.send_to_sequencer(site.clone(), bytes);
        }
        // Multicast messages that became ready meanwhile.
        self.push(
            self.clock,
            Pending::Ready {
                dest: site.clone(),
                upto: 0,
            },
        );
    }

    fn release(&mut self, dest: &SiteId) -> Vec<Event> {
        let mut out = Vec::new();
        if !self.is_connected(dest) {
            return out;
        }
        let m = self.members.entry(dest.clone()).or_default();
        while m.delivered < m.ready {
            let (sender, bytes) = &self.sequenced[m.delivered as usize];
            out.push(Event::Multicast {
                dest: dest.clone(),
                seq: m.delivered,
                sender: sender.clone(),
                bytes: bytes.clone(),
            });
            m.delivered += 1;
        }
        out
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    /// Advances to the next pending item and returns the events it yields
    /// (possibly none). `None` once the queue is empty.
    pub fn step(&mut self) -> Option<Vec<Event>> {
        let Reverse((tick, _, item)) = self.queue.pop()?;
        self.clock = self.clock.max(tick);
        let mut out = Vec::new();
        match item {
            Pending::Log { dest, log, from, to } => {
                let connected = self.is_connected(&dest) && self.is_connected(&log.participant);
                let source_len = self.source(&log).len() as u64;
                let ch = self.channels.entry((log.clone(), dest.clone())).or_default();
                if !connected {
                    ch.sent = ch.acked;
                } else if from <= ch.acked && ch.acked < to {
                    let start = ch.acked;
                    ch.acked = to;
                    debug_assert!(to <= source_len);
                    let bytes = self.sources[&log][start as usize..to as usize].to_vec();
                    out.push(Event::LogData {
                        dest,
                        log,
                        offset: start,
                        bytes,
                    });
                }
            }
            Pending::Sequence { sender, bytes } => {
                let index = self.sequenced.len() as u64;
                self.sequenced.push((sender, bytes));
                let dests: Vec<SiteId> = self.sites.iter().cloned().collect();
                for dest in dests {
                    let lat = self.latency();
                    let m = self.members.entry(dest.clone()).or_default();
                    let tick = (self.clock + lat).max(m.recv_tick);
                    m.recv_tick = tick;
                    self.push(tick, Pending::Ready { dest, upto: index + 1 });
                }
            }
            Pending::Ready { dest, upto } => {
                let m = self.members.entry(dest.clone()).or_default();
                m.ready = m.ready.max(upto);
                out = self.release(&dest);
            }
            Pending::Timer { site, tag } => out.push(Event::Timer { site, tag }),
            Pending::Script(i) => out.push(Event::Script(i)),
        }
        Some(out)
    }

    /// Runs until nothing is pending, feeding every event to `handler`.
    /// Returns the tick reached.
    pub fn run_until_quiescent(
        &mut self,
        max_ticks: u64,
        mut handler: impl FnMut(&mut SimNet, Event),
    ) -> Result<u64, SimError> {
        while let Some(Reverse((tick, _, _))) = self.queue.peek() {
            if *tick > max_ticks {
                self.clock = max_ticks;
                return Err(SimError::NotQuiescent(max_ticks));
            }
            let events = self.step().expect("peeked");
            for ev in events {
                handler(self, ev);
            }
        }
        Ok(self.clock)
    }
}
