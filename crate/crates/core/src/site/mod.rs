//! One replica site: documents, application upcalls, scheduling rounds and
//! proposals.
//!
//! A site keeps a single graph with every action and constraint it has
//! seen. Documents linked by undecided cross-document constraints form bound
//! groups that are scheduled together; each document's application view
//! receives the projection of its group's best schedule. Proposals are built
//! from the unfiltered graph.
//!
//! Sites never touch the network directly. Records to publish and proposals
//! to multicast accumulate in an [`Outbox`] that the driver drains.

mod app;
mod groups;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::PathBuf;

pub use app::{Application, KeyScope, View};
pub use groups::bound_groups;

use crate::acg::{Acg, AcgError, Action, ActionId, Constraint, ConstraintRecord, DocId, ParticipantId};
use crate::multilog::codec::{self, Frame, Record};
use crate::multilog::{
    CompiledFilter, Cursor, DocumentDir, FilterSpec, LogDir, LogKey, MultilogError, DEFAULT_CHUNK_THRESHOLD,
};
use crate::reconciler::{CommitState, Delivered, Fifo, Frontier, Proposal, ProposalInput, Reconciler};
use crate::scheduler::{next_schedules, Schedule, ScheduleId, ScheduleRequest};

/// Timer tag of the periodic scheduling round.
pub const SCHEDULE_TIMER: u32 = 1;
/// Timer tag of the periodic proposal.
pub const PROPOSE_TIMER: u32 = 2;

#[derive(Clone, Debug)]
pub struct SiteConfig {
    /// Every site taking part, this one included.
    pub sites: Vec<ParticipantId>,
    pub schedule_period: u64,
    pub proposal_period: u64,
    pub candidates: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Where local logs, filters and decisions are persisted, if anywhere.
    pub root: Option<PathBuf>,
    pub chunk_threshold: u64,
}

impl Default for SiteConfig {
    fn default() -> Self {
        SiteConfig {
            sites: Vec::new(),
            schedule_period: 100,
            proposal_period: 100,
            candidates: 4,
            restarts: 4,
            seed: 0,
            root: None,
            chunk_threshold: DEFAULT_CHUNK_THRESHOLD,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SiteError {
    #[error("document {0} is not open")]
    DocNotOpen(DocId),
    #[error("no application registered for {0:?}")]
    UnknownApp(String),
    #[error("{0} is not issued by this site")]
    ForeignIssuer(ActionId),
    #[error("timestamp of {0} was not reserved")]
    StaleTimestamp(ActionId),
    #[error("action {0} is not known here")]
    UnknownAction(ActionId),
    #[error("action {0} is already committed")]
    AlreadyCommitted(ActionId),
    #[error("no filter {0:?}")]
    NoSuchFilter(String),
    #[error("invalid filter: {0}")]
    BadFilter(#[from] regex::Error),
    #[error(transparent)]
    Storage(#[from] MultilogError),
    #[error(transparent)]
    Graph(#[from] AcgError),
}

/// How a view was brought up to date with a new sub-schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    NoOp,
    /// The old schedule was a prefix of the new one.
    Extend {
        applied: usize,
    },
    /// State was restored from a checkpoint and the rest replayed.
    Rollback {
        replayed: usize,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SiteStats {
    pub upcalls: u64,
    pub noops: u64,
    pub extends: u64,
    pub rollbacks: u64,
    pub malformed: u64,
    pub proposals: u64,
    pub schedule_rounds: u64,
}

/// Work for the network produced by a site.
#[derive(Debug, Default)]
pub struct Outbox {
    /// New bytes of this site's logs.
    pub appends: BTreeMap<LogKey, Vec<u8>>,
    /// Encoded proposals to multicast.
    pub proposals: Vec<Vec<u8>>,
}

impl Outbox {
    pub fn is_empty(&self) -> bool {
        self.appends.is_empty() && self.proposals.is_empty()
    }
}

#[derive(Debug, Default)]
struct Replica {
    len: u64,
    tail: Vec<u8>,
    broken: bool,
}

struct Checkpoint {
    ids: Vec<ActionId>,
    blob: Vec<u8>,
}

struct DocContext {
    app_tag: String,
    open: bool,
    filters: Vec<(FilterSpec, CompiledFilter)>,
    view: Box<dyn View>,
    empty: Vec<u8>,
    delivered: Vec<ActionId>,
    delivered_id: Option<ScheduleId>,
    checkpoint: Checkpoint,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum KeyDomain {
    Doc(DocId),
    App(String),
}

pub struct Site {
    me: ParticipantId,
    config: SiteConfig,
    acg: Acg,
    apps: BTreeMap<String, Box<dyn Application>>,
    docs: BTreeMap<DocId, DocContext>,
    stores: BTreeMap<DocId, DocumentDir>,
    reconciler: Fifo,
    replicas: BTreeMap<LogKey, Replica>,
    positions: HashMap<ActionId, (LogKey, u64)>,
    key_index: HashMap<(KeyDomain, u64), Vec<ActionId>>,
    upcalled: HashSet<(ActionId, ActionId)>,
    upcall_log: Vec<(ActionId, ActionId)>,
    clocks: HashMap<DocId, u64>,
    cross: Vec<Constraint>,
    cross_seen: HashSet<Constraint>,
    undecided: BTreeSet<ActionId>,
    candidates: BTreeMap<DocId, Vec<Schedule>>,
    last_round: Option<(u64, u64)>,
    filter_version: u64,
    recovered: BTreeSet<DocId>,
    decisions_log: Option<LogDir>,
    outbox: Outbox,
    submitted: Vec<ActionId>,
    stats: SiteStats,
}

impl Site {
    pub fn new(me: impl Into<ParticipantId>, config: SiteConfig) -> Result<Self, SiteError> {
        let me = me.into();
        let decisions_log = match &config.root {
            Some(root) => Some(LogDir::open_owned(root.join(format!(".decisions-{me}")), me.clone())?),
            None => None,
        };
        Ok(Site {
            reconciler: Fifo::new(me.clone()),
            me,
            config,
            acg: Acg::new(),
            apps: BTreeMap::new(),
            docs: BTreeMap::new(),
            stores: BTreeMap::new(),
            replicas: BTreeMap::new(),
            positions: HashMap::new(),
            key_index: HashMap::new(),
            upcalled: HashSet::new(),
            upcall_log: Vec::new(),
            clocks: HashMap::new(),
            cross: Vec::new(),
            cross_seen: HashSet::new(),
            undecided: BTreeSet::new(),
            candidates: BTreeMap::new(),
            last_round: None,
            filter_version: 0,
            recovered: BTreeSet::new(),
            decisions_log,
            outbox: Outbox::default(),
            submitted: Vec::new(),
            stats: SiteStats::default(),
        })
    }

    pub fn participant(&self) -> &ParticipantId {
        &self.me
    }

    pub fn config(&self) -> &SiteConfig {
        &self.config
    }

    pub fn register_app(&mut self, app: Box<dyn Application>) {
        self.apps.insert(app.app_tag().to_owned(), app);
    }

    pub fn acg(&self) -> &Acg {
        &self.acg
    }

    pub fn commit_state(&self) -> &CommitState {
        self.reconciler.state()
    }

    pub fn stats(&self) -> &SiteStats {
        &self.stats
    }

    /// Every (earlier, later) pair passed to `get_constraint`, in call order.
    pub fn upcalls(&self) -> &[(ActionId, ActionId)] {
        &self.upcall_log
    }

    pub fn has_undecided(&self) -> bool {
        !self.undecided.is_empty()
    }

    /// Local actions in submission order.
    pub fn submitted(&self) -> &[ActionId] {
        &self.submitted
    }

    /// Whether the graph or filters changed since the last scheduling round.
    pub fn needs_schedule(&self) -> bool {
        self.last_round != Some((self.acg.generation(), self.filter_version))
    }

    pub fn take_outbox(&mut self) -> Outbox {
        std::mem::take(&mut self.outbox)
    }

    /// Bytes held of every log this site knows.
    pub fn frontier(&self) -> Frontier {
        self.replicas.iter().map(|(k, r)| (k.clone(), r.len)).collect()
    }

    fn store(&mut self, doc: &DocId) -> Result<Option<&mut DocumentDir>, SiteError> {
        let Some(root) = &self.config.root else { return Ok(None) };
        if !self.stores.contains_key(doc) {
            let d = DocumentDir::open_with_threshold(root, doc.clone(), self.me.clone(), self.config.chunk_threshold)?;
            self.stores.insert(doc.clone(), d);
        }
        Ok(self.stores.get_mut(doc))
    }

    fn context(&mut self, doc: &DocId, app_tag: &str) -> Result<&mut DocContext, SiteError> {
        if !self.docs.contains_key(doc) {
            let app = self
                .apps
                .get(app_tag)
                .ok_or_else(|| SiteError::UnknownApp(app_tag.to_owned()))?;
            let view = app.new_view(doc);
            let empty = view.materialise();
            self.docs.insert(
                doc.clone(),
                DocContext {
                    app_tag: app_tag.to_owned(),
                    open: false,
                    filters: Vec::new(),
                    view,
                    empty: empty.clone(),
                    delivered: Vec::new(),
                    delivered_id: None,
                    checkpoint: Checkpoint {
                        ids: Vec::new(),
                        blob: empty,
                    },
                },
            );
        }
        Ok(self.docs.get_mut(doc).expect("just inserted"))
    }

    /// Opens a document for local use with the given application.
    pub fn open(&mut self, doc: impl Into<DocId>, app_tag: &str) -> Result<(), SiteError> {
        let doc = doc.into();
        let saved = match self.store(&doc)? {
            Some(store) => store.list_filters()?,
            None => Vec::new(),
        };
        self.context(&doc, app_tag)?;
        if self.recovered.insert(doc.clone()) {
            self.recover(&doc)?;
        }
        let ctx = self.docs.get_mut(&doc).expect("created above");
        ctx.open = true;
        if ctx.filters.is_empty() && !saved.is_empty() {
            for f in saved {
                let compiled = f.compile()?;
                ctx.filters.push((f, compiled));
            }
            self.filter_version += 1;
        }
        Ok(())
    }

    pub fn close(&mut self, doc: &DocId) {
        if let Some(ctx) = self.docs.get_mut(doc) {
            ctx.open = false;
        }
    }

    pub fn is_open(&self, doc: &DocId) -> bool {
        self.docs.get(doc).is_some_and(|c| c.open)
    }

    fn require_open(&self, doc: &DocId) -> Result<(), SiteError> {
        if self.is_open(doc) {
            Ok(())
        } else {
            Err(SiteError::DocNotOpen(doc.clone()))
        }
    }

    /// Reserves the next local action identifier in `doc`.
    pub fn next_id(&mut self, doc: &DocId) -> Result<ActionId, SiteError> {
        self.require_open(doc)?;
        let t = self.clocks.entry(doc.clone()).or_insert(0);
        *t += 1;
        Ok(ActionId::new(doc.clone(), self.me.clone(), *t))
    }

    /// Logs a local action with its sequential constraints. Constraints are
    /// logged in the document of each of their endpoints.
    pub fn submit(&mut self, action: Action, constraints: Vec<Constraint>) -> Result<(), SiteError> {
        let id = action.id.clone();
        self.require_open(&id.doc)?;
        if id.issuer != self.me {
            return Err(SiteError::ForeignIssuer(id));
        }
        if self.clocks.get(&id.doc).is_none_or(|&t| id.timestamp > t) || self.acg.contains(&id) {
            return Err(SiteError::StaleTimestamp(id));
        }
        let log = LogKey::new(id.doc.clone(), self.me.clone());
        let end = self.append_local(&id.doc, &Record::Action(action.clone()))?;
        self.ingest_action(action, log, end, false);
        self.submitted.push(id);
        for c in constraints {
            self.log_constraint(c)?;
        }
        Ok(())
    }

    /// Logs extra constraints between known actions.
    pub fn add_constraints(&mut self, constraints: Vec<Constraint>) -> Result<(), SiteError> {
        for c in constraints {
            self.log_constraint(c)?;
        }
        Ok(())
    }

    /// Undoes an action for good by logging that it excludes itself.
    pub fn abort(&mut self, id: &ActionId) -> Result<(), SiteError> {
        if !self.acg.contains(id) {
            return Err(SiteError::UnknownAction(id.clone()));
        }
        if self.acg.is_committed(id) {
            return Err(SiteError::AlreadyCommitted(id.clone()));
        }
        self.log_constraint(Constraint::not_after(id.clone(), id.clone()))
    }

    fn append_local(&mut self, doc: &DocId, rec: &Record) -> Result<u64, SiteError> {
        let frame = codec::encode(rec);
        if let Some(store) = self.store(doc)? {
            store.own_log().append_bytes(&frame)?;
        }
        let key = LogKey::new(doc.clone(), self.me.clone());
        let replica = self.replicas.entry(key.clone()).or_default();
        replica.len += frame.len() as u64;
        let end = replica.len;
        self.outbox.appends.entry(key).or_default().extend_from_slice(&frame);
        Ok(end)
    }

    fn log_constraint(&mut self, c: Constraint) -> Result<(), SiteError> {
        let mut docs = vec![c.a().doc.clone()];
        if c.b().doc != c.a().doc {
            docs.push(c.b().doc.clone());
        }
        for doc in docs {
            let rec = ConstraintRecord::for_log(&c, &doc, &self.me);
            self.append_local(&doc, &Record::Constraint(rec))?;
        }
        self.ingest_constraint(c);
        Ok(())
    }

    fn ingest_constraint(&mut self, c: Constraint) {
        if c.is_cross_document() && self.cross_seen.insert(c.clone()) {
            self.cross.push(c.clone());
        }
        self.acg.add_constraint(c);
    }

    fn key_domain(&self, action: &Action) -> KeyDomain {
        match self.apps.get(&action.app_tag).map(|a| a.key_scope()) {
            Some(KeyScope::Application) => KeyDomain::App(action.app_tag.clone()),
            _ => KeyDomain::Doc(action.id.doc.clone()),
        }
    }

    fn ingest_action(&mut self, action: Action, log: LogKey, end: u64, remote: bool) {
        match self.acg.add_action(action.clone()) {
            Ok(true) => {}
            Ok(false) => return,
            Err(e) => {
                log::warn!("{}: {e}", self.me);
                self.stats.malformed += 1;
                return;
            }
        }
        let id = action.id.clone();
        self.positions.insert(id.clone(), (log, end));
        if !self.reconciler.state().is_decided(&id) {
            self.undecided.insert(id.clone());
        }
        if self.apps.contains_key(&action.app_tag) {
            let _ = self.context(&id.doc, &action.app_tag);
        }

        let domain = self.key_domain(&action);
        let mut partners: BTreeSet<ActionId> = BTreeSet::new();
        for &k in &action.keys {
            let slot = self.key_index.entry((domain.clone(), k)).or_default();
            if remote {
                partners.extend(slot.iter().cloned());
            }
            slot.push(id.clone());
        }
        for other in partners {
            let pair = if other < id {
                (other.clone(), id.clone())
            } else {
                (id.clone(), other.clone())
            };
            if self.upcalled.contains(&pair) || !self.acg.concurrent(&other, &id).unwrap_or(false) {
                continue;
            }
            let Some(first) = self.acg.action(&other).cloned() else {
                continue;
            };
            if first.app_tag != action.app_tag {
                continue;
            }
            let Some(app) = self.apps.get_mut(&action.app_tag) else {
                continue;
            };
            self.upcalled.insert(pair);
            self.upcall_log.push((other.clone(), id.clone()));
            self.stats.upcalls += 1;
            let found = app.get_constraint(&first, &action);
            for c in found {
                if let Err(e) = self.log_constraint(c) {
                    log::warn!("{}: cannot log conflict constraint: {e}", self.me);
                }
            }
        }
    }

    /// New bytes of a remote log arrived.
    pub fn on_log_data(&mut self, log: &LogKey, offset: u64, bytes: &[u8]) {
        let replica = self.replicas.entry(log.clone()).or_default();
        if offset != replica.len {
            log::warn!("{}: {log} delivery at {offset}, expected {}", self.me, replica.len);
            self.stats.malformed += 1;
            return;
        }
        replica.len += bytes.len() as u64;
        if replica.broken {
            return;
        }
        replica.tail.extend_from_slice(bytes);
        let base = replica.len - replica.tail.len() as u64;
        let tail = std::mem::take(&mut replica.tail);
        let mut at = 0;
        let mut records = Vec::new();
        let mut broken = false;
        loop {
            match codec::decode(&tail[at..]) {
                Ok(Frame::Complete(rec, n)) => {
                    at += n;
                    records.push((rec, base + at as u64));
                }
                Ok(Frame::Incomplete) => break,
                Err(e) => {
                    log::warn!("{}: corrupt record in {log} at {}: {e}", self.me, base + at as u64);
                    self.stats.malformed += 1;
                    broken = true;
                    break;
                }
            }
        }
        let replica = self.replicas.get_mut(log).expect("present");
        replica.broken = broken;
        replica.tail = if broken { Vec::new() } else { tail[at..].to_vec() };
        for (rec, end) in records {
            match rec {
                Record::Action(a) => {
                    if a.id.doc != log.doc || a.id.issuer != log.participant {
                        self.stats.malformed += 1;
                        continue;
                    }
                    self.ingest_action(a, log.clone(), end, true);
                }
                Record::Constraint(c) => {
                    let c = c.resolve(&log.doc, &log.participant);
                    self.ingest_constraint(c);
                }
                Record::Proposal(_) => self.stats.malformed += 1,
            }
        }
    }

    /// A proposal delivered by the total-order multicast.
    pub fn on_multicast(&mut self, bytes: &[u8]) -> Option<Delivered> {
        self.apply_proposal(bytes, true)
    }

    fn apply_proposal(&mut self, bytes: &[u8], persist: bool) -> Option<Delivered> {
        let proposal = match Proposal::decode(bytes) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("{}: bad proposal: {e}", self.me);
                self.stats.malformed += 1;
                return None;
            }
        };
        if let Some(log) = self.decisions_log.as_mut().filter(|_| persist) {
            if let Err(e) = log.append(&Record::Proposal(bytes.to_vec())) {
                log::warn!("{}: cannot persist proposal: {e}", self.me);
            }
        }
        let delivered = self.reconciler.deliver(&mut self.acg, &proposal);
        for id in delivered.committed.iter().chain(&delivered.aborted) {
            self.undecided.remove(id);
        }
        Some(delivered)
    }

    /// Reloads every log of `doc` found on disk. Conflicts among the
    /// reloaded actions were already resolved when they were first seen.
    fn recover(&mut self, doc: &DocId) -> Result<(), SiteError> {
        let Some(store) = self.store(doc)? else { return Ok(()) };
        let mut logs = Vec::new();
        for p in store.participants()? {
            let log = store.log(&p);
            let Some(&lowest) = log.chunks()?.first() else { continue };
            let batch = log.read_from(Cursor { seq: lowest, offset: 0 })?;
            logs.push((p, batch.records));
        }
        for (p, records) in logs {
            let key = LogKey::new(doc.clone(), p.clone());
            for (rec, _) in records {
                let replica = self.replicas.entry(key.clone()).or_default();
                replica.len += codec::encode(&rec).len() as u64;
                let end = replica.len;
                match rec {
                    Record::Action(a) => {
                        if p == self.me {
                            let t = self.clocks.entry(doc.clone()).or_insert(0);
                            *t = (*t).max(a.id.timestamp);
                        }
                        self.ingest_action(a, key.clone(), end, false);
                    }
                    Record::Constraint(c) => self.ingest_constraint(c.resolve(doc, &p)),
                    Record::Proposal(_) => self.stats.malformed += 1,
                }
            }
        }
        Ok(())
    }

    /// Re-applies the proposals persisted under the storage root. Call once
    /// every document is open.
    pub fn replay_decisions(&mut self) -> Result<usize, SiteError> {
        let Some(log) = &self.decisions_log else { return Ok(0) };
        let Some(&lowest) = log.chunks()?.first() else {
            return Ok(0);
        };
        let batch = log.read_from(Cursor { seq: lowest, offset: 0 })?;
        let mut n = 0;
        for (rec, _) in batch.records {
            if let Record::Proposal(bytes) = rec {
                n += usize::from(self.apply_proposal(&bytes, false).is_some());
            }
        }
        Ok(n)
    }

    pub fn on_timer(&mut self, tag: u32) {
        match tag {
            SCHEDULE_TIMER => self.deliver_schedules(),
            PROPOSE_TIMER => {
                self.propose();
            }
            _ => {}
        }
    }

    /// Builds and queues a proposal if anything is undecided.
    ///
    /// An action may be committed only once every other site has reported
    /// holding its log up to the action, and this site holds everything the
    /// others reported.
    pub fn propose(&mut self) -> Option<Proposal> {
        if !self.has_undecided() {
            return None;
        }
        let req = ScheduleRequest {
            max_candidates: self.config.candidates,
            local_participant: Some(self.me.clone()),
            restarts: self.config.restarts,
            rng_seed: self.config.seed,
            ..ScheduleRequest::default()
        };
        let schedules = next_schedules(&self.acg, &req, &HashSet::new());
        let frontier = self.frontier();
        let reports = self.reconciler.state().frontiers().clone();
        let others: Vec<&ParticipantId> = self.config.sites.iter().filter(|s| **s != self.me).collect();
        let replicas = &self.replicas;
        let caught_up = others.iter().all(|s| reports.contains_key(*s))
            && reports
                .values()
                .flatten()
                .all(|(log, &len)| replicas.get(log).map_or(0, |r| r.len) >= len);
        let positions = &self.positions;
        let stable = |id: &ActionId| {
            caught_up
                && positions.get(id).is_some_and(|(log, end)| {
                    others
                        .iter()
                        .all(|s| reports[*s].get(log).copied().unwrap_or(0) >= *end)
                })
        };
        let p = self.reconciler.propose(&ProposalInput {
            acg: &self.acg,
            schedules: &schedules,
            stable: &stable,
            frontier,
        });
        self.outbox.proposals.push(p.encode());
        self.stats.proposals += 1;
        Some(p)
    }

    pub fn add_filter(&mut self, doc: &DocId, filter: FilterSpec) -> Result<(), SiteError> {
        self.require_open(doc)?;
        let compiled = filter.compile()?;
        if let Some(store) = self.store(doc)? {
            store.save_filter(&filter)?;
        }
        let ctx = self.docs.get_mut(doc).expect("open");
        if ctx.filters.iter().any(|(f, _)| f.name == filter.name) {
            return Err(MultilogError::NameCollision(filter.name).into());
        }
        ctx.filters.push((filter, compiled));
        self.filter_version += 1;
        Ok(())
    }

    pub fn remove_filter(&mut self, doc: &DocId, name: &str) -> Result<(), SiteError> {
        self.require_open(doc)?;
        let ctx = self.docs.get_mut(doc).expect("open");
        let before = ctx.filters.len();
        ctx.filters.retain(|(f, _)| f.name != name);
        if ctx.filters.len() == before {
            return Err(SiteError::NoSuchFilter(name.to_owned()));
        }
        if let Some(store) = self.store(doc)? {
            store.remove_filter(name)?;
        }
        self.filter_version += 1;
        Ok(())
    }

    pub fn filters(&self, doc: &DocId) -> Vec<&FilterSpec> {
        self.docs
            .get(doc)
            .map_or(Vec::new(), |c| c.filters.iter().map(|(f, _)| f).collect())
    }

    /// Actions hidden from views by filters, before closure.
    fn filtered(&self, group: &BTreeSet<DocId>) -> BTreeSet<ActionId> {
        let mut out = BTreeSet::new();
        for doc in group {
            let Some(ctx) = self.docs.get(doc) else { continue };
            if ctx.filters.is_empty() {
                continue;
            }
            for a in self.acg.actions().filter(|a| &a.id.doc == doc) {
                if ctx.filters.iter().any(|(_, f)| f.matches(a)) {
                    out.insert(a.id.clone());
                }
            }
        }
        out
    }

    /// Current bound groups.
    pub fn groups(&self) -> Vec<BTreeSet<DocId>> {
        let docs: BTreeSet<DocId> = self.acg.docs().into_iter().chain(self.docs.keys().cloned()).collect();
        bound_groups(&docs, &self.cross, &self.acg)
    }

    /// Schedules every bound group and brings each document's view up to
    /// date with its projection of the group's best schedule.
    pub fn deliver_schedules(&mut self) {
        let stamp = (self.acg.generation(), self.filter_version);
        if self.last_round == Some(stamp) {
            return;
        }
        self.last_round = Some(stamp);
        self.stats.schedule_rounds += 1;
        self.candidates.clear();
        for group in self.groups() {
            let req = ScheduleRequest {
                max_candidates: self.config.candidates,
                local_participant: Some(self.me.clone()),
                restarts: self.config.restarts,
                rng_seed: self.config.seed,
                excluded: self.filtered(&group),
                scope: Some(group.clone()),
            };
            let found = next_schedules(&self.acg, &req, &HashSet::new());
            for doc in &group {
                self.candidates.insert(doc.clone(), found.clone());
            }
            let Some(top) = found.first() else { continue };
            for doc in &group {
                if self.docs.contains_key(doc) {
                    let sub: Vec<ActionId> = top.order.iter().filter(|id| &id.doc == doc).cloned().collect();
                    self.execute(doc, top.sched_id, sub);
                }
            }
        }
    }

    fn execute(&mut self, doc: &DocId, sched_id: ScheduleId, sub: Vec<ActionId>) -> Execution {
        let acg = &self.acg;
        let ctx = self.docs.get_mut(doc).expect("caller checked");
        ctx.delivered_id = Some(sched_id);
        if sub == ctx.delivered {
            self.stats.noops += 1;
            return Execution::NoOp;
        }
        let committed = sub.iter().take_while(|id| acg.is_committed(id)).count();
        let (start, outcome) = if sub.starts_with(&ctx.delivered) {
            let n = ctx.delivered.len();
            self.stats.extends += 1;
            (n, Execution::Extend { applied: sub.len() - n })
        } else {
            let base = if sub.starts_with(&ctx.checkpoint.ids) {
                ctx.view.restore(&ctx.checkpoint.blob);
                ctx.checkpoint.ids.len()
            } else {
                ctx.view.restore(&ctx.empty);
                0
            };
            self.stats.rollbacks += 1;
            (
                base,
                Execution::Rollback {
                    replayed: sub.len() - base,
                },
            )
        };
        for (i, id) in sub.iter().enumerate().skip(start) {
            if i == committed && committed > ctx.checkpoint.ids.len() {
                ctx.checkpoint = Checkpoint {
                    ids: sub[..i].to_vec(),
                    blob: ctx.view.materialise(),
                };
            }
            if let Some(a) = acg.action(id) {
                ctx.view.apply(a);
            }
        }
        if committed == sub.len() && committed > ctx.checkpoint.ids.len() {
            ctx.checkpoint = Checkpoint {
                ids: sub.clone(),
                blob: ctx.view.materialise(),
            };
        }
        ctx.delivered = sub;
        outcome
    }

    /// Candidate schedules of the group holding `doc` from the last round,
    /// best first.
    pub fn schedules(&self, doc: &DocId) -> &[Schedule] {
        self.candidates.get(doc).map_or(&[], Vec::as_slice)
    }

    /// The sub-schedule last executed for `doc`.
    pub fn delivered(&self, doc: &DocId) -> &[ActionId] {
        self.docs.get(doc).map_or(&[], |c| c.delivered.as_slice())
    }

    pub fn delivered_id(&self, doc: &DocId) -> Option<ScheduleId> {
        self.docs.get(doc).and_then(|c| c.delivered_id)
    }

    pub fn view(&self, doc: &DocId) -> Option<&dyn View> {
        self.docs.get(doc).map(|c| c.view.as_ref())
    }

    /// The view downcast to the application's concrete type.
    pub fn view_as<T: 'static>(&self, doc: &DocId) -> Option<&T> {
        self.view(doc).and_then(|v| v.as_any().downcast_ref())
    }

    pub fn app_of(&self, doc: &DocId) -> Option<&str> {
        self.docs.get(doc).map(|c| c.app_tag.as_str())
    }

    pub fn documents(&self) -> impl Iterator<Item = &DocId> {
        self.docs.keys()
    }

    /// On-disk directory of a document, when persistence is configured.
    pub fn document_dir(&mut self, doc: &DocId) -> Result<Option<&mut DocumentDir>, SiteError> {
        self.store(doc)
    }
}

#[cfg(test)]
mod tests;
