use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::acg::{Acg, ActionId, Constraint, ConstraintKind, ParticipantId};
use crate::scheduler::Schedule;

use super::proposal::{Decision, Proposal};
use super::{Frontier, Reconciler};

/// Constraints learnt from delivered proposals, indexed by endpoint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Known {
    by_action: HashMap<ActionId, BTreeSet<Constraint>>,
}

impl Known {
    fn insert(&mut self, c: &Constraint) {
        for end in [c.a(), c.b()] {
            self.by_action.entry(end.clone()).or_default().insert(c.clone());
        }
    }

    fn touching<'a>(&'a self, id: &ActionId) -> impl Iterator<Item = &'a Constraint> + 'a {
        self.by_action.get(id).into_iter().flatten()
    }

    fn contains(&self, c: &Constraint) -> bool {
        self.by_action.get(c.a()).is_some_and(|s| s.contains(c))
    }
}

/// The agreed outcome so far. Identical at every site that delivered the
/// same proposals.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommitState {
    prefix: Vec<ActionId>,
    position: HashMap<ActionId, usize>,
    aborted: BTreeSet<ActionId>,
    applied_proposals: u64,
    known: Known,
    frontiers: BTreeMap<ParticipantId, Frontier>,
}

impl CommitState {
    pub fn committed_prefix(&self) -> &[ActionId] {
        &self.prefix
    }

    pub fn aborted(&self) -> &BTreeSet<ActionId> {
        &self.aborted
    }

    pub fn applied_proposals(&self) -> u64 {
        self.applied_proposals
    }

    pub fn is_committed(&self, id: &ActionId) -> bool {
        self.position.contains_key(id)
    }

    pub fn is_aborted(&self, id: &ActionId) -> bool {
        self.aborted.contains(id)
    }

    pub fn is_decided(&self, id: &ActionId) -> bool {
        self.is_committed(id) || self.is_aborted(id)
    }

    /// Latest log frontier each site reported.
    pub fn frontiers(&self) -> &BTreeMap<ParticipantId, Frontier> {
        &self.frontiers
    }

    /// Dead given the agreed constraints: excluded by itself, forced before a
    /// committed action, or enabled by an aborted one.
    fn is_dead(&self, id: &ActionId) -> bool {
        self.known.touching(id).any(|c| match c.kind() {
            ConstraintKind::NotAfter => c.a() == id && (c.b() == id || self.is_committed(c.b())),
            ConstraintKind::Enables => c.b() == id && c.a() != id && self.is_aborted(c.a()),
            ConstraintKind::NonCommuting => false,
        })
    }
}

/// Outcome of delivering one proposal.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Delivered {
    pub committed: Vec<ActionId>,
    pub aborted: Vec<ActionId>,
    pub serialized: Vec<(ActionId, ActionId)>,
    pub discarded: Vec<Decision>,
}

/// What a site knows when it builds a proposal.
pub struct ProposalInput<'a> {
    /// The site's unfiltered graph.
    pub acg: &'a Acg,
    /// Candidate schedules, best first.
    pub schedules: &'a [Schedule],
    /// Whether an action may be committed yet.
    pub stable: &'a dyn Fn(&ActionId) -> bool,
    pub frontier: Frontier,
}

/// The FIFO reconciler: the first proposal delivered wins.
#[derive(Clone, Debug)]
pub struct Fifo {
    site: ParticipantId,
    next_seq: u64,
    state: CommitState,
}

impl Fifo {
    pub fn new(site: ParticipantId) -> Self {
        Fifo {
            site,
            next_seq: 0,
            state: CommitState::default(),
        }
    }

    /// Commits a stable leading run of `schedule`, minus anything whose
    /// enablers would stay undecided.
    fn commits_for(&self, acg: &Acg, schedule: &Schedule, stable: &dyn Fn(&ActionId) -> bool) -> Vec<ActionId> {
        let mut run: Vec<ActionId> = Vec::new();
        for id in &schedule.order {
            if self.state.is_committed(id) {
                continue;
            }
            if self.state.is_aborted(id) || !stable(id) {
                break;
            }
            run.push(id.clone());
        }
        loop {
            let chosen: HashSet<&ActionId> = run.iter().collect();
            let keep: Vec<bool> = run
                .iter()
                .map(|id| {
                    acg.constraints_touching(id).iter().all(|c| {
                        c.kind() != ConstraintKind::Enables
                            || c.b() != id
                            || c.a() == id
                            || self.state.is_committed(c.a())
                            || chosen.contains(c.a())
                    })
                })
                .collect();
            if keep.iter().all(|&k| k) {
                return run;
            }
            run = run
                .into_iter()
                .zip(keep)
                .filter(|(_, k)| *k)
                .map(|(id, _)| id)
                .collect();
        }
    }

    /// Undecided actions that can never be scheduled once `commits` are.
    fn dead_after(&self, acg: &Acg, commits: &[ActionId]) -> Vec<ActionId> {
        let new: HashSet<&ActionId> = commits.iter().collect();
        let committed = |id: &ActionId| self.state.is_committed(id) || new.contains(id);
        let undecided = |id: &ActionId| !self.state.is_decided(id) && !new.contains(id);
        let mut dead: Vec<ActionId> = Vec::new();
        let mut seen: HashSet<ActionId> = HashSet::new();
        for id in acg.action_ids() {
            if !undecided(id) {
                continue;
            }
            let doomed = acg.constraints_touching(id).iter().any(|c| match c.kind() {
                ConstraintKind::NotAfter => c.a() == id && (c.b() == id || committed(c.b())),
                ConstraintKind::Enables => c.b() == id && self.state.is_aborted(c.a()),
                ConstraintKind::NonCommuting => false,
            });
            if doomed && seen.insert(id.clone()) {
                dead.push(id.clone());
            }
        }
        dead.sort();
        let mut i = 0;
        while i < dead.len() {
            let d = dead[i].clone();
            i += 1;
            for c in acg.constraints_touching(&d) {
                if c.kind() == ConstraintKind::Enables && c.a() == &d && undecided(c.b()) && seen.insert(c.b().clone())
                {
                    dead.push(c.b().clone());
                }
            }
        }
        dead
    }
}

impl Reconciler for Fifo {
    fn propose(&mut self, input: &ProposalInput<'_>) -> Proposal {
        let acg = input.acg;
        // Among the offered schedules, prefer the one that kills the fewest
        // actions; ties keep the scheduler's ranking.
        let mut best: Option<(usize, Vec<ActionId>, Vec<ActionId>)> = None;
        for s in input.schedules {
            let commits = self.commits_for(acg, s, input.stable);
            let dead = self.dead_after(acg, &commits);
            if best.as_ref().is_none_or(|(n, _, _)| dead.len() < *n) {
                best = Some((dead.len(), commits, dead));
            }
        }
        let (commits, dead) = match best {
            Some((_, c, d)) => (c, d),
            None => (Vec::new(), self.dead_after(acg, &[])),
        };

        let mut decisions: Vec<Decision> = commits.iter().cloned().map(Decision::Commit).collect();
        let mut order: HashMap<&ActionId, usize> = HashMap::new();
        for (i, id) in self.state.prefix.iter().chain(&commits).enumerate() {
            order.insert(id, i);
        }
        for id in &commits {
            for c in acg.constraints_touching(id) {
                if c.kind() != ConstraintKind::NonCommuting {
                    continue;
                }
                let other = if c.a() == id { c.b() } else { c.a() };
                if let (Some(&po), Some(&pi)) = (order.get(other), order.get(id)) {
                    if po < pi {
                        decisions.push(Decision::Serialize(other.clone(), id.clone()));
                    }
                }
            }
        }
        decisions.extend(dead.iter().cloned().map(Decision::Abort));

        let mut constraints: BTreeSet<Constraint> = BTreeSet::new();
        for id in commits.iter().chain(&dead) {
            constraints.extend(acg.constraints_touching(id).iter().cloned());
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        Proposal {
            proposer: self.site.clone(),
            seq,
            decisions,
            constraints: constraints.into_iter().collect(),
            frontier: input.frontier.clone(),
        }
    }

    fn deliver(&mut self, acg: &mut Acg, p: &Proposal) -> Delivered {
        let st = &mut self.state;
        st.applied_proposals += 1;
        for c in &p.constraints {
            st.known.insert(c);
            acg.add_constraint(c.clone());
        }
        let reported = st.frontiers.entry(p.proposer.clone()).or_default();
        for (log, &len) in &p.frontier {
            let e = reported.entry(log.clone()).or_insert(0);
            *e = (*e).max(len);
        }

        let mut out = Delivered::default();

        // Commits: individually admissible ones, in proposal order, without
        // ordering conflicts among themselves, closed under enablers.
        let mut run: Vec<ActionId> = Vec::new();
        for d in &p.decisions {
            let Decision::Commit(a) = d else { continue };
            let ok = !st.is_decided(a)
                && !run.contains(a)
                && !st.is_dead(a)
                && !st
                    .known
                    .touching(a)
                    .any(|c| c.kind() == ConstraintKind::NotAfter && c.a() == a && run.contains(c.b()));
            if ok {
                run.push(a.clone());
            } else {
                out.discarded.push(d.clone());
            }
        }
        loop {
            let chosen: HashSet<ActionId> = run.iter().cloned().collect();
            let (keep, drop): (Vec<ActionId>, Vec<ActionId>) = run.iter().cloned().partition(|a| {
                st.known.touching(a).all(|c| {
                    c.kind() != ConstraintKind::Enables
                        || c.b() != a
                        || c.a() == a
                        || st.is_committed(c.a())
                        || chosen.contains(c.a())
                })
            });
            if drop.is_empty() {
                break;
            }
            out.discarded.extend(drop.into_iter().map(Decision::Commit));
            run = keep;
        }
        for a in run {
            st.position.insert(a.clone(), st.prefix.len());
            st.prefix.push(a.clone());
            acg.mark_committed(&a).expect("not aborted in the commit state");
            out.committed.push(a);
        }

        for d in &p.decisions {
            let Decision::Serialize(a, b) = d else { continue };
            let contradicts = a == b
                || st.known.contains(&Constraint::not_after(b.clone(), a.clone()))
                || matches!((st.position.get(a), st.position.get(b)), (Some(pa), Some(pb)) if pa > pb)
                || (st.is_committed(b) && !st.is_committed(a));
            if contradicts {
                out.discarded.push(d.clone());
            } else {
                let c = Constraint::not_after(a.clone(), b.clone());
                st.known.insert(&c);
                acg.add_constraint(c);
                out.serialized.push((a.clone(), b.clone()));
            }
        }

        // Aborts must be justified by the agreed state; repeat so that
        // enablement chains resolve regardless of listing order.
        let mut pending: Vec<&Decision> = p.decisions.iter().filter(|d| matches!(d, Decision::Abort(_))).collect();
        loop {
            let before = pending.len();
            pending.retain(|d| {
                let Decision::Abort(a) = d else { unreachable!() };
                if st.is_committed(a) {
                    out.discarded.push((*d).clone());
                    return false;
                }
                if st.is_aborted(a) {
                    return false;
                }
                if st.is_dead(a) {
                    st.aborted.insert(a.clone());
                    acg.mark_aborted(a).expect("not committed in the commit state");
                    out.aborted.push(a.clone());
                    return false;
                }
                true
            });
            if pending.len() == before {
                break;
            }
        }
        out.discarded.extend(pending.into_iter().cloned());
        out
    }

    fn state(&self) -> &CommitState {
        &self.state
    }
}
