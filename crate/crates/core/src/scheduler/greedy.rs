use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acg::{Acg, ActionId, Decided, NodeIx};

use super::signature::ScheduleSignature;
use super::{Schedule, ScheduleRequest};

/// Up to `req.max_candidates` sound, maximal, pairwise non-equivalent
/// schedules not listed in `seen`, best first.
pub fn next_schedules(acg: &Acg, req: &ScheduleRequest, seen: &HashSet<ScheduleSignature>) -> Vec<Schedule> {
    if req.max_candidates == 0 {
        return Vec::new();
    }
    let planner = Planner::new(acg, req);
    let mut pool = CandidatePool::default();
    let base = planner.base_order();

    let mut pass = Pass::new(&planner);
    pool.offer(&planner, pass.run(base.iter().copied()), seen);

    let mut rng = ChaCha8Rng::seed_from_u64(req.rng_seed);
    for r in 1..req.restarts.max(1) {
        let mut order = planner.candidates.clone();
        order.shuffle(&mut rng);
        if r % 2 == 0 {
            order.sort_by_key(|&ix| !planner.local[ix as usize]);
        }
        pass.reset();
        pool.offer(&planner, pass.run(order.into_iter()), seen);
    }

    // Explore alternatives to the best schedule found so far: force each
    // excluded action in first.
    if req.max_candidates > 1 {
        if let Some(best) = pool.best_members() {
            let forced: Vec<NodeIx> = planner
                .candidates
                .iter()
                .copied()
                .filter(|ix| !best.contains(ix))
                .take(64.max(4 * req.max_candidates))
                .collect();
            for x in forced {
                pass.reset();
                let order = std::iter::once(x).chain(base.iter().copied());
                pool.offer(&planner, pass.run(order), seen);
            }
        }
    }

    pool.into_schedules(&planner, req.max_candidates)
}

/// Static per-request facts about the graph.
pub(crate) struct Planner<'a> {
    pub(crate) acg: &'a Acg,
    in_scope: Vec<bool>,
    eligible: Vec<bool>,
    committed: Vec<bool>,
    in_prefix: Vec<bool>,
    pub(crate) prefix: Vec<NodeIx>,
    pub(crate) local: Vec<bool>,
    /// Position in (timestamp, issuer, doc) order.
    pub(crate) rank: Vec<u32>,
    /// Eligible tentative actions, by rank.
    pub(crate) candidates: Vec<NodeIx>,
}

impl<'a> Planner<'a> {
    pub(crate) fn new(acg: &'a Acg, req: &ScheduleRequest) -> Self {
        let n = acg.len();
        let ids = |ix: usize| acg.id_at(ix as NodeIx);
        let in_scope: Vec<bool> = (0..n)
            .map(|ix| req.scope.as_ref().is_none_or(|s| s.contains(&ids(ix).doc)))
            .collect();
        let committed: Vec<bool> = (0..n).map(|ix| acg.is_committed(ids(ix))).collect();

        let mut filtered = vec![false; n];
        let filter_seeds: Vec<NodeIx> = req.excluded.iter().filter_map(|id| acg.index_of(id)).collect();
        close_over_enables(acg, &filter_seeds, &mut filtered);

        let mut dead = vec![false; n];
        let mut seeds = Vec::new();
        for ix in 0..n {
            if !in_scope[ix] {
                continue;
            }
            let node = acg.node(ix as NodeIx);
            let aborted = matches!(acg.decision(ids(ix)), Some(Decided::Aborted));
            let orphan = node
                .enabled_by
                .iter()
                .any(|&e| !in_scope[e as usize] && !committed[e as usize]);
            if aborted || node.self_excluded || orphan || node.unknown_enablers > 0 {
                seeds.push(ix as NodeIx);
            }
        }
        close_over_enables(acg, &seeds, &mut dead);

        let mut prefix: Vec<NodeIx> = Vec::new();
        let mut cut_off = Vec::new();
        for id in acg.commit_order() {
            let Some(ix) = acg.index_of(id) else { continue };
            let i = ix as usize;
            if !in_scope[i] || filtered[i] {
                continue;
            }
            if !cut_off.is_empty() || dead[i] {
                cut_off.push(ix);
            } else {
                prefix.push(ix);
            }
        }
        let mut prefix_mark = vec![false; n];
        for &ix in &prefix {
            prefix_mark[ix as usize] = true;
        }
        // Committed actions need their enablers in the schedule as well. The
        // reconciler never commits ahead of an enabler, but a graph built by
        // hand can.
        while let Some(bad) = prefix.iter().position(|&ix| {
            acg.node(ix).enabled_by.iter().any(|&e| {
                let eu = e as usize;
                !prefix_mark[eu] && !(!in_scope[eu] && committed[eu])
            })
        }) {
            for ix in prefix.drain(bad..).rev() {
                prefix_mark[ix as usize] = false;
                cut_off.insert(0, ix);
            }
        }

        // A tentative action that must precede a committed one can never be placed.
        let mut late = cut_off;
        for ix in 0..n {
            if in_scope[ix] && !committed[ix] && !dead[ix] {
                let node = acg.node(ix as NodeIx);
                if node.before.iter().any(|&b| prefix_mark[b as usize]) {
                    late.push(ix as NodeIx);
                }
            }
        }
        close_over_enables(acg, &late, &mut dead);

        let eligible: Vec<bool> = (0..n)
            .map(|ix| in_scope[ix] && !dead[ix] && !filtered[ix] && !committed[ix])
            .collect();

        let mut by_id: Vec<NodeIx> = (0..n as NodeIx).collect();
        by_id.sort_by(|&x, &y| {
            let (a, b) = (acg.id_at(x), acg.id_at(y));
            (a.timestamp, &a.issuer, &a.doc).cmp(&(b.timestamp, &b.issuer, &b.doc))
        });
        let mut rank = vec![0u32; n];
        for (r, &ix) in by_id.iter().enumerate() {
            rank[ix as usize] = r as u32;
        }
        let candidates = by_id.into_iter().filter(|&ix| eligible[ix as usize]).collect();
        let local = (0..n)
            .map(|ix| req.local_participant.as_ref() == Some(&ids(ix).issuer))
            .collect();

        Planner {
            acg,
            in_scope,
            eligible,
            committed,
            in_prefix: prefix_mark,
            prefix,
            local,
            rank,
            candidates,
        }
    }

    /// Actions without tentative `NotAfter` predecessors first, then local
    /// actions, then by timestamp.
    pub(crate) fn base_order(&self) -> Vec<NodeIx> {
        let mut order = self.candidates.clone();
        order.sort_by_key(|&ix| {
            let node = self.acg.node(ix);
            let constrained = node.after.iter().any(|&p| self.eligible[p as usize]);
            (constrained, !self.local[ix as usize], self.rank[ix as usize])
        });
        order
    }

    pub(crate) fn is_eligible(&self, ix: NodeIx) -> bool {
        self.eligible[ix as usize]
    }
}

fn close_over_enables(acg: &Acg, seeds: &[NodeIx], mark: &mut [bool]) {
    let mut queue: VecDeque<NodeIx> = VecDeque::new();
    for &s in seeds {
        if !mark[s as usize] {
            mark[s as usize] = true;
            queue.push_back(s);
        }
    }
    while let Some(n) = queue.pop_front() {
        for &m in &acg.node(n).enables {
            if !mark[m as usize] {
                mark[m as usize] = true;
                queue.push_back(m);
            }
        }
    }
}

/// One greedy construction. Buffers are reused across passes.
pub(crate) struct Pass<'p, 'a> {
    planner: &'p Planner<'a>,
    in_set: Vec<bool>,
    members: Vec<NodeIx>,
    stamp: Vec<u32>,
    color: Vec<u8>,
    epoch: u32,
    group: Vec<NodeIx>,
    in_group: Vec<bool>,
    stack: Vec<(NodeIx, usize)>,
}

const GROUP: u8 = 1;
const GREY: u8 = 2;
const BLACK: u8 = 3;

impl<'p, 'a> Pass<'p, 'a> {
    pub(crate) fn new(planner: &'p Planner<'a>) -> Self {
        let n = planner.acg.len();
        Pass {
            planner,
            in_set: vec![false; n],
            members: Vec::new(),
            stamp: vec![0; n],
            color: vec![0; n],
            epoch: 0,
            group: Vec::new(),
            in_group: vec![false; n],
            stack: Vec::new(),
        }
    }

    pub(crate) fn reset(&mut self) {
        for &m in &self.members {
            self.in_set[m as usize] = false;
        }
        self.members.clear();
    }

    /// Admits actions in the given priority order; returns the schedule.
    pub(crate) fn run(&mut self, order: impl Iterator<Item = NodeIx>) -> Vec<NodeIx> {
        for ix in order {
            self.try_add(ix);
        }
        self.ordered()
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.epoch
    }

    fn mark(&self, ix: NodeIx) -> u8 {
        if self.stamp[ix as usize] == self.epoch {
            self.color[ix as usize]
        } else {
            0
        }
    }

    fn set_mark(&mut self, ix: NodeIx, c: u8) {
        self.stamp[ix as usize] = self.epoch;
        self.color[ix as usize] = c;
    }

    /// Adds `x` with its missing enablers if the result stays sound.
    pub(crate) fn try_add(&mut self, x: NodeIx) -> bool {
        let p = self.planner;
        if self.in_set[x as usize] {
            return true;
        }
        if !p.eligible[x as usize] {
            return false;
        }
        let acg = p.acg;
        self.next_epoch();
        self.group.clear();
        self.group.push(x);
        self.set_mark(x, GROUP);
        let mut i = 0;
        while i < self.group.len() {
            let n = self.group[i];
            i += 1;
            for &e in &acg.node(n).enabled_by {
                let eu = e as usize;
                if self.in_set[eu] || self.mark(e) == GROUP {
                    continue;
                }
                if p.in_prefix[eu] || (!p.in_scope[eu] && p.committed[eu]) {
                    continue;
                }
                if !p.eligible[eu] {
                    return false;
                }
                self.set_mark(e, GROUP);
                self.group.push(e);
            }
        }

        // Cycle check over tentative members plus the group. Only paths that
        // start in the group can close a new cycle.
        let group = std::mem::take(&mut self.group);
        for &g in &group {
            self.in_group[g as usize] = true;
        }
        let cyclic = self.closes_cycle(&group);
        for &g in &group {
            self.in_group[g as usize] = false;
        }
        if !cyclic {
            for &g in &group {
                self.in_set[g as usize] = true;
                self.members.push(g);
            }
        }
        self.group = group;
        !cyclic
    }

    fn closes_cycle(&mut self, group: &[NodeIx]) -> bool {
        let p = self.planner;
        let acg = p.acg;
        self.next_epoch();
        for &root in group {
            if self.mark(root) != 0 {
                continue;
            }
            self.set_mark(root, GREY);
            self.stack.clear();
            self.stack.push((root, 0));
            while let Some(&(n, next)) = self.stack.last() {
                let succ = &acg.node(n).before;
                if next < succ.len() {
                    self.stack.last_mut().unwrap().1 += 1;
                    let m = succ[next];
                    let mu = m as usize;
                    let member = (self.in_set[mu] && !p.committed[mu]) || self.in_group[mu];
                    if !member {
                        continue;
                    }
                    match self.mark(m) {
                        GREY => return true,
                        BLACK => {}
                        _ => {
                            self.set_mark(m, GREY);
                            self.stack.push((m, 0));
                        }
                    }
                } else {
                    self.set_mark(n, BLACK);
                    self.stack.pop();
                }
            }
        }
        false
    }

    /// Committed prefix, then the tentative members in a topological order
    /// of `NotAfter`, ties broken by rank.
    pub(crate) fn ordered(&self) -> Vec<NodeIx> {
        let p = self.planner;
        let acg = p.acg;
        let mut out = p.prefix.clone();
        let mut indeg: std::collections::HashMap<NodeIx, usize> = self.members.iter().map(|&m| (m, 0)).collect();
        for &m in &self.members {
            for &b in &acg.node(m).before {
                if let Some(d) = indeg.get_mut(&b) {
                    *d += 1;
                }
            }
        }
        let mut heap: BinaryHeap<Reverse<(u32, NodeIx)>> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&m, _)| Reverse((p.rank[m as usize], m)))
            .collect();
        while let Some(Reverse((_, m))) = heap.pop() {
            out.push(m);
            for &b in &acg.node(m).before {
                if let Some(d) = indeg.get_mut(&b) {
                    *d -= 1;
                    if *d == 0 {
                        heap.push(Reverse((p.rank[b as usize], b)));
                    }
                }
            }
        }
        debug_assert_eq!(out.len(), p.prefix.len() + self.members.len());
        out
    }
}

struct Candidate {
    order: Vec<NodeIx>,
    signature: ScheduleSignature,
    local: usize,
    ranks: Vec<u32>,
}

#[derive(Default)]
struct CandidatePool {
    found: Vec<Candidate>,
    sigs: HashSet<ScheduleSignature>,
}

impl CandidatePool {
    fn offer(&mut self, planner: &Planner<'_>, order: Vec<NodeIx>, seen: &HashSet<ScheduleSignature>) {
        let ids: Vec<ActionId> = order.iter().map(|&ix| planner.acg.id_at(ix).clone()).collect();
        let signature = ScheduleSignature::of(planner.acg, &ids);
        if seen.contains(&signature) || self.sigs.contains(&signature) {
            return;
        }
        let local = order.iter().filter(|&&ix| planner.local[ix as usize]).count();
        let mut ranks: Vec<u32> = order.iter().map(|&ix| planner.rank[ix as usize]).collect();
        ranks.sort_unstable();
        self.sigs.insert(signature.clone());
        self.found.push(Candidate {
            order,
            signature,
            local,
            ranks,
        });
    }

    fn sort(&mut self) {
        self.found.sort_by(|x, y| {
            y.order
                .len()
                .cmp(&x.order.len())
                .then(y.local.cmp(&x.local))
                .then_with(|| x.ranks.cmp(&y.ranks))
                .then_with(|| x.signature.cmp(&y.signature))
        });
    }

    fn best_members(&mut self) -> Option<HashSet<NodeIx>> {
        self.sort();
        self.found.first().map(|c| c.order.iter().copied().collect())
    }

    fn into_schedules(mut self, planner: &Planner<'_>, max: usize) -> Vec<Schedule> {
        self.sort();
        self.found.truncate(max);
        self.found
            .into_iter()
            .map(|c| Schedule {
                sched_id: c.signature.id(),
                order: c.order.iter().map(|&ix| planner.acg.id_at(ix).clone()).collect(),
            })
            .collect()
    }
}
