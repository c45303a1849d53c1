use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use super::action::Action;
use super::constraint::{Constraint, ConstraintKind};
use super::ids::{ActionId, DocId};
use super::AcgError;

/// Dense node index inside one [`Acg`].
pub type NodeIx = u32;

/// Outcome recorded by commitment for one action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decided {
    Committed(usize),
    Aborted,
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub(crate) action: Action,
    /// `NotAfter(self, x)`
    pub(crate) before: Vec<NodeIx>,
    /// `NotAfter(x, self)`
    pub(crate) after: Vec<NodeIx>,
    /// `Enables(self, x)`
    pub(crate) enables: Vec<NodeIx>,
    /// `Enables(x, self)`
    pub(crate) enabled_by: Vec<NodeIx>,
    pub(crate) non_commuting: Vec<NodeIx>,
    /// `NotAfter(self, self)`: the abort convention.
    pub(crate) self_excluded: bool,
    /// Pending `Enables(x, self)` constraints whose `x` is not known yet.
    pub(crate) unknown_enablers: u32,
}

/// The action-constraint graph of a document or of a group of bound documents.
///
/// Constraints whose endpoints are not both known are kept pending and
/// become active as soon as the missing action is added, so records may be
/// fed in any order consistent with nothing in particular.
#[derive(Clone, Debug, Default)]
pub struct Acg {
    index: HashMap<ActionId, NodeIx>,
    nodes: Vec<Node>,
    constraints: BTreeSet<Constraint>,
    waiting: HashMap<ActionId, Vec<Constraint>>,
    /// Every constraint under each of its endpoints.
    touching: HashMap<ActionId, Vec<Constraint>>,
    decisions: HashMap<ActionId, Decided>,
    commit_order: Vec<ActionId>,
    generation: u64,
}

impl Acg {
    pub fn new() -> Self {
        Acg::default()
    }

    /// Monotonic modification counter.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &ActionId) -> bool {
        self.index.contains_key(id)
    }

    pub fn action(&self, id: &ActionId) -> Option<&Action> {
        self.index.get(id).map(|&ix| &self.nodes[ix as usize].action)
    }

    /// Actions in insertion order.
    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.nodes.iter().map(|n| &n.action)
    }

    pub fn action_ids(&self) -> impl Iterator<Item = &ActionId> {
        self.nodes.iter().map(|n| &n.action.id)
    }

    /// Every known constraint, active or pending.
    pub fn constraints(&self) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter()
    }

    pub fn contains_constraint(&self, c: &Constraint) -> bool {
        self.constraints.contains(c)
    }

    pub fn is_active(&self, c: &Constraint) -> bool {
        self.index.contains_key(c.a()) && self.index.contains_key(c.b())
    }

    pub fn active_constraints(&self) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter().filter(|c| self.is_active(c))
    }

    pub fn pending_constraints(&self) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter().filter(|c| !self.is_active(c))
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn docs(&self) -> BTreeSet<DocId> {
        self.nodes.iter().map(|n| n.action.id.doc.clone()).collect()
    }

    /// Adds an action. Returns `Ok(false)` when an identical action is
    /// already present.
    pub fn add_action(&mut self, action: Action) -> Result<bool, AcgError> {
        if let Some(&ix) = self.index.get(&action.id) {
            return if self.nodes[ix as usize].action == action {
                Ok(false)
            } else {
                Err(AcgError::DuplicateDivergent(action.id))
            };
        }
        let ix = self.nodes.len() as NodeIx;
        let id = action.id.clone();
        self.nodes.push(Node {
            action,
            before: Vec::new(),
            after: Vec::new(),
            enables: Vec::new(),
            enabled_by: Vec::new(),
            non_commuting: Vec::new(),
            self_excluded: false,
            unknown_enablers: 0,
        });
        self.index.insert(id.clone(), ix);
        self.generation += 1;
        if let Some(waiting) = self.waiting.remove(&id) {
            for c in waiting {
                let enables = c.kind() == ConstraintKind::Enables && c.a() != c.b();
                if self.is_active(&c) {
                    self.link(&c);
                    if enables && c.a() == &id {
                        self.nodes[self.index[c.b()] as usize].unknown_enablers -= 1;
                    }
                } else if enables && c.b() == &id {
                    self.nodes[ix as usize].unknown_enablers += 1;
                }
            }
        }
        Ok(true)
    }

    /// Adds a constraint; idempotent. Returns whether the graph changed.
    pub fn add_constraint(&mut self, c: Constraint) -> bool {
        if self.constraints.contains(&c) {
            return false;
        }
        self.generation += 1;
        if self.is_active(&c) {
            self.link(&c);
        } else {
            if c.kind() == ConstraintKind::Enables && c.a() != c.b() {
                if let Some(&b) = self.index.get(c.b()) {
                    self.nodes[b as usize].unknown_enablers += 1;
                }
            }
            for end in [c.a(), c.b()] {
                if !self.index.contains_key(end) {
                    self.waiting.entry(end.clone()).or_default().push(c.clone());
                }
                if c.a() == c.b() {
                    break;
                }
            }
        }
        self.touching.entry(c.a().clone()).or_default().push(c.clone());
        if c.a() != c.b() {
            self.touching.entry(c.b().clone()).or_default().push(c.clone());
        }
        self.constraints.insert(c);
        true
    }

    /// Whether `id` is known to need an action that has not been seen yet.
    pub fn has_unknown_enabler(&self, id: &ActionId) -> bool {
        self.index
            .get(id)
            .is_some_and(|&ix| self.nodes[ix as usize].unknown_enablers > 0)
    }

    /// Constraints with `id` as an endpoint, active or pending.
    pub fn constraints_touching(&self, id: &ActionId) -> &[Constraint] {
        self.touching.get(id).map_or(&[], Vec::as_slice)
    }

    fn link(&mut self, c: &Constraint) {
        let a = self.index[c.a()];
        let b = self.index[c.b()];
        match c.kind() {
            ConstraintKind::NotAfter if a == b => self.nodes[a as usize].self_excluded = true,
            ConstraintKind::NotAfter => {
                self.nodes[a as usize].before.push(b);
                self.nodes[b as usize].after.push(a);
            }
            ConstraintKind::Enables if a == b => {}
            ConstraintKind::Enables => {
                self.nodes[a as usize].enables.push(b);
                self.nodes[b as usize].enabled_by.push(a);
            }
            ConstraintKind::NonCommuting if a == b => {}
            ConstraintKind::NonCommuting => {
                self.nodes[a as usize].non_commuting.push(b);
                self.nodes[b as usize].non_commuting.push(a);
            }
        }
    }

    /// Persistently undoes `a` by marking it antagonistic with itself. Every
    /// action it transitively enables is excluded too, by soundness.
    pub fn abort_action(&mut self, a: &ActionId) -> Result<bool, AcgError> {
        if !self.contains(a) {
            return Err(AcgError::UnknownAction(a.clone()));
        }
        if matches!(self.decision(a), Some(Decided::Committed(_))) {
            return Err(AcgError::AlreadyCommitted(a.clone()));
        }
        Ok(self.add_constraint(Constraint::not_after(a.clone(), a.clone())))
    }

    pub fn decision(&self, id: &ActionId) -> Option<Decided> {
        self.decisions.get(id).copied()
    }

    /// Committed actions in commit order. May name actions not (yet) known here.
    pub fn commit_order(&self) -> &[ActionId] {
        &self.commit_order
    }

    pub fn aborted(&self) -> impl Iterator<Item = &ActionId> {
        self.decisions
            .iter()
            .filter(|(_, d)| matches!(d, Decided::Aborted))
            .map(|(id, _)| id)
    }

    pub fn is_committed(&self, id: &ActionId) -> bool {
        matches!(self.decisions.get(id), Some(Decided::Committed(_)))
    }

    pub fn is_aborted(&self, id: &ActionId) -> bool {
        matches!(self.decisions.get(id), Some(Decided::Aborted))
    }

    /// Appends `id` to the committed order; returns its position.
    pub fn mark_committed(&mut self, id: &ActionId) -> Result<usize, AcgError> {
        match self.decisions.get(id) {
            Some(Decided::Committed(p)) => Ok(*p),
            Some(Decided::Aborted) => Err(AcgError::AlreadyAborted(id.clone())),
            None => {
                let pos = self.commit_order.len();
                self.commit_order.push(id.clone());
                self.decisions.insert(id.clone(), Decided::Committed(pos));
                self.generation += 1;
                Ok(pos)
            }
        }
    }

    pub fn mark_aborted(&mut self, id: &ActionId) -> Result<(), AcgError> {
        match self.decisions.get(id) {
            Some(Decided::Aborted) => Ok(()),
            Some(Decided::Committed(_)) => Err(AcgError::AlreadyCommitted(id.clone())),
            None => {
                self.decisions.insert(id.clone(), Decided::Aborted);
                self.generation += 1;
                Ok(())
            }
        }
    }

    /// Whether `from` reaches `to` through active `Enables` edges.
    pub fn enables_path(&self, from: &ActionId, to: &ActionId) -> Result<bool, AcgError> {
        let s = self.ix(from)?;
        let t = self.ix(to)?;
        if s == t {
            return Ok(true);
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([s]);
        seen[s as usize] = true;
        while let Some(n) = queue.pop_front() {
            for &m in &self.nodes[n as usize].enables {
                if m == t {
                    return Ok(true);
                }
                if !seen[m as usize] {
                    seen[m as usize] = true;
                    queue.push_back(m);
                }
            }
        }
        Ok(false)
    }

    /// Two actions are concurrent when they come from different issuers and
    /// neither reaches the other through the causality (`Enables`) subgraph.
    pub fn concurrent(&self, a: &ActionId, b: &ActionId) -> Result<bool, AcgError> {
        self.ix(a)?;
        self.ix(b)?;
        if a.issuer == b.issuer {
            return Ok(false);
        }
        Ok(!self.enables_path(a, b)? && !self.enables_path(b, a)?)
    }

    /// Forward closure of `seeds` through active `Enables` edges, seeds included.
    /// Unknown seeds are kept as-is.
    pub fn enables_closure<'a>(&self, seeds: impl IntoIterator<Item = &'a ActionId>) -> BTreeSet<ActionId> {
        let mut out = BTreeSet::new();
        let mut queue = VecDeque::new();
        for s in seeds {
            if out.insert(s.clone()) {
                if let Some(&ix) = self.index.get(s) {
                    queue.push_back(ix);
                }
            }
        }
        while let Some(n) = queue.pop_front() {
            for &m in &self.nodes[n as usize].enables {
                if out.insert(self.nodes[m as usize].action.id.clone()) {
                    queue.push_back(m);
                }
            }
        }
        out
    }

    /// A copy holding only the actions accepted by `keep`, the constraints
    /// among them, and their decisions. Commit positions are renumbered in
    /// the original order.
    pub fn restricted(&self, mut keep: impl FnMut(&ActionId) -> bool) -> Acg {
        let mut out = Acg::new();
        let mut kept = BTreeSet::new();
        for n in &self.nodes {
            if keep(&n.action.id) {
                kept.insert(n.action.id.clone());
                out.add_action(n.action.clone()).expect("fresh graph");
            }
        }
        for c in self.active_constraints() {
            if kept.contains(c.a()) && kept.contains(c.b()) {
                out.add_constraint(c.clone());
            }
        }
        for id in &self.commit_order {
            if kept.contains(id) {
                out.mark_committed(id).expect("fresh graph");
            }
        }
        for id in self.aborted() {
            if kept.contains(id) {
                out.mark_aborted(id).expect("fresh graph");
            }
        }
        out
    }

    /// Content equality: same actions, same constraints (active or pending),
    /// same decisions. Insertion order and generation are ignored.
    pub fn same_content(&self, other: &Acg) -> bool {
        let mine: BTreeMap<_, _> = self.nodes.iter().map(|n| (&n.action.id, &n.action)).collect();
        let theirs: BTreeMap<_, _> = other.nodes.iter().map(|n| (&n.action.id, &n.action)).collect();
        mine == theirs
            && self.constraints == other.constraints
            && self.commit_order == other.commit_order
            && self.decisions == other.decisions
    }

    pub(crate) fn ix(&self, id: &ActionId) -> Result<NodeIx, AcgError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| AcgError::UnknownAction(id.clone()))
    }

    pub(crate) fn index_of(&self, id: &ActionId) -> Option<NodeIx> {
        self.index.get(id).copied()
    }

    pub(crate) fn node(&self, ix: NodeIx) -> &Node {
        &self.nodes[ix as usize]
    }

    pub(crate) fn id_at(&self, ix: NodeIx) -> &ActionId {
        &self.nodes[ix as usize].action.id
    }
}

impl PartialEq for Acg {
    fn eq(&self, other: &Self) -> bool {
        self.same_content(other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acg::{derived, Derived};

    fn act(p: &str, t: u64) -> Action {
        Action::new(ActionId::new("d", p, t), "test")
    }

    #[test]
    fn add_to_empty_graph() {
        let mut g = Acg::new();
        assert!(g.add_action(act("p", 1)).unwrap());
        assert_eq!(g.len(), 1);
        assert_eq!(g.constraint_count(), 0);
    }

    #[test]
    fn readding_identical_action_is_a_noop() {
        let mut g = Acg::new();
        g.add_action(act("p", 1)).unwrap();
        let gen = g.generation();
        assert!(!g.add_action(act("p", 1)).unwrap());
        assert_eq!(g.generation(), gen);
    }

    #[test]
    fn divergent_duplicate_is_rejected() {
        let mut g = Acg::new();
        g.add_action(act("p", 1)).unwrap();
        let err = g.add_action(act("p", 1).with_keys([3])).unwrap_err();
        assert!(matches!(err, AcgError::DuplicateDivergent(_)));
    }

    #[test]
    fn pending_constraint_activates_when_action_arrives() {
        // The constraint record from one log is read before the action from another.
        let a1 = act("p", 1);
        let a2 = act("q", 1);
        let c = Constraint::not_after(a1.id.clone(), a2.id.clone());
        let mut g = Acg::new();
        g.add_action(a1.clone()).unwrap();
        g.add_constraint(c.clone());
        assert!(!g.is_active(&c));
        assert_eq!(g.pending_constraints().count(), 1);
        g.add_action(a2.clone()).unwrap();
        assert!(g.is_active(&c));

        let mut direct = Acg::new();
        direct.add_action(a1).unwrap();
        direct.add_action(a2).unwrap();
        direct.add_constraint(c);
        assert_eq!(g, direct);
        assert_eq!(g.node(1).after, direct.node(1).after);
    }

    #[test]
    fn duplicate_constraints_are_stored_once() {
        let mut g = Acg::new();
        let (a, b) = (act("p", 1), act("p", 2));
        g.add_action(a.clone()).unwrap();
        g.add_action(b.clone()).unwrap();
        assert!(g.add_constraint(Constraint::enables(a.id.clone(), b.id.clone())));
        assert!(!g.add_constraint(Constraint::enables(a.id.clone(), b.id.clone())));
        assert!(g.add_constraint(Constraint::non_commuting(b.id.clone(), a.id.clone())));
        assert!(!g.add_constraint(Constraint::non_commuting(a.id.clone(), b.id.clone())));
        assert_eq!(g.constraint_count(), 2);
    }

    #[test]
    fn abort_rules() {
        let mut g = Acg::new();
        let (a, b) = (act("p", 1), act("p", 2));
        g.add_action(a.clone()).unwrap();
        g.add_action(b.clone()).unwrap();
        assert!(g.abort_action(&a.id).unwrap());
        assert!(!g.abort_action(&a.id).unwrap());
        g.mark_committed(&b.id).unwrap();
        assert!(matches!(g.abort_action(&b.id), Err(AcgError::AlreadyCommitted(_))));
        assert!(matches!(
            g.abort_action(&ActionId::new("d", "z", 9)),
            Err(AcgError::UnknownAction(_))
        ));
    }

    #[test]
    fn concurrency() {
        let mut g = Acg::new();
        let p3 = act("p", 3);
        let p5 = act("p", 5);
        let q1 = act("q", 1);
        let r1 = act("r", 1);
        for a in [&p3, &p5, &q1, &r1] {
            g.add_action(a.clone()).unwrap();
        }
        assert!(!g.concurrent(&p3.id, &p5.id).unwrap());
        assert!(g.concurrent(&p3.id, &q1.id).unwrap());
        for c in derived(Derived::Causal, &q1.id, &r1.id) {
            g.add_constraint(c);
        }
        assert!(!g.concurrent(&q1.id, &r1.id).unwrap());
        assert!(!g.concurrent(&r1.id, &q1.id).unwrap());
        // NotAfter alone does not establish causality.
        g.add_constraint(Constraint::not_after(p3.id.clone(), q1.id.clone()));
        assert!(g.concurrent(&p3.id, &q1.id).unwrap());
    }

    #[test]
    fn enables_closure_follows_chains() {
        let mut g = Acg::new();
        let ids: Vec<_> = (1..=4).map(|t| act("p", t)).collect();
        for a in &ids {
            g.add_action(a.clone()).unwrap();
        }
        g.add_constraint(Constraint::enables(ids[0].id.clone(), ids[1].id.clone()));
        g.add_constraint(Constraint::enables(ids[1].id.clone(), ids[2].id.clone()));
        let closure = g.enables_closure([&ids[0].id]);
        assert_eq!(closure.len(), 3);
        assert!(!closure.contains(&ids[3].id));
    }

    #[test]
    fn unknown_enablers_are_tracked() {
        let a = ActionId::new("x", "p", 1);
        let b = ActionId::new("y", "p", 1);
        for a_first in [false, true] {
            let mut g = Acg::new();
            let c = Constraint::enables(a.clone(), b.clone());
            if a_first {
                g.add_constraint(c.clone());
                g.add_action(Action::new(b.clone(), "t")).unwrap();
            } else {
                g.add_action(Action::new(b.clone(), "t")).unwrap();
                g.add_constraint(c.clone());
            }
            assert!(g.has_unknown_enabler(&b));
            g.add_action(Action::new(a.clone(), "t")).unwrap();
            assert!(!g.has_unknown_enabler(&b));
            assert!(!g.has_unknown_enabler(&a));
        }
    }
}
