//! The soundness predicate.
//!
//! This is the reference oracle for every schedule produced elsewhere in the
//! crate, so it only uses the public surface of [`Acg`] and checks each rule
//! literally, without sharing code with the scheduler.

use std::collections::{HashMap, HashSet};

use super::constraint::ConstraintKind;
use super::graph::{Acg, Decided};
use super::ids::ActionId;
use super::AcgError;

/// Why a schedule is not sound. Returned by [`check_sound`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Duplicate(ActionId),
    /// `NotAfter(a, b)` with `b` placed before `a`.
    Order {
        a: ActionId,
        b: ActionId,
    },
    SelfExcluded(ActionId),
    /// `Enables(a, b)` with `b` present and `a` missing.
    MissingEnabler {
        a: ActionId,
        b: ActionId,
    },
    Aborted(ActionId),
    /// Committed members are not a leading segment in commit order.
    CommittedOrder(ActionId),
}

/// True iff `order` is a sound schedule of `acg`.
pub fn is_sound(acg: &Acg, order: &[ActionId]) -> Result<bool, AcgError> {
    Ok(check_sound(acg, order)?.is_none())
}

/// Like [`is_sound`] but reports the first violation found.
pub fn check_sound(acg: &Acg, order: &[ActionId]) -> Result<Option<Violation>, AcgError> {
    let mut pos: HashMap<&ActionId, usize> = HashMap::with_capacity(order.len());
    for (i, id) in order.iter().enumerate() {
        if !acg.contains(id) {
            return Err(AcgError::UnknownAction(id.clone()));
        }
        if pos.insert(id, i).is_some() {
            return Ok(Some(Violation::Duplicate(id.clone())));
        }
    }

    for c in acg.active_constraints() {
        let (a, b) = (c.a(), c.b());
        match c.kind() {
            ConstraintKind::NotAfter if a == b => {
                if pos.contains_key(a) {
                    return Ok(Some(Violation::SelfExcluded(a.clone())));
                }
            }
            ConstraintKind::NotAfter => {
                if let (Some(pa), Some(pb)) = (pos.get(a), pos.get(b)) {
                    if pa > pb {
                        return Ok(Some(Violation::Order {
                            a: a.clone(),
                            b: b.clone(),
                        }));
                    }
                }
            }
            ConstraintKind::Enables => {
                if pos.contains_key(b) && !pos.contains_key(a) {
                    return Ok(Some(Violation::MissingEnabler {
                        a: a.clone(),
                        b: b.clone(),
                    }));
                }
            }
            ConstraintKind::NonCommuting => {}
        }
    }

    // Decisions: aborted actions are absent; the committed members of the
    // schedule are exactly the first k known committed actions, in commit
    // order, ahead of every tentative action.
    let known_committed: Vec<&ActionId> = acg.commit_order().iter().filter(|id| acg.contains(id)).collect();
    let mut expected = known_committed.iter();
    let mut tentative_seen = false;
    for id in order {
        match acg.decision(id) {
            Some(Decided::Aborted) => return Ok(Some(Violation::Aborted(id.clone()))),
            Some(Decided::Committed(_)) => {
                if tentative_seen || expected.next() != Some(&id) {
                    return Ok(Some(Violation::CommittedOrder(id.clone())));
                }
            }
            None => tentative_seen = true,
        }
    }
    Ok(None)
}

/// True iff `order` cannot be extended by inserting any single absent,
/// non-aborted action at any position without losing soundness.
pub fn is_maximal(acg: &Acg, order: &[ActionId]) -> Result<bool, AcgError> {
    let present: HashSet<&ActionId> = order.iter().collect();
    for id in acg.action_ids() {
        if present.contains(id) || acg.is_aborted(id) {
            continue;
        }
        for at in 0..=order.len() {
            let mut candidate = Vec::with_capacity(order.len() + 1);
            candidate.extend_from_slice(&order[..at]);
            candidate.push(id.clone());
            candidate.extend_from_slice(&order[at..]);
            if is_sound(acg, &candidate)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acg::{derived, Action, Constraint, Derived};

    fn graph(n: u64) -> (Acg, Vec<ActionId>) {
        let mut g = Acg::new();
        let ids: Vec<_> = (1..=n).map(|t| ActionId::new("d", "p", t)).collect();
        for id in &ids {
            g.add_action(Action::new(id.clone(), "t")).unwrap();
        }
        (g, ids)
    }

    #[test]
    fn empty_schedule_is_sound() {
        let (g, _) = graph(3);
        assert!(is_sound(&g, &[]).unwrap());
    }

    #[test]
    fn not_after_forbids_reverse_order() {
        let (mut g, ids) = graph(2);
        let (a, b) = (ids[0].clone(), ids[1].clone());
        g.add_constraint(Constraint::not_after(a.clone(), b.clone()));
        assert!(!is_sound(&g, &[b.clone(), a.clone()]).unwrap());
        assert!(is_sound(&g, &[a.clone(), b.clone()]).unwrap());
        assert!(is_sound(&g, std::slice::from_ref(&b)).unwrap());
        assert!(is_sound(&g, &[a]).unwrap());
    }

    #[test]
    fn enables_requires_enabler() {
        let (mut g, ids) = graph(2);
        let (a, b) = (ids[0].clone(), ids[1].clone());
        g.add_constraint(Constraint::enables(a.clone(), b.clone()));
        g.abort_action(&a).unwrap();
        assert!(!is_sound(&g, std::slice::from_ref(&b)).unwrap());
        assert!(!is_sound(&g, &[a.clone(), b.clone()]).unwrap());
        assert!(is_sound(&g, &[]).unwrap());
    }

    #[test]
    fn antagonism_excludes_pairs() {
        let (mut g, ids) = graph(2);
        for c in derived(Derived::Antagonism, &ids[0], &ids[1]) {
            g.add_constraint(c);
        }
        assert!(!is_sound(&g, &[ids[0].clone(), ids[1].clone()]).unwrap());
        assert!(!is_sound(&g, &[ids[1].clone(), ids[0].clone()]).unwrap());
        assert!(is_sound(&g, &[ids[1].clone()]).unwrap());
    }

    #[test]
    fn committed_actions_lead_in_order() {
        let (mut g, ids) = graph(3);
        g.mark_committed(&ids[1]).unwrap();
        g.mark_committed(&ids[0]).unwrap();
        assert!(is_sound(&g, &[ids[1].clone(), ids[0].clone(), ids[2].clone()]).unwrap());
        assert!(!is_sound(&g, &[ids[0].clone(), ids[1].clone()]).unwrap());
        assert!(!is_sound(&g, &[ids[2].clone(), ids[1].clone()]).unwrap());
        // Skipping the first committed action breaks the prefix.
        assert!(!is_sound(&g, &[ids[0].clone()]).unwrap());
        assert!(is_sound(&g, &[ids[1].clone()]).unwrap());
        g.mark_aborted(&ids[2]).unwrap();
        assert!(!is_sound(&g, &[ids[1].clone(), ids[0].clone(), ids[2].clone()]).unwrap());
    }

    #[test]
    fn unknown_action_is_an_error() {
        let (g, _) = graph(1);
        assert!(is_sound(&g, &[ActionId::new("d", "x", 1)]).is_err());
    }

    #[test]
    fn maximality() {
        let (mut g, ids) = graph(3);
        for c in derived(Derived::Antagonism, &ids[0], &ids[1]) {
            g.add_constraint(c);
        }
        assert!(is_maximal(&g, &[ids[0].clone(), ids[2].clone()]).unwrap());
        assert!(!is_maximal(&g, &[ids[0].clone()]).unwrap());
    }
}
